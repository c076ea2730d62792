"""Command-line entry point: ``vbunmix {unmix,synth,check,info}``."""
import argparse
import csv
import io
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import checks
from .engine import EngineOptions, run, unmix_image
from .errors import VBUnmixError
from .hsi_io import (AbundanceMap, BandExclusion, apply_band_exclusion, load_endmembers_csv,
                     parse_envi_header, read_envi, renormalize_sum_to_one,
                     write_abundance_outputs)
from .model import Hyperparameters
from .synthetic import generate_instance, nnls_baseline

log = logging.getLogger("vbunmix")

SYNTH_COLUMNS = ("trial", "seed", "vb_rmse", "nnls_rmse", "vb_precision", "vb_recall", "vb_f1",
                 "beta_estimate", "beta_true", "beta_rel_error", "sweeps", "converged",
                 "runtime_s")
DEFAULT_EXCLUSION = "cuprite-1997"
EXCLUDE_HELP = ("1-based bands to drop: a preset name (cuprite-1997, the default), "
                "'none', or ranges such as 1-2,104-113")


def _positive(kind):
    def convert(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return convert


def _formats(text):
    return tuple(f.strip() for f in text.split(",") if f.strip())


def _add_engine_flags(p):
    p.add_argument("--tol", type=_positive(float), default=1e-6)
    p.add_argument("--max-sweeps", type=_positive(int), default=500)
    p.add_argument("--min-sweeps", type=_positive(int), default=5)
    for name in ("rho", "delta", "kappa", "nu"):
        p.add_argument(f"--{name}", type=_positive(float), default=1e-6)


def _engine(args):
    return (Hyperparameters(args.rho, args.delta, args.kappa, args.nu),
            EngineOptions(args.tol, args.max_sweeps, args.min_sweeps))


def build_parser():
    parser = argparse.ArgumentParser(prog="vbunmix", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("unmix", help="unmix an ENVI cube with a known endmember matrix")
    p.add_argument("--header", required=True, type=Path)
    p.add_argument("--cube", required=True, type=Path)
    p.add_argument("--endmembers", required=True, type=Path)
    p.add_argument("--exclude", default=DEFAULT_EXCLUSION, help=EXCLUDE_HELP)
    p.add_argument("--threads", type=_positive(int), default=1)
    p.add_argument("--out", type=Path, default=Path("abundances"))
    p.add_argument("--formats", type=_formats, default=("csv", "pgm"))
    p.add_argument("--renormalize-asc", action="store_true",
                   help="divide each pixel by its abundance sum after inference (not Bayesian)")
    p.add_argument("--scale", type=_positive(float), default=1.0,
                   help="multiply raw cube values by this factor")
    _add_engine_flags(p)

    p = sub.add_parser("synth", help="synthetic recovery benchmark against NNLS")
    p.add_argument("--trials", type=_positive(int), default=100)
    p.add_argument("--bands", type=_positive(int), default=188)
    p.add_argument("--endmembers", type=_positive(int), default=14)
    p.add_argument("--active", type=_positive(int), default=3)
    p.add_argument("--snr", type=float, default=30.0, help="dB; 'inf' for noiseless")
    p.add_argument("--correlation", type=float, default=0.9)
    p.add_argument("--threshold", type=_positive(float), default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="CSV report path (stdout if omitted)")
    _add_engine_flags(p)

    p = sub.add_parser("check", help="run the quadrature and Gibbs oracle suites")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("info", help="summarize a cube header and/or endmember matrix")
    p.add_argument("--header", type=Path)
    p.add_argument("--endmembers", type=Path)
    p.add_argument("--exclude", default=DEFAULT_EXCLUSION, help=EXCLUDE_HELP)
    return parser


def cmd_unmix(args):
    started = time.perf_counter()
    hyper, opts = _engine(args)
    exclusion = BandExclusion.parse(args.exclude)
    header, cube = read_envi(args.header, args.cube, args.scale)
    phi = load_endmembers_csv(args.endmembers.read_text())
    cube, phi = apply_band_exclusion(cube, exclusion, phi)
    log.info("unmixing %d x %d pixels, %d bands, %d endmembers",
             cube.lines, cube.samples, cube.bands, phi.n_endmembers)

    result = unmix_image(cube.data, phi, hyper, opts, threads=args.threads)
    values = result.abundances
    if args.renormalize_asc:
        values = renormalize_sum_to_one(values, result.failed)
    amap = AbundanceMap(values, phi.labels, result.failed)
    write_abundance_outputs(amap, args.out, args.formats)

    n_failed = int(result.failed.sum())
    manifest = io.StringIO()
    entries = {
        "command": "unmix", "header": args.header, "cube": args.cube,
        "endmembers": args.endmembers, "lines": cube.lines, "samples": cube.samples,
        "bands_original": header.bands, "bands_retained": cube.bands,
        "n_endmembers": phi.n_endmembers, "exclude": args.exclude,
        "rho": hyper.rho, "delta": hyper.delta, "kappa": hyper.kappa, "nu": hyper.nu,
        "tolerance": opts.tolerance, "max_sweeps": opts.max_sweeps,
        "min_sweeps": opts.min_sweeps, "threads": args.threads, "scale": args.scale,
        "renormalize_asc": args.renormalize_asc,
        "pixels": result.sweeps.size, "converged_pixels": int(result.converged.sum()),
        "failed_pixels": n_failed,
        "mean_sweeps": float(result.sweeps.mean()),
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    for key, value in entries.items():
        manifest.write(f"{key}={value}\n")
    manifest.write("[sweep_histogram]\nsweeps,pixels\n")
    for k, count in result.sweep_histogram().items():
        manifest.write(f"{k},{count}\n")
    manifest.write("[failed]\nline,sample,sweep,parameter\n")
    for flat, exc in sorted(result.failures.items()):
        line, sample = divmod(flat, cube.samples)
        manifest.write(f"{line},{sample},{exc.sweep},{exc.parameter}\n")
    (args.out / "manifest.txt").write_text(manifest.getvalue())

    if n_failed:
        print(f"vbunmix: {n_failed} pixel(s) failed; see {args.out / 'manifest.txt'}",
              file=sys.stderr)
        return 1
    return 0


def support_scores(estimate, truth, threshold):
    est = estimate > threshold
    act = truth > 0
    tp = int(np.sum(est & act))
    precision = tp / int(est.sum()) if est.any() else 0.0
    recall = tp / int(act.sum()) if act.any() else 1.0
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return precision, recall, f1


def synth_trials(args):
    """Yield one report row per trial (seeds ``seed, seed+1, ...``)."""
    hyper, opts = _engine(args)
    for trial in range(args.trials):
        seed = args.seed + trial
        inst = generate_instance(args.bands, args.endmembers, args.active, args.snr,
                                 args.correlation, seed)
        t0 = time.perf_counter()
        res = run(inst.y, inst.phi, hyper, opts)
        elapsed = time.perf_counter() - t0
        nn = nnls_baseline(inst.y, inst.phi)
        p, r, f1 = support_scores(res.abundances, inst.w_true, args.threshold)
        beta_true = float(inst.noise_precision_true)
        yield {
            "trial": trial, "seed": seed,
            "vb_rmse": float(np.sqrt(np.mean((res.abundances - inst.w_true) ** 2))),
            "nnls_rmse": float(np.sqrt(np.mean((nn - inst.w_true) ** 2))),
            "vb_precision": p, "vb_recall": r, "vb_f1": f1,
            "beta_estimate": res.noise_precision, "beta_true": beta_true,
            "beta_rel_error": (abs(res.noise_precision / beta_true - 1.0)
                               if math.isfinite(beta_true) else math.nan),
            "sweeps": res.report.iterations, "converged": res.report.converged,
            "runtime_s": round(elapsed, 4),
        }


def cmd_synth(args):
    rows = list(synth_trials(args))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SYNTH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for k, v in row.items()})
    if args.out:
        args.out.write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    col = lambda k: np.array([row[k] for row in rows], dtype=float)
    within = int(np.sum(col("beta_rel_error") <= 0.2))
    print(f"trials={len(rows)} vb_rmse={col('vb_rmse').mean():.5f} "
          f"nnls_rmse={col('nnls_rmse').mean():.5f} vb_f1={col('vb_f1').mean():.3f} "
          f"beta_within_20pct={within}", file=sys.stderr)
    return 0


def cmd_check(args):
    results = checks.run_all(inject_fault=args.inject_fault)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_info(args):
    if args.header is None and args.endmembers is None:
        print("vbunmix info: give --header and/or --endmembers", file=sys.stderr)
        return 2
    exclusion = BandExclusion.parse(args.exclude)
    if args.header is not None:
        h = parse_envi_header(args.header.read_text())
        print(f"cube: {h.lines} lines x {h.samples} samples, {h.bands} bands, "
              f"interleave={h.interleave.upper()}, dtype={h.dtype.str}, "
              f"header offset={h.header_offset}")
        print(f"{h.bands} bands, {exclusion.retained(h.bands)} retained "
              f"(exclusion: {args.exclude})")
    if args.endmembers is not None:
        phi = load_endmembers_csv(args.endmembers.read_text())
        print(f"endmembers: M={phi.n_bands}, N={phi.n_endmembers}, "
              f"condition number={phi.condition_number():.4g}")
    return 0


COMMANDS = {"unmix": cmd_unmix, "synth": cmd_synth, "check": cmd_check, "info": cmd_info}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, VBUnmixError) as exc:
        print(f"vbunmix {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
