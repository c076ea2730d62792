"""Committed reference data shipped with the package."""
from importlib import resources
from pathlib import Path

import numpy as np

from .synthetic import (GibbsResult, generate_instance, gibbs_sample, load_instance,
                        read_manifest, save_instance)

GIBBS_FIXTURE = "gibbs_m20_n5"
SYNTH_FIXTURE = "synth_m188_n14_seed1"

#: Parameters of the committed instances: (M, N, K, snr_db, correlation, seed).
FIXTURE_PARAMS = {
    GIBBS_FIXTURE: (20, 5, 2, 30.0, 0.5, 1),
    SYNTH_FIXTURE: (188, 14, 3, 30.0, 0.9, 1),
}
GIBBS_SETTINGS = dict(n_samples=50_000, burn_in=5_000, seed=2024)


def fixture_dir(name):
    return Path(resources.files("vbunmix") / "data" / "fixtures" / name)


def load_fixture(name):
    return load_instance(fixture_dir(name))


def load_gibbs_reference():
    meta = read_manifest(fixture_dir(GIBBS_FIXTURE) / "gibbs.txt")
    vec = lambda key: np.array([float(v) for v in meta[key].split(",")])
    return GibbsResult(
        mean_w=vec("mean_w"), var_w=vec("var_w"), se_w=vec("se_w"),
        mean_beta=float(meta["mean_beta"]), se_beta=float(meta["se_beta"]),
        n_samples=int(meta["n_samples"]),
    )


def write_gibbs_reference(result, path, settings):
    fmt = lambda arr: ",".join(repr(float(v)) for v in arr)
    lines = [f"{k}={v}" for k, v in settings.items()]
    lines += [f"mean_w={fmt(result.mean_w)}", f"var_w={fmt(result.var_w)}",
              f"se_w={fmt(result.se_w)}", f"mean_beta={result.mean_beta!r}",
              f"se_beta={result.se_beta!r}"]
    Path(path).write_text("\n".join(lines) + "\n")


def regenerate(root=None):
    """Rebuild every committed fixture from its seed."""
    for name, params in FIXTURE_PARAMS.items():
        target = Path(root) / name if root else fixture_dir(name)
        inst = generate_instance(*params)
        save_instance(inst, target)
        if name == GIBBS_FIXTURE:
            g = gibbs_sample(inst.y, inst.phi, **GIBBS_SETTINGS)
            write_gibbs_reference(g, target / "gibbs.txt", GIBBS_SETTINGS)
