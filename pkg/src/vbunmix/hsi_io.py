"""Hyperspectral cube ingestion and abundance-map output.

Supports ENVI text headers with raw BSQ/BIL/BIP binaries (int16 or float32,
either byte order), comma-separated endmember matrices, and per-endmember
CSV + binary PGM (P5) abundance maps.
"""
from dataclasses import dataclass, field
import io
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, ShapeError
from .model import EndmemberMatrix

INTERLEAVES = ("bsq", "bil", "bip")
# ENVI data type code -> numpy kind
DATA_TYPES = {2: "i2", 4: "f4"}
MANDATORY_KEYS = ("samples", "lines", "bands", "interleave", "data type", "byte order")

#: Low-SNR and water-vapour bands dropped from the 1997 AVIRIS Cuprite scene.
EXCLUSION_PRESETS = {
    "cuprite-1997": ((1, 2), (104, 113), (148, 167), (221, 224)),
}


@dataclass(frozen=True)
class EnviHeader:
    samples: int
    lines: int
    bands: int
    interleave: str
    data_type: int
    byte_order: int
    header_offset: int = 0

    @property
    def dtype(self):
        return np.dtype(("<" if self.byte_order == 0 else ">") + DATA_TYPES[self.data_type])

    @property
    def expected_bytes(self):
        return self.header_offset + self.lines * self.samples * self.bands * self.dtype.itemsize


@dataclass(frozen=True)
class HsiCube:
    """Radiance cube addressed as ``data[line, sample, band]``."""

    data: np.ndarray
    interleave: str = "bsq"

    @property
    def lines(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data.shape[1]

    @property
    def bands(self):
        return self.data.shape[2]

    def pixels(self):
        """``(lines * samples, bands)`` view in row-major pixel order."""
        return self.data.reshape(-1, self.bands)


@dataclass(frozen=True)
class BandExclusion:
    """Sorted 1-based band indices to drop."""

    excluded: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "excluded", tuple(sorted(set(int(b) for b in self.excluded))))

    @classmethod
    def parse(cls, spec):
        """Preset name (``cuprite-1997``), ``none``/empty, or ranges like ``1-2,104-113``."""
        spec = (spec or "").strip()
        if spec.lower() in ("", "none"):
            return cls()
        if spec.lower() in EXCLUSION_PRESETS:
            ranges = EXCLUSION_PRESETS[spec.lower()]
            return cls([b for lo, hi in ranges for b in range(lo, hi + 1)])
        bands = []
        for token in spec.split(","):
            token = token.strip()
            lo, sep, hi = token.partition("-")
            try:
                lo_i = int(lo)
                hi_i = int(hi) if sep else lo_i
            except ValueError:
                raise ParseError(f"bad band range {token!r}") from None
            if hi_i < lo_i:
                raise ParseError(f"band range {token!r} is descending")
            bands.extend(range(lo_i, hi_i + 1))
        return cls(bands)

    def keep_mask(self, n_bands):
        """Boolean mask of retained bands; raises on out-of-range indices or if nothing remains."""
        bad = [b for b in self.excluded if not 1 <= b <= n_bands]
        if bad:
            shown = bad if len(bad) <= 6 else bad[:3] + ["..."] + bad[-2:]
            raise DomainError(f"excluded bands {shown} outside [1, {n_bands}]; "
                              "pass --exclude none or a matching band list")
        keep = np.ones(n_bands, dtype=bool)
        keep[np.array(self.excluded, dtype=int) - 1] = False
        if not keep.any():
            raise DomainError("band exclusion removes every band")
        return keep

    def retained(self, n_bands):
        return int(self.keep_mask(n_bands).sum())


def parse_envi_header(text):
    """Parse ENVI ``key = value`` text; keys are case-insensitive and values
    may span lines inside braces. Unknown keys are ignored."""
    fields = {}
    lines = iter(text.splitlines())
    for line in lines:
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        value = value.strip()
        if value.startswith("{"):
            while "}" not in value:
                try:
                    value += " " + next(lines).strip()
                except StopIteration:
                    raise ParseError(f"unterminated brace in header key {key.strip()!r}") from None
        fields[" ".join(key.lower().split())] = value

    for key in MANDATORY_KEYS:
        if key not in fields:
            raise ParseError(f"ENVI header is missing mandatory key {key!r}")

    def integer(key):
        try:
            return int(fields[key])
        except ValueError:
            raise ParseError(f"ENVI header key {key!r} is not an integer: {fields[key]!r}") from None

    interleave = fields["interleave"].strip().lower()
    if interleave not in INTERLEAVES:
        raise ParseError(f"unsupported interleave {fields['interleave']!r}")
    data_type = integer("data type")
    if data_type not in DATA_TYPES:
        raise ParseError(f"unsupported ENVI data type {data_type} (supported: 2=int16, 4=float32)")
    byte_order = integer("byte order")
    if byte_order not in (0, 1):
        raise ParseError(f"byte order must be 0 or 1, got {byte_order}")
    header = EnviHeader(
        samples=integer("samples"),
        lines=integer("lines"),
        bands=integer("bands"),
        interleave=interleave,
        data_type=data_type,
        byte_order=byte_order,
        header_offset=integer("header offset") if "header offset" in fields else 0,
    )
    if min(header.samples, header.lines, header.bands) < 1 or header.header_offset < 0:
        raise ParseError("ENVI dimensions must be positive")
    return header


def load_cube(header, raw, scale=1.0):
    """Decode raw bytes into an :class:`HsiCube` (float64, optionally scaled)."""
    raw = bytes(raw)
    if len(raw) != header.expected_bytes:
        raise ShapeError(f"cube size mismatch: expected {header.expected_bytes} bytes, got {len(raw)}")
    values = np.frombuffer(raw, dtype=header.dtype, offset=header.header_offset)
    nl, ns, nb = header.lines, header.samples, header.bands
    if header.interleave == "bsq":
        data = values.reshape(nb, nl, ns).transpose(1, 2, 0)
    elif header.interleave == "bil":
        data = values.reshape(nl, nb, ns).transpose(0, 2, 1)
    else:
        data = values.reshape(nl, ns, nb)
    data = np.ascontiguousarray(data, dtype=float)
    if scale != 1.0:
        data *= scale
    if not np.isfinite(data).all():
        raise DomainError("cube contains non-finite values")
    return HsiCube(data, header.interleave)


def encode_cube(data, interleave="bsq", dtype="<i2"):
    """Inverse of :func:`load_cube`: raw bytes for a ``(lines, samples, bands)`` array."""
    data = np.asarray(data)
    order = {"bsq": (2, 0, 1), "bil": (0, 2, 1), "bip": (0, 1, 2)}[interleave]
    return np.ascontiguousarray(data.transpose(order)).astype(dtype).tobytes()


def read_envi(header_path, cube_path, scale=1.0):
    header = parse_envi_header(Path(header_path).read_text())
    return header, load_cube(header, Path(cube_path).read_bytes(), scale)


def apply_band_exclusion(cube, exclusion, phi=None):
    """Drop excluded bands from ``cube`` and, when its row count still equals
    the original band count, from ``phi`` as well.

    Returns ``(cube, phi)``; ``phi`` passes through unchanged when it already
    has the reduced row count.
    """
    keep = exclusion.keep_mask(cube.bands)
    reduced = HsiCube(np.ascontiguousarray(cube.data[:, :, keep]), cube.interleave)
    if phi is not None:
        if phi.n_bands == cube.bands:
            phi = phi.select_bands(keep)
        elif phi.n_bands != reduced.bands:
            raise ShapeError(f"endmember matrix has {phi.n_bands} rows; cube has "
                             f"{cube.bands} bands ({reduced.bands} retained)")
    return reduced, phi


def load_endmembers_csv(text, labels=()):
    """Parse an ``M x N`` comma-separated matrix (one band per row)."""
    rows = []
    width = None
    for r, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"row {r} has {len(cells)} columns, expected {width}")
        row = []
        for c, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r} at row {r}, column {c}") from None
        rows.append(row)
    if not rows:
        raise ParseError("endmember CSV is empty")
    return EndmemberMatrix(np.array(rows), labels)


@dataclass
class AbundanceMap:
    """``values[line, sample, endmember]``; failed pixels hold -1 in every slot."""

    values: np.ndarray
    labels: tuple
    failed: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.failed is None:
            self.failed = np.all(self.values < 0, axis=-1)
        if len(self.labels) != self.values.shape[-1]:
            raise ShapeError("one label per endmember required")


def renormalize_sum_to_one(values, failed=None):
    """Divide each valid pixel's abundances by their sum (a post-hoc display
    convenience, not part of the posterior)."""
    out = np.array(values, dtype=float)
    mask = np.ones(out.shape[:-1], dtype=bool) if failed is None else ~failed
    sums = out[mask].sum(axis=-1, keepdims=True)
    out[mask] = np.where(sums > 0, out[mask] / np.where(sums > 0, sums, 1.0), 0.0)
    return out


def to_gray8(plane, invalid=None):
    """Scale a 2-D map linearly so its maximum becomes 255 and 0 stays 0."""
    plane = np.array(plane, dtype=float)
    if invalid is not None:
        plane[invalid] = 0.0
    plane = np.clip(plane, 0.0, None)
    peak = plane.max() if plane.size else 0.0
    if peak <= 0.0:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.rint(plane * (255.0 / peak)).astype(np.uint8)


def write_pgm(path, gray):
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(gray, dtype=np.uint8).tobytes())


def read_pgm(path):
    blob = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4 and pos < len(blob):
        if blob[pos:pos + 1].isspace():
            pos += 1
        elif blob[pos:pos + 1] == b"#":
            pos = blob.find(b"\n", pos) % (len(blob) + 1) + 1
        else:
            start = pos
            while pos < len(blob) and not blob[pos:pos + 1].isspace():
                pos += 1
            tokens.append(blob[start:pos].decode("ascii", "replace"))
    if len(tokens) < 4 or tokens[0] != "P5" or tokens[3] != "255":
        raise ParseError(f"not an 8-bit P5 PGM: {path}")
    try:
        cols, rows = int(tokens[1]), int(tokens[2])
    except ValueError:
        raise ParseError(f"bad PGM dimensions in {path}") from None
    pos += 1
    if len(blob) - pos < rows * cols:
        raise ParseError(f"PGM pixel data truncated: {path}")
    return np.frombuffer(blob, dtype=np.uint8, count=rows * cols, offset=pos).reshape(rows, cols)


def write_csv_matrix(path, matrix):
    np.savetxt(path, matrix, fmt="%.17g", delimiter=",")


def read_csv_matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_abundance_outputs(amap, directory, formats=("csv", "pgm")):
    """Write one CSV and/or PGM per endmember plus an ``outputs.txt`` sidecar.

    PGMs are normalized per map (max -> 255), so they show relative, not
    absolute, abundance; the sidecar records each map's maximum and lists
    failed pixels, which render as 0.

    Returns the list of written paths.
    """
    formats = tuple(f.lower() for f in formats)
    unknown = set(formats) - {"csv", "pgm"}
    if unknown:
        raise DomainError(f"unknown output formats {sorted(unknown)}")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    meta = io.StringIO()
    meta.write(f"lines={amap.values.shape[0]}\nsamples={amap.values.shape[1]}\n")
    meta.write("pgm_scaling=per-map maximum mapped to 255; values are relative\n")
    for k, label in enumerate(amap.labels):
        plane = amap.values[:, :, k]
        valid = plane[~amap.failed]
        meta.write(f"max[{label}]={float(valid.max()) if valid.size else 0.0!r}\n")
        if "csv" in formats:
            path = d / f"abundance_{label}.csv"
            write_csv_matrix(path, plane)
            written.append(path)
        if "pgm" in formats:
            path = d / f"abundance_{label}.pgm"
            write_pgm(path, to_gray8(plane, amap.failed))
            written.append(path)
    failed = np.argwhere(amap.failed)
    meta.write(f"failed_pixels={len(failed)}\n")
    meta.write("[failed]\nline,sample\n")
    for line, sample in failed:
        meta.write(f"{line},{sample}\n")
    sidecar = d / "outputs.txt"
    sidecar.write_text(meta.getvalue())
    written.append(sidecar)
    return written
