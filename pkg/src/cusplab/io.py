"""Tensor-field files and CSV tables.

Binary layout: magic ``CUSPTF01``, a little-endian uint32 header length,
a UTF-8 JSON header, then the coefficient arrays (complex128, C order):
``coeffs`` always, followed by ``d1`` and ``d2`` when the header lists them.
"""

import csv
import json
import math
import struct

import numpy as np

from .errors import DataError
from .geometry import FlatTorusMetric
from .grid import RadialGrid
from .tensor import COMPONENTS, RadialTensorField, TensorField

MAGIC = b"CUSPTF01"
FORMAT_VERSION = 1


def save_tensor_field(path, h):
    """Write a TensorField (radial fields are stored with K=0)."""
    if isinstance(h, RadialTensorField):
        h = TensorField.from_radial(h, FlatTorusMetric.square())
    arrays = ["coeffs"] + [n for n in ("d1", "d2") if getattr(h, n) is not None]
    header = {"version": FORMAT_VERSION, "R": h.grid.R, "dr": h.grid.dr, "n": h.grid.n,
              "K": h.K, "gram": h.flat.gram.tolist(), "components": list(COMPONENTS),
              "arrays": arrays, "dtype": "<c16", "shape": list(h.coeffs.shape)}
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for name in arrays:
            fh.write(np.ascontiguousarray(getattr(h, name), dtype="<c16").tobytes())


def load_tensor_field(path):
    """Read a file written by :func:`save_tensor_field`."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: not a tensor-field file")
        (length,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(length).decode("utf-8"))
        except ValueError as exc:
            raise DataError(f"{path}: corrupt header") from exc
        if header.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {header.get('version')}")
        shape = tuple(header["shape"])
        count = int(np.prod(shape))
        arrays = {}
        for name in header["arrays"]:
            raw = fh.read(16 * count)
            if len(raw) != 16 * count:
                raise DataError(f"{path}: truncated array {name}")
            arrays[name] = np.frombuffer(raw, dtype="<c16").reshape(shape)
    grid = RadialGrid(header["R"], header["dr"])
    flat = FlatTorusMetric(np.array(header["gram"]))
    return TensorField(grid, flat, arrays["coeffs"], arrays.get("d1"), arrays.get("d2"))


def write_radial_csv(path, h):
    """Radial slice table: ``r``, the six components and ``|h|`` per node."""
    if isinstance(h, TensorField):
        from .tensor import average

        h = average(h)
    norm = h.norm()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", *COMPONENTS, "norm"])
        for i, r in enumerate(h.r):
            w.writerow([_fmt(r), *(_fmt(x) for x in h.values[:, i]), _fmt(norm[i])])


def read_radial_csv(path):
    """Inverse of :func:`write_radial_csv` (derivatives by finite differences)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:7] != ["r", *COMPONENTS]:
        raise DataError(f"{path}: unexpected header")
    data = np.array([[float(x) for x in row[:7]] for row in rows[1:]])
    r = data[:, 0]
    dr = r[1] - r[0]
    grid = RadialGrid(float(round(r[-1] / dr) * dr), float(dr))
    return RadialTensorField(grid, data[:, 1:].T)


def write_table(path, header, rows):
    """CSV with a header row; ``rows`` are dicts keyed by header names."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in header])


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def json_safe(x):
    """Nested structure with numpy scalars and arrays converted for JSON.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` or ``"nan"``.
    """
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.ndarray):
        return json_safe(x.tolist())
    if isinstance(x, dict):
        return {str(k): json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    return x


def write_json(path, data):
    """Sorted, indented JSON with a trailing newline."""
    text = json.dumps(json_safe(data), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
