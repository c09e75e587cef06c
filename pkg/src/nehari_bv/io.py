"""Plain-text serialization of cell fields.

CSV files hold one row per ``j`` (so a row runs over ``i``) and PGM images
are 8-bit ASCII greymaps with the same orientation, min-max normalized.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .bv_calculus import DiscreteDomain, ScalarField


def field_to_csv(values: np.ndarray) -> str:
    a = np.asarray(values, dtype=float)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for j in range(a.shape[1]):
        writer.writerow([repr(float(x)) for x in a[:, j]])
    return buf.getvalue()


def field_from_csv(text: str, domain: DiscreteDomain | None = None):
    rows = [[float(x) for x in row] for row in csv.reader(io.StringIO(text)) if row]
    a = np.array(rows, dtype=float).T
    if domain is None:
        return a
    return ScalarField(domain, a)


def field_to_pgm(values: np.ndarray) -> str:
    """ASCII (P2) greymap, 0 for the minimum and 255 for the maximum."""
    a = np.asarray(values, dtype=float)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros(a.shape, dtype=int) if hi == lo else np.rint(255.0 * (a - lo) / (hi - lo)).astype(int)
    nx, ny = a.shape
    lines = ["P2", f"{nx} {ny}", "255"]
    lines += [" ".join(str(v) for v in scaled[:, j]) for j in range(ny)]
    return "\n".join(lines) + "\n"


def pgm_to_array(text: str) -> np.ndarray:
    tokens = [t for line in text.splitlines() for t in line.split("#")[0].split()]
    if not tokens or tokens[0] != "P2":
        raise ValueError("not an ASCII PGM (P2) image")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array([int(t) for t in tokens[4:]], dtype=int)
    if data.size != nx * ny or data.min(initial=0) < 0 or data.max(initial=0) > maxval:
        raise ValueError("PGM pixel data does not match its header")
    return data.reshape(ny, nx).T


def flux_to_csv(zx: np.ndarray, zy: np.ndarray) -> tuple[str, str]:
    return field_to_csv(zx), field_to_csv(zy)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_atomic(path: Path, data: str | bytes) -> str:
    """Write through a temporary file in the same directory, then rename.

    Returns the sha256 of the bytes written.
    """
    path = Path(path)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return sha256_bytes(raw)
