"""File formats: binary tensors, CSV matrices, PGM heatmaps, flat configs.

The tensor container ("BTF") stores a magic string, an 8-bit dimension
count, little-endian 32-bit dims and a little-endian float32 payload in
band-sequential order (channel k, then row l1, then column l2).  All
writers go through a write-temp-then-rename step so files are atomic,
and every emitted byte is a pure function of the inputs.
"""

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError, InputError
from .tensor import as_mat, as_tensor3

__all__ = [
    "read_btf",
    "write_btf",
    "read_csv_matrix",
    "write_csv_matrix",
    "write_heatmap",
    "read_config",
    "atomic_write_bytes",
]

MAGIC = b"BTF1"


def atomic_write_bytes(path, payload):
    """Write bytes to ``path`` via a temp file + rename in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gqmu-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_btf(path, t):
    """Serialize a 3-way tensor (float32 payload, band-sequential order)."""
    t = as_tensor3(t)
    l1, l2, k = t.shape
    header = MAGIC + struct.pack("<B", 3) + struct.pack("<3I", l1, l2, k)
    payload = np.ascontiguousarray(
        t.transpose(2, 0, 1), dtype="<f4"
    ).tobytes()
    atomic_write_bytes(path, header + payload)


def read_btf(path):
    """Read a tensor written by :func:`write_btf`; errors carry byte offsets."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(
            f"bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0
        )
    if len(blob) < 5:
        raise FormatError("file ends before the dimension count", offset=4)
    ndims = blob[4]
    if ndims != 3:
        raise FormatError(f"expected 3 dims, file declares {ndims}", offset=4)
    dims_end = 5 + 4 * ndims
    if len(blob) < dims_end:
        raise FormatError("file ends inside the dimension list", offset=len(blob))
    dims = struct.unpack("<3I", blob[5:dims_end])
    count = 1
    for d in dims:
        if d == 0:
            raise FormatError(f"zero-sized dimension in {dims}", offset=5)
        count *= d
    if count > 2**40:
        raise FormatError(f"dimension product {count} overflows sanity bound", offset=5)
    expected = dims_end + 4 * count
    if len(blob) != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes total, "
            f"got {len(blob)}",
            offset=min(len(blob), expected),
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=dims_end, count=count)
    l1, l2, k = dims
    return flat.astype(np.float64).reshape(k, l1, l2).transpose(1, 2, 0).copy()


def write_csv_matrix(path, m):
    """Plain comma-separated rows, no header; floats use shortest repr."""
    m = as_mat(m)
    lines = [",".join(repr(float(v)) for v in row) for row in m]
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_csv_matrix(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"line {lineno} is not numeric CSV: {exc}") from exc
    if not rows:
        raise FormatError("empty CSV matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError("ragged CSV matrix")
    m = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise FormatError("CSV matrix contains non-finite values")
    return m


def write_heatmap(path, image, scale=1.0):
    """16-bit binary PGM of one channel, mapping [0, scale] to [0, 65535]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InputError(f"heatmap needs a 2-D image, got ndim={image.ndim}")
    if not np.all(np.isfinite(image)):
        raise InputError("heatmap values must be finite")
    if scale <= 0:
        raise InputError("heatmap scale must be positive")
    levels = np.clip(image / scale, 0.0, 1.0)
    samples = np.round(levels * 65535.0).astype(">u2")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode("ascii")
    atomic_write_bytes(path, header + samples.tobytes())


def read_config(path):
    """Flat ``key = value`` file; later keys win, '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"config line {lineno} is not 'key = value': {raw!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
