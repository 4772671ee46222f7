"""Parameter checkpoint I/O.

Plain-text format, one record per named array:

    MFUSE1
    <name> <ndim> <d1> ... <dk>
    <v1> <v2> ... (row-major, repr'd float64, exact round-trip)

Records appear in sorted name order so identical parameter sets serialize to
identical bytes.
"""

from __future__ import annotations

import hashlib

import numpy as np

MAGIC = "MFUSE1"


class CheckpointError(Exception):
    pass


def save_arrays(path, arrays):
    """Write name -> ndarray mappings; Tensors may be passed (data is taken)."""
    with open(path, "w") as fh:
        fh.write(MAGIC + "\n")
        for name in sorted(arrays):
            value = arrays[name]
            arr = np.asarray(getattr(value, "data", value), dtype=np.float64)
            if any(ch.isspace() for ch in name) or not name:
                raise CheckpointError(f"invalid parameter name {name!r}")
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {arr.ndim}{' ' + dims if dims else ''}\n")
            fh.write(" ".join(repr(float(v)) for v in arr.reshape(-1)) + "\n")


def load_arrays(path):
    """Read a checkpoint back into a name -> ndarray dict."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise CheckpointError(f"{path}: missing {MAGIC} header")
    arrays = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        header = lines[i].split()
        if len(header) < 2:
            raise CheckpointError(f"{path}: malformed record header at line {i + 1}")
        name, ndim = header[0], int(header[1])
        if len(header) != 2 + ndim:
            raise CheckpointError(f"{path}: header dim count mismatch at line {i + 1}")
        shape = tuple(int(d) for d in header[2:])
        if i + 1 >= len(lines):
            raise CheckpointError(f"{path}: truncated record for {name!r}")
        values = np.array([float(v) for v in lines[i + 1].split()])
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"{path}: value count mismatch for {name!r}")
        arrays[name] = values.reshape(shape)
        i += 2
    return arrays


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
