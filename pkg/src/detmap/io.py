"""Embedding and label files.

Text embeddings: one sample per line, comma-separated numbers.

Binary embeddings (``EMB1``): a 16 byte header followed by row-major
little-endian float64 values::

    offset 0   4 bytes   magic b"EMB1"
    offset 4   uint32    rows
    offset 8   uint32    dim
    offset 12  4 bytes   reserved, zero
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import EvaluationError

MAGIC = b"EMB1"
HEADER = struct.Struct("<4sII4s")
FORMATS = ("text", "binary")


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_text(text: str, path) -> np.ndarray:
    rows = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r")
        fields = line.split(",")
        try:
            row = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise EvaluationError(f"{path}:{lineno}: malformed field {bad!r}") from None
        if rows and len(row) != len(rows[0]):
            raise EvaluationError(
                f"{path}:{lineno}: expected {len(rows[0])} fields, found {len(row)}")
        if not all(np.isfinite(row)):
            raise EvaluationError(f"{path}:{lineno}: non-finite value")
        rows.append(row)
    if not rows:
        raise EvaluationError(f"{path}: no embeddings")
    return np.array(rows, dtype=np.float64)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_binary(data: bytes, path) -> np.ndarray:
    if len(data) < HEADER.size:
        raise EvaluationError(f"{path}: truncated header")
    magic, rows, dim, reserved = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise EvaluationError(f"{path}: bad magic {magic!r}")
    if reserved != b"\0\0\0\0":
        raise EvaluationError(f"{path}: reserved header bytes must be zero")
    if rows < 1 or dim < 1:
        raise EvaluationError(f"{path}: empty matrix {rows}x{dim}")
    expected = HEADER.size + rows * dim * 8
    if len(data) != expected:
        raise EvaluationError(f"{path}: expected {expected} bytes for {rows}x{dim}, got {len(data)}")
    arr = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(rows, dim)
    bad = ~np.isfinite(arr)
    if bad.any():
        raise EvaluationError(f"{path}: non-finite value in row {int(np.argwhere(bad)[0, 0])}")
    return arr.astype(np.float64)


def load_embeddings(path, format: str = "text") -> np.ndarray:
    if format == "text":
        with open(path, encoding="utf-8") as fh:
            return _parse_text(fh.read(), path)
    if format == "binary":
        with open(path, "rb") as fh:
            return _parse_binary(fh.read(), path)
    raise EvaluationError(f"unknown embedding format {format!r}")


def save_embeddings(path, values, format: str = "binary") -> None:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise EvaluationError("embeddings must be 2-D")
    if format == "binary":
        header = HEADER.pack(MAGIC, arr.shape[0], arr.shape[1], b"\0\0\0\0")
        atomic_write(path, header + arr.astype("<f8").tobytes(order="C"))
    elif format == "text":
        lines = [",".join(repr(float(x)) for x in row) for row in arr]
        atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))
    else:
        raise EvaluationError(f"unknown embedding format {format!r}")


def load_labels(path) -> list[str]:
    """One label per line, UTF-8. Blank lines are errors."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EvaluationError(f"{path}: no labels")
    labels = []
    for lineno, line in enumerate(lines, start=1):
        token = line.rstrip("\r").strip()
        if not token:
            raise EvaluationError(f"{path}:{lineno}: empty label")
        labels.append(token)
    return labels
