"""Pairwise distance matrices between query and database embeddings.

Every entry is computed pair by pair in double precision. The optional
``single`` precision mode then rounds each finished distance to the nearest
float32 value, which emulates the quantised distances produced by 32 bit
pipelines without changing how the distance itself is accumulated.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EvaluationError

METRICS = ("euclidean", "cosine", "cityblock")
PRECISIONS = ("double", "single")

_PRECISION_ALIASES = {
    "double": "double",
    "single": "single",
    "emulated-single": "single",
    "float64": "double",
    "float32": "single",
}


def as_embeddings(values, name: str = "embeddings") -> np.ndarray:
    """Validate and return a 2-D float64 embedding matrix (one row per sample)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise EvaluationError(f"{name}: expected a 2-D matrix, got {arr.ndim} dimensions")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise EvaluationError(f"{name}: empty matrix of shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise EvaluationError(f"{name}: non-finite value in row {row}")
    return arr


def normalize_precision(precision: str) -> str:
    try:
        return _PRECISION_ALIASES[precision]
    except KeyError:
        raise EvaluationError(f"unknown precision mode {precision!r}") from None


def _row_ids(a: np.ndarray, b: np.ndarray):
    # +0.0 folds -0.0 into 0.0 so that numerically identical rows share an id
    ids: dict[bytes, int] = {}
    qa = np.array([ids.setdefault((r + 0.0).tobytes(), len(ids)) for r in a])
    qb = np.array([ids.setdefault((r + 0.0).tobytes(), len(ids)) for r in b])
    return qa, qb


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # einsum without optimisation runs its own sequential C loops: no BLAS,
    # so every cell is reproducible independent of threading
    dots = np.einsum("ij,kj->ik", a, b, optimize=False)
    na = np.einsum("ij,ij->i", a, a, optimize=False)
    nb = np.einsum("ij,ij->i", b, b, optimize=False)
    denom = np.sqrt(na[:, None] * nb[None, :])
    out = np.ones_like(dots)
    nz = denom > 0
    out[nz] = 1.0 - dots[nz] / denom[nz]
    # zero vs zero is 0, zero vs non-zero stays at 1
    out[(na[:, None] == 0) & (nb[None, :] == 0)] = 0.0
    return np.clip(out, 0.0, 2.0)


def pairwise_distances(queries, database, metric: str = "euclidean",
                       precision: str = "double") -> np.ndarray:
    """Distance matrix ``D`` of shape (Q, K) between queries and database rows.

    Args:
        queries: (Q, n) embeddings.
        database: (K, n) embeddings.
        metric: one of ``euclidean``, ``cosine`` or ``cityblock``. Cosine is
            ``1 - a.b / (|a| |b|)`` with the zero-norm convention zero/zero -> 0
            and zero/non-zero -> 1.
        precision: ``double`` or ``single`` (alias ``emulated-single``).

    Returns:
        float64 array. Bitwise-identical rows always have distance exactly 0.
    """
    q = as_embeddings(queries, "queries")
    k = as_embeddings(database, "database")
    if q.shape[1] != k.shape[1]:
        raise EvaluationError(
            f"dimension mismatch: queries have {q.shape[1]} columns, database has {k.shape[1]}")
    precision = normalize_precision(precision)

    if metric == "euclidean":
        d = cdist(q, k, "euclidean")
    elif metric == "cityblock":
        d = cdist(q, k, "cityblock")
    elif metric == "cosine":
        d = _cosine(q, k)
    else:
        raise EvaluationError(f"unknown metric {metric!r}; expected one of {METRICS}")

    qa, qb = _row_ids(q, k)
    d[qa[:, None] == qb[None, :]] = 0.0

    if precision == "single":
        d = d.astype(np.float32).astype(np.float64)
    return d
