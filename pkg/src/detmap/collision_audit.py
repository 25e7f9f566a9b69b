"""Near-collision statistics and raster maps for distance matrices.

A collision run is a chain of consecutive sorted distances of one query whose
neighbouring gaps are all below ``threshold``. With an infinitesimal threshold
this reduces to exact ties; larger thresholds make near-ties visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distances import METRICS, pairwise_distances
from .errors import EvaluationError
from .io import atomic_write
from .ranking_metrics import RelevanceMatrix, relevance

NO_COLLISION = 0
COLLISION_RELEVANT = 1
COLLISION_IRRELEVANT = 2

# white background, green relevant, red non-relevant
PALETTE = np.array([[255, 255, 255], [0, 160, 0], [200, 0, 0]], dtype=np.uint8)


@dataclass
class CollisionReport:
    threshold: float
    total_runs: int
    mixed_runs: int
    colliding_cells: int
    per_rank_histogram: np.ndarray
    metric: str | None = None
    precision: str | None = None

    def to_dict(self, histogram: bool = False) -> dict:
        out = {
            "threshold": self.threshold,
            "total_runs": self.total_runs,
            "mixed_runs": self.mixed_runs,
            "colliding_cells": self.colliding_cells,
        }
        if self.metric is not None:
            out["metric"] = self.metric
        if self.precision is not None:
            out["precision"] = self.precision
        if histogram:
            out["per_rank_histogram"] = [int(x) for x in self.per_rank_histogram]
        return out


@dataclass
class CollisionMap:
    """Rows are queries, columns rank positions after self-exclusion."""

    grid: np.ndarray
    row_offset: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.grid.shape


def _ranked(D, R: RelevanceMatrix | None):
    D = np.asarray(D, dtype=np.float64)
    if R is None:
        rel = np.zeros(D.shape, dtype=bool)
        excl = np.zeros(D.shape, dtype=bool)
    else:
        if R.shape != D.shape:
            raise EvaluationError(f"shape mismatch: D {D.shape} vs R {R.shape}")
        rel, excl = R.values, R.excluded
    order = np.lexsort((D, excl), axis=-1)
    d = np.take_along_axis(np.where(excl, np.inf, D), order, axis=1)
    r = np.take_along_axis(rel & ~excl, order, axis=1)
    lengths = (~excl).sum(axis=1)
    return d, r, lengths


def _colliding(d_sorted, lengths, threshold):
    # link[i] marks that sorted positions i and i+1 chain into one run
    with np.errstate(invalid="ignore"):
        link = np.diff(d_sorted, axis=1) < threshold
    valid = np.arange(1, d_sorted.shape[1])[None, :] < lengths[:, None]
    link &= valid
    cells = np.zeros(d_sorted.shape, dtype=bool)
    cells[:, :-1] |= link
    cells[:, 1:] |= link
    return link, cells


def collision_counts(D, R: RelevanceMatrix | None = None, threshold: float = 1e-10,
                     metric: str | None = None, precision: str | None = None) -> CollisionReport:
    """Count collision runs and colliding cells of ``D`` at ``threshold``."""
    if not threshold > 0:
        raise EvaluationError(f"threshold must be positive, got {threshold}")
    d, r, lengths = _ranked(D, R)
    link, cells = _colliding(d, lengths, threshold)

    # a run starts at each cell that is colliding but not linked from the left
    starts = cells.copy()
    starts[:, 1:] &= ~link
    total_runs = int(starts.sum())

    mixed = 0
    for q in np.flatnonzero(starts.any(axis=1)):
        run_id = np.cumsum(starts[q]) * cells[q]
        ids = run_id[cells[q]]
        rel = r[q][cells[q]].astype(np.int64)
        n_rel = np.bincount(ids, weights=rel)
        n_all = np.bincount(ids)
        mixed += int(((n_rel > 0) & (n_rel < n_all)).sum())

    return CollisionReport(
        threshold=float(threshold),
        total_runs=total_runs,
        mixed_runs=mixed,
        colliding_cells=int(cells.sum()),
        per_rank_histogram=cells.sum(axis=0),
        metric=metric,
        precision=precision,
    )


def render_collision_map(D, R: RelevanceMatrix | None = None, threshold: float = 1e-10,
                         skip_rows: int = 0) -> CollisionMap:
    """Three-state grid of colliding cells, optionally dropping the first ``skip_rows`` queries."""
    if not threshold > 0:
        raise EvaluationError(f"threshold must be positive, got {threshold}")
    d, r, lengths = _ranked(D, R)
    _, cells = _colliding(d, lengths, threshold)
    grid = np.full(d.shape, NO_COLLISION, dtype=np.uint8)
    grid[cells & r] = COLLISION_RELEVANT
    grid[cells & ~r] = COLLISION_IRRELEVANT
    # post-exclusion width is the shortest row; longer rows only differ by padding
    width = int(lengths.min())
    return CollisionMap(grid[skip_rows:, :width], row_offset=skip_rows,
                        meta={"threshold": float(threshold)})


def write_pnm(cmap: CollisionMap, path, color: bool = True) -> None:
    """Write the map as binary PPM (P6) or PGM (P5), atomically."""
    h, w = cmap.grid.shape
    if color:
        header = f"P6\n{w} {h}\n255\n".encode("ascii")
        body = PALETTE[cmap.grid].tobytes()
    else:
        gray = np.array([255, 96, 0], dtype=np.uint8)
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        body = gray[cmap.grid].tobytes()
    atomic_write(path, header + body)


def metric_comparison(embeddings, labels, thresholds: dict | float = 1e-10,
                      precision: str = "double", leave_one_out: bool = True) -> dict:
    """One :class:`CollisionReport` per distance metric on the same embeddings.

    ``thresholds`` is either one value for all metrics or a mapping
    ``metric -> threshold``.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if labels is None:
        excl = np.eye(len(emb), dtype=bool) if leave_one_out else np.zeros((len(emb),) * 2, bool)
        R = RelevanceMatrix(np.zeros_like(excl), excl)
    else:
        self_map = range(len(emb)) if leave_one_out else None
        R = relevance(labels, labels, self_map, allow_empty=True)
    reports = {}
    for metric in METRICS:
        t = thresholds[metric] if isinstance(thresholds, dict) else thresholds
        D = pairwise_distances(emb, emb, metric, precision)
        reports[metric] = collision_counts(D, R, t, metric=metric, precision=precision)
    return reports
