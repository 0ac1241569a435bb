"""Path lengths from partition sums and constrained chain metrics for dbar estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .chains import _check_eps, graph_rows
from .core import METRIC_FUNCS, SparsePoint
from .generators import slit_admissible

MAX_DEPTH = 24


def _as_point(v) -> SparsePoint:
    if isinstance(v, SparsePoint):
        return v
    return SparsePoint.dense(*np.atleast_1d(np.asarray(v, dtype=float)))


def _metric_fn(metric) -> Callable:
    if callable(metric):
        return metric
    try:
        fn = METRIC_FUNCS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; use 'sup', 'euclidean' or a callable") from None
    return lambda a, b: fn(_as_point(a), _as_point(b))


def polyline_length(path: Sequence, metric="euclidean") -> float:
    """Sum of consecutive distances along the vertices of ``path``.

    ``metric`` is ``"sup"``, ``"euclidean"``, a callable on two vertices, or
    a space, in which case the vertices are point ids of that space.
    """
    if len(path) < 1:
        raise ValueError("a path needs at least one vertex")
    if hasattr(metric, "distance"):
        dist = metric.distance
    else:
        dist = _metric_fn(metric)
    return float(math.fsum(dist(a, b) for a, b in zip(path, path[1:])))


@dataclass
class RefinedLength:
    value: float
    partitions: int
    depth: int
    converged: bool


def refine_length(sampler: Callable[[float], object], tol: float = 1e-9, metric="euclidean",
                  max_depth: int = MAX_DEPTH) -> RefinedLength:
    """Length of t -> sampler(t) on [0, 1] from dyadic partition sums.

    Halves the mesh until a refinement adds at most ``tol``.  Past
    ``max_depth`` the last sum is returned as a lower bound with
    ``converged=False``.
    """
    dist = _metric_fn(metric)
    pts = [sampler(0.0), sampler(1.0)]
    prev = dist(pts[0], pts[1])
    for depth in range(1, max_depth + 1):
        n = 2 ** depth
        mids = [sampler((2 * j + 1) / n) for j in range(n // 2)]
        merged = [None] * (n + 1)
        merged[0::2] = pts
        merged[1::2] = mids
        pts = merged
        cur = math.fsum(dist(a, b) for a, b in zip(pts, pts[1:]))
        if cur - prev <= tol:
            return RefinedLength(cur, n, depth, True)
        prev = cur
    return RefinedLength(prev, 2 ** max_depth, max_depth, False)


# -- constrained chains -----------------------------------------------------

# An admissibility predicate maps (space, ids_a, ids_b) to a boolean array.
Predicate = Callable[[object, np.ndarray, np.ndarray], np.ndarray]


def always(space, a, b):
    return np.ones(np.shape(a), dtype=bool)


def y_admissible(space, a, b):
    """Steps stay on one spine, or touch q from anywhere but p."""
    meta = np.asarray([m[0] for m in space.meta])
    p, q = space["p"], space["q"]
    a, b = np.asarray(a), np.asarray(b)
    same = meta[a] == meta[b]
    via_q = ((a == q) & (b != p)) | ((b == q) & (a != p))
    return same | via_q


PREDICATES: dict[str, Predicate] = {
    "slit-plane": slit_admissible,
    "y-spider": y_admissible,
}


def predicate_for(space) -> Predicate:
    try:
        return PREDICATES[space.generator]
    except KeyError:
        raise ValueError(f"no admissibility predicate for generator {space.generator!r}") from None


def constrained_graph(space, eps: float, pred: Predicate) -> sparse.csr_matrix:
    """The eps-graph with inadmissible steps removed."""
    g = space.epsilon_graph(_check_eps(eps)).tocoo()
    keep = np.asarray(pred(space, g.row, g.col), dtype=bool)
    out = sparse.csr_matrix((g.data[keep], (g.row[keep], g.col[keep])), shape=g.shape)
    out.sort_indices()
    return out


def constrained_chain_metric(space, eps: float, pred: Predicate, sources=None) -> np.ndarray:
    """Chain metric rows using only admissible steps; never below d_eps."""
    return graph_rows(constrained_graph(space, eps, pred), sources)
