"""epsilon-chains: neighbor queries, chain metrics d_eps, d0 estimates and iterates."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .core import EXACT_TOL, INF, DistanceMatrix, compare_metrics, validate_metric
from .space import _symmetric_csr, eps_cut

# smallest eps allowed per unit of sample resolution when estimating d0
FLOOR_FACTOR = 3.0


class UnreachableError(ValueError):
    """No eps-chain joins the requested points."""


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("CHAINMETRIC_THREADS", "1")))
    except ValueError:
        return 1


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0 or math.isnan(eps):
        raise ValueError(f"eps must be positive, got {eps!r}")
    return eps


def epsilon_neighbors(space, x: int, eps: float) -> list[tuple[int, float]]:
    """Points y != x with d(x, y) <= eps, ascending by id, with their distances."""
    g = space.epsilon_graph(_check_eps(eps))
    lo, hi = g.indptr[x], g.indptr[x + 1]
    return [(int(j), float(w)) for j, w in zip(g.indices[lo:hi], g.data[lo:hi])]


def _as_sources(n: int, sources) -> np.ndarray:
    if sources is None:
        return np.arange(n)
    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if src.size and (src.min() < 0 or src.max() >= n):
        raise IndexError("source id out of range")
    return src


def graph_rows(graph: sparse.csr_matrix, sources=None) -> np.ndarray:
    """Shortest-path rows of a weighted graph, one per source.

    Entries for direct edges are overwritten with the edge weight so that
    pairs within one step keep their exact distance.  With more than one
    thread the sources are split into disjoint blocks.
    """
    src = _as_sources(graph.shape[0], sources)
    out = np.empty((src.size, graph.shape[0]))

    def run(lo, hi):
        block = src[lo:hi]
        out[lo:hi] = csgraph.dijkstra(graph, directed=False, indices=block)
        for r, s in enumerate(block, start=lo):
            a, b = graph.indptr[s], graph.indptr[s + 1]
            out[r, graph.indices[a:b]] = graph.data[a:b]

    threads = min(thread_count(), max(1, src.size))
    bounds = np.linspace(0, src.size, threads + 1).astype(int)
    if threads == 1:
        run(0, src.size)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda k: run(bounds[k], bounds[k + 1]), range(threads)))
    return out


def chain_metric(space, eps: float, sources=None) -> np.ndarray:
    """Rows of d_eps: shortest eps-chain lengths from each source, inf if none.

    ``sources=None`` means all points; the result is then the full matrix
    as a plain array (wrap it in ``DistanceMatrix`` if needed).
    """
    return graph_rows(space.epsilon_graph(_check_eps(eps)), sources)


def chain_matrix(space, eps: float) -> DistanceMatrix:
    return DistanceMatrix(chain_metric(space, eps))


@dataclass
class Chain:
    points: list[int]
    eps: float
    length: float

    @property
    def hops(self) -> int:
        return len(self.points) - 1

    def to_json(self) -> dict:
        return {"points": self.points, "eps": self.eps, "length": self.length}


def chain_from_graph(graph: sparse.csr_matrix, eps: float, s: int, t: int) -> Chain:
    """Minimizing chain from s to t; ties go to the smallest id at every hop.

    Greedy smallest-id choice among optimal next hops yields the
    lexicographically smallest id sequence among minimizing chains.
    """
    if s == t:
        return Chain([int(s)], eps, 0.0)
    to_t = csgraph.dijkstra(graph, directed=False, indices=int(t))
    if not np.isfinite(to_t[s]):
        raise UnreachableError(f"unreachable: no {eps:g}-chain joins {s} and {t}")
    slack = 1e-9 * max(1.0, to_t[s])
    path, length, u = [int(s)], 0.0, int(s)
    for _ in range(graph.shape[0]):
        a, b = graph.indptr[u], graph.indptr[u + 1]
        nbrs, w = graph.indices[a:b], graph.data[a:b]
        ok = np.flatnonzero(w + to_t[nbrs] <= to_t[u] + slack)
        # indices are sorted, so the first optimal neighbor has the smallest id
        k = ok[0] if nbrs[ok[0]] != u else ok[1]
        length += float(w[k])
        u = int(nbrs[k])
        path.append(u)
        if u == t:
            return Chain(path, eps, length)
    raise RuntimeError("minimizing chain reconstruction did not terminate")


def minimizing_chain(space, eps: float, s: int, t: int) -> Chain:
    return chain_from_graph(space.epsilon_graph(_check_eps(eps)), eps, s, t)


def threshold_graph(m: DistanceMatrix, eps: float) -> sparse.csr_matrix:
    a = m.values
    mask = a <= eps_cut(eps)
    np.fill_diagonal(mask, False)
    r, c = np.nonzero(mask)
    return _symmetric_csr(m.n, r, c, a[r, c])


def chain_operator(m: DistanceMatrix, eps: float) -> DistanceMatrix:
    """(m)_eps: all-pairs shortest paths over the pairs with m <= eps.

    Infinite entries never form edges.  Raises ValueError when ``m`` is not
    a metric.
    """
    eps = _check_eps(eps)
    rep = validate_metric(m)
    if not rep.valid:
        raise ValueError(f"invalid input metric: {_describe(rep)}")
    return DistanceMatrix(graph_rows(threshold_graph(m, eps)))


def _describe(rep) -> str:
    if not rep.symmetric:
        return f"asymmetric at {rep.asymmetric_pairs[0]}"
    if not rep.zero_diagonal:
        return "nonzero diagonal"
    if not rep.positive:
        return f"zero distance between distinct points {rep.nonpositive_pairs[0]}"
    return f"triangle inequality fails at {rep.violations[0]}"


# -- d0 estimation ----------------------------------------------------------


@dataclass
class EpsSchedule:
    values: list[float]
    floor: float = 0.0

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise ValueError("schedule needs at least one eps")
        if any(not v > 0 for v in self.values):
            raise ValueError("schedule values must be positive")
        if any(b >= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("schedule must be strictly decreasing")
        if self.values[-1] < self.floor * (1 - EXACT_TOL):
            raise ValueError(f"schedule reaches {self.values[-1]:g}, below the floor {self.floor:g}")

    @classmethod
    def geometric(cls, start: float, stop: float, ratio: float = 0.5, floor: float = 0.0) -> "EpsSchedule":
        """start, start*ratio, ... down to the last value >= stop."""
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        vals, v = [], float(start)
        while v >= stop * (1 - EXACT_TOL):
            vals.append(v)
            v *= ratio
        return cls(vals, floor)


@dataclass
class ConvergenceReport:
    schedule: list[float]
    estimates: list[float]
    monotone: list[bool] = field(default_factory=list)
    converged: bool = False
    final: float = INF
    disconnected_at: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schedule": self.schedule,
            "estimates": [None if math.isinf(x) else x for x in self.estimates],
            "monotone": self.monotone,
            "converged": self.converged,
            "final": None if math.isinf(self.final) else self.final,
            "disconnected_at": self.disconnected_at,
        }


def eps_floor(space) -> float:
    res = getattr(space, "resolution", None)
    return 0.0 if res is None else FLOOR_FACTOR * res


def estimate_d0(space, s: int, t: int, schedule: EpsSchedule | Sequence[float], rtol: float = 1e-2,
                graph_fn=None) -> ConvergenceReport:
    """Evaluate d_eps(s, t) down the schedule and judge convergence.

    ``graph_fn(eps)`` may supply a restricted graph (for constrained
    estimates); by default the space's eps-graph is used.
    """
    floor = eps_floor(space)
    if not isinstance(schedule, EpsSchedule):
        schedule = EpsSchedule(list(schedule), floor)
    if schedule.values[-1] < floor * (1 - EXACT_TOL):
        raise ValueError(f"eps {schedule.values[-1]:g} is below the resolution floor {floor:g}")
    graph_fn = graph_fn or space.epsilon_graph
    rep = ConvergenceReport(schedule=list(schedule.values), estimates=[])
    for eps in schedule.values:
        val = float(graph_rows(graph_fn(eps), [s])[0, t])
        if rep.estimates:
            rep.monotone.append(val >= rep.estimates[-1] - EXACT_TOL * max(1.0, abs(rep.estimates[-1])))
        rep.estimates.append(val)
        if math.isinf(val):
            rep.disconnected_at.append(eps)
    rep.final = rep.estimates[-1]
    if len(rep.estimates) >= 2:
        a, b = rep.estimates[-2], rep.estimates[-1]
        rep.converged = (math.isinf(a) and math.isinf(b)) or (
            math.isfinite(b) and abs(b - a) <= rtol * max(1.0, b))
    else:
        rep.converged = math.isfinite(rep.final) and (space.distance(s, t) == rep.final)
    return rep


# -- iterates ---------------------------------------------------------------


@dataclass
class IterateResult:
    levels: list[DistanceMatrix]
    eps: list[float]
    stabilized_at: int | None

    def relations(self, tol: float = EXACT_TOL) -> list[str]:
        return [compare_metrics(a, b, tol).relation for a, b in zip(self.levels, self.levels[1:])]


def iterate_chain(m: DistanceMatrix, levels: Sequence[float]) -> IterateResult:
    """Level 0 is ``m``; level i applies the chain operator at ``levels[i-1]``.

    ``stabilized_at`` is the first index i with level i equal to level i+1.
    """
    out = [m]
    for eps in levels:
        out.append(chain_operator(out[-1], eps))
    stable = next((i for i, (a, b) in enumerate(zip(out, out[1:])) if a.allclose(b)), None)
    return IterateResult(out, [float(e) for e in levels], stable)


class SpaceTower:
    """Iterated chain metrics on a large space, kept as sparse graphs.

    Level i is represented by a graph whose shortest paths give it.  Level 1
    is the space's eps_1-graph.  For i > 1 the chain operator at eps_i of a
    graph metric equals the shortest paths on the same graph with edges
    heavier than eps_i removed: any pair at graph distance <= eps_i is
    joined by a shortest path whose edges are all that light.
    """

    def __init__(self, space, eps_levels: Sequence[float]):
        if not eps_levels:
            raise ValueError("need at least one level")
        self.space = space
        self.eps = [_check_eps(e) for e in eps_levels]
        self.graphs = [space.epsilon_graph(self.eps[0])]
        for eps in self.eps[1:]:
            g = self.graphs[-1].copy()
            g.data[g.data > eps_cut(eps)] = 0.0
            g.eliminate_zeros()
            self.graphs.append(g)

    def rows(self, level: int, sources) -> np.ndarray:
        """Rows of the level's metric; level 0 is the space's own metric."""
        if level == 0:
            src = np.atleast_1d(sources)
            return np.array([[self.space.distance(int(s), j) for j in range(self.space.n)] for s in src])
        return graph_rows(self.graphs[level - 1], sources)

    def value(self, level: int, a: int, b: int) -> float:
        if level == 0:
            return self.space.distance(a, b)
        return float(self.rows(level, [a])[0, b])

    def probe(self, level: int, ids: Sequence[int]) -> DistanceMatrix:
        ids = list(ids)
        if level == 0:
            vals = [[self.space.distance(a, b) for b in ids] for a in ids]
            return DistanceMatrix(np.array(vals, dtype=float))
        return DistanceMatrix(self.rows(level, ids)[:, ids])


# -- waypoints --------------------------------------------------------------


@dataclass
class Waypoints:
    points: list[int]
    positions: list[float]
    legs: list[float]
    total: float
    residual: float
    bound: float
    chain: Chain

    def to_json(self) -> dict:
        return {
            "points": self.points,
            "positions": self.positions,
            "legs": self.legs,
            "total": self.total,
            "residual": self.residual,
            "bound": self.bound,
        }


def extract_waypoints(space, eps: float, s: int, t: int, delta: float, graph=None) -> Waypoints:
    """Points at arc positions just past delta, 2 delta, ... on a minimizing chain.

    Emits N = floor(d_eps(s, t) / delta) waypoints.  ``legs`` holds the
    chain-metric values between consecutive waypoints (s first, t last),
    and ``residual`` is |sum(legs) - d_eps(s, t)|.
    """
    eps = _check_eps(eps)
    graph = space.epsilon_graph(eps) if graph is None else graph
    chain = chain_from_graph(graph, eps, s, t)
    total = chain.length
    if not 0 < delta < total:
        raise ValueError(f"delta must lie in (0, {total:g}), got {delta}")
    if eps > delta / 4 * (1 + EXACT_TOL):
        raise ValueError(f"eps {eps:g} exceeds delta/4 = {delta / 4:g}")
    count = math.floor(total / delta)
    cum = np.concatenate([[0.0], np.cumsum(graph_step_lengths(graph, chain.points))])
    points, positions = [], []
    for k in range(1, count + 1):
        j = int(np.searchsorted(cum, k * delta - EXACT_TOL * total, side="left"))
        j = min(j, len(chain.points) - 1)
        points.append(chain.points[j])
        positions.append(float(cum[j]))
    stops = [s, *points, t]
    rows = graph_rows(graph, stops[:-1])
    legs = [float(rows[i, stops[i + 1]]) for i in range(len(stops) - 1)]
    residual = abs(sum(legs) - total)
    return Waypoints(points, positions, legs, total, residual, 2 * count * eps, chain)


def graph_step_lengths(graph: sparse.csr_matrix, ids: Sequence[int]) -> np.ndarray:
    return np.array([graph[a, b] for a, b in zip(ids, ids[1:])], dtype=float)
