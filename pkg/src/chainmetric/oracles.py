"""Closed-form and metric-graph reference values for the generated spaces.

Each oracle answers ``d``, ``d0`` and ``dbar`` for a pair of point ids and
returns ``None`` where no reference value is known.  The oracles read only
the generator metadata (piece, segment, arc parameter) and coordinates, so
they are independent of the chain engine they are used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from .core import INF
from .generators import SEG_ACROSS, SEG_DOWN, SEG_RAY, SEG_UP, SEG_ZIGZAG, slit_crossing
from .space import _symmetric_csr


@dataclass
class MetricGraph:
    """A finite metric graph: named nodes joined by edges of given length.

    A location is ``("node", name)`` or ``("edge", edge_index, offset)`` with
    the offset measured from the edge's first end.
    """

    nodes: list[str] = field(default_factory=list)
    edges: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self):
        self._dist = None

    def add_edge(self, a: str, b: str, length: float) -> int:
        for v in (a, b):
            if v not in self.nodes:
                self.nodes.append(v)
        self.edges.append((a, b, float(length)))
        self._dist = None
        return len(self.edges) - 1

    def node_distances(self) -> np.ndarray:
        if self._dist is None:
            idx = {v: i for i, v in enumerate(self.nodes)}
            rows = [idx[a] for a, _, _ in self.edges]
            cols = [idx[b] for _, b, _ in self.edges]
            vals = [w for _, _, w in self.edges]
            g = _symmetric_csr(len(self.nodes), rows, cols, vals)
            self._dist = csgraph.dijkstra(g, directed=False)
        return self._dist

    def _ends(self, loc):
        """(node index, distance to it) pairs through which ``loc`` leaves."""
        idx = {v: i for i, v in enumerate(self.nodes)}
        if loc[0] == "node":
            return [(idx[loc[1]], 0.0)]
        a, b, w = self.edges[loc[1]]
        off = loc[2]
        return [(idx[a], off), (idx[b], w - off)]

    def distance(self, x, y) -> float:
        nd = self.node_distances()
        best = INF
        if x[0] == "edge" and y[0] == "edge" and x[1] == y[1]:
            best = abs(x[2] - y[2])
        for u, du in self._ends(x):
            for v, dv in self._ends(y):
                best = min(best, du + nd[u, v] + dv)
        return best


class Oracle:
    """Reference values for one space; ``None`` means not known."""

    def __init__(self, space):
        self.space = space

    def d(self, i: int, j: int) -> float | None:
        return self.space.distance(i, j)

    def d0(self, i: int, j: int) -> float | None:
        return None

    def dbar(self, i: int, j: int) -> float | None:
        return None


def spine_arc(meta, k: int | None = None) -> float:
    """Arc length from q along S_k to the point with metadata ``meta``."""
    pc, seg, t = meta
    k = pc if k is None else k
    if seg == SEG_UP:
        return t
    if seg == SEG_ACROSS:
        return 1.0 + t * (1.0 - 1.0 / k)
    if seg == SEG_DOWN:
        return 2.0 - 1.0 / k + t
    raise ValueError(f"segment {seg} is not on a spine")


class _GraphOracle(Oracle):
    """Oracle for spaces that sample a metric graph in the sup metric."""

    graph: MetricGraph

    def location(self, i: int):
        raise NotImplementedError

    def dbar(self, i, j):
        if i == j:
            return 0.0
        return self.graph.distance(self.location(i), self.location(j))


class YOracle(_GraphOracle):
    """The isolated point p and spines S_k from q to (1/k, 0)."""

    def __init__(self, space):
        super().__init__(space)
        K = space.params["K"]
        self.graph = MetricGraph(["p", "q"])
        self.spine_edge = {k: self.graph.add_edge("q", f"b{k}", 3.0 - 1.0 / k) for k in range(2, K + 2)}
        self.p, self.q = space["p"], space["q"]

    def location(self, i):
        if i == self.p:
            return ("node", "p")
        if i == self.q:
            return ("node", "q")
        pc, seg, t = self.space.meta[i]
        return self._extra_location(i, pc, seg, t)

    def _extra_location(self, i, pc, seg, t):
        return ("edge", self.spine_edge[pc], spine_arc((pc, seg, t)))

    def d0(self, i, j):
        if i == j:
            return 0.0
        if self.p in (i, j):
            y = j if i == self.p else i
            return 3.0 + self.dbar(self.q, y)
        # away from p every point has a neighborhood inside one spine
        return self.dbar(i, j)


class XOracle(YOracle):
    """Y plus the rectifiable path gamma_k of length 3 + 1/k from p to (1/k, 0)."""

    def __init__(self, space):
        super().__init__(space)
        K = space.params["K"]
        self.gamma_edge = {k: self.graph.add_edge("p", f"b{k}", 3.0 + 1.0 / k) for k in range(2, K + 2)}

    def _extra_location(self, i, pc, seg, t):
        if seg == SEG_RAY:
            return ("edge", self.gamma_edge[pc], t / (pc + 1))
        if seg == SEG_ZIGZAG:
            a = 1.0 / (pc + 1)
            return ("edge", self.gamma_edge[pc], a + t * (3.0 + 1.0 / pc - a))
        return super()._extra_location(i, pc, seg, t)

    def d0(self, i, j):
        if {i, j} == {self.p, self.q}:
            return 3.0
        return None


class MultiEdgeOracle(_GraphOracle):
    """Arcs of length 1 + 1/k between p and q; a length space, so d0 = dbar = d."""

    def __init__(self, space):
        super().__init__(space)
        self.graph = MetricGraph(["p", "q"])
        self.arc_edge = {k: self.graph.add_edge("p", "q", 1.0 + 1.0 / k) for k in range(1, space.params["K"] + 1)}
        self.p, self.q = space["p"], space["q"]

    def location(self, i):
        if i == self.p:
            return ("node", "p")
        if i == self.q:
            return ("node", "q")
        k, _, t = self.space.meta[i]
        return ("edge", self.arc_edge[k], t * (1.0 + 1.0 / k))

    def d(self, i, j):
        return self.dbar(i, j)

    def d0(self, i, j):
        return self.dbar(i, j)


class CombOracle(Oracle):
    """Comb space: paths run down a tooth, along the base and up another."""

    def _xy(self, i):
        pt = self.space.points[i]
        return pt[1], pt[2]

    def dbar(self, i, j):
        (x1, y1), (x2, y2) = self._xy(i), self._xy(j)
        if x1 == x2:
            return abs(y1 - y2)
        return y1 + abs(x1 - x2) + y2

    def d0(self, i, j):
        return self.dbar(i, j)


class SlitOracle(Oracle):
    """Plane minus the closed slit {0} x [-1, 1] in the Euclidean metric."""

    TIPS = ((0.0, 1.0), (0.0, -1.0))

    def _xy(self, i):
        pt = self.space.points[i]
        return pt[1], pt[2]

    def d0(self, i, j):
        return self.d(i, j)

    def dbar(self, i, j):
        a, b = self._xy(i), self._xy(j)
        if not slit_crossing(a, b):
            return math.dist(a, b)
        # the shortest detour bends once, at a tip of the slit
        return min(math.dist(a, tip) + math.dist(tip, b) for tip in self.TIPS)


class RationalOracle(Oracle):
    """Rational points of [0, 1]: totally disconnected, so dbar is infinite."""

    def d0(self, i, j):
        return self.d(i, j)

    def dbar(self, i, j):
        return 0.0 if i == j else INF


_ORACLES = {
    "y-spider": YOracle,
    "x-rectifiable": XOracle,
    "multi-edge-graph": MultiEdgeOracle,
    "comb": CombOracle,
    "slit-plane": SlitOracle,
    "rational-grid": RationalOracle,
}


def oracle_for(space) -> Oracle:
    """The reference oracle for a generated space; unknown spaces get the bare one."""
    return _ORACLES.get(space.generator, Oracle)(space)
