"""Sample generators for the counterexample spaces, plus the Y_n gluing tower."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SparsePoint
from .space import FiniteMetricSpace, GluedSpace, GluingSpec, glue

# pieces of the Y and X spaces, as stored in point meta
SEG_UP, SEG_ACROSS, SEG_DOWN, SEG_RAY, SEG_ZIGZAG = 0, 1, 2, 3, 4

DEFAULT_POINT_CAP = 2_000_000


class ResourceLimitError(RuntimeError):
    pass


def _steps(length: float, h: float) -> int:
    """Number of equal steps so each is at most h."""
    return max(1, math.ceil(length / h - 1e-9))


class _Builder:
    """Accumulates deduplicated points in insertion order."""

    def __init__(self):
        self.points: list[SparsePoint] = []
        self.meta: list[tuple[int, int, float]] = []
        self.index: dict[SparsePoint, int] = {}

    def add(self, pt: SparsePoint, meta) -> int:
        idx = self.index.get(pt)
        if idx is None:
            idx = len(self.points)
            self.index[pt] = idx
            self.points.append(pt)
            self.meta.append(meta)
        return idx

    def space(self, kind, landmarks, generator, params, h, with_meta=True):
        return FiniteMetricSpace(self.points, kind, None, landmarks,
                                 self.meta if with_meta else None, generator, params, h)


# -- comb -------------------------------------------------------------------


def comb_teeth(h: float) -> list[float]:
    kmax = math.floor(1 / h + 1e-9)
    return sorted({0.0} | {1.0 / k for k in range(1, kmax + 1)})


def generate_comb(h: float) -> FiniteMetricSpace:
    """Base [0,1]x{0} with unit teeth at x=0 and x=1/k (1/k >= h), Euclidean."""
    if not 0 < h <= 0.5:
        raise ValueError(f"comb resolution must lie in (0, 1/2], got {h}")
    teeth = comb_teeth(h)
    n_base = _steps(1.0, h)
    xs = sorted({j / n_base for j in range(n_base + 1)} | set(teeth))
    b = _Builder()
    for x in xs:
        b.add(SparsePoint.dense(x, 0.0), (0, 0, x))
    n_up = _steps(1.0, h)
    for ti, x in enumerate(teeth, start=1):
        for j in range(1, n_up + 1):
            y = j / n_up
            b.add(SparsePoint.dense(x, y), (ti, 0, y))
    landmarks = {"p": b.index[SparsePoint()], "tip": b.index[SparsePoint.dense(0.0, 1.0)]}
    return b.space("euclidean", landmarks, "comb", {"h": h}, h)


# -- Y and X ----------------------------------------------------------------


def _check_y(K, h):
    if K < 2:
        raise ValueError(f"need K >= 2, got {K}")
    if not 0 < h <= 1 / (K + 1) + 1e-15:
        raise ValueError(f"need 0 < h <= 1/(K+1) = {1 / (K + 1):g}, got {h}")


def _add_spine(b: _Builder, k: int, h: float) -> None:
    """S_k from q: up the first-coordinate-1 side, across, down to (1/k, 0)."""
    inv = 1.0 / k
    n0 = _steps(1.0, h)
    for j in range(n0 + 1):
        t = j / n0
        b.add(SparsePoint.of({1: 1.0, k: t}), (k, SEG_UP, t))
    n1 = _steps(1.0 - inv, h)
    for j in range(1, n1 + 1):
        t = j / n1
        x = inv if j == n1 else 1.0 - t * (1.0 - inv)
        b.add(SparsePoint.of({1: x, k: 1.0}), (k, SEG_ACROSS, t))
    n2 = _steps(1.0, h)
    for j in range(1, n2 + 1):
        t = j / n2
        b.add(SparsePoint.of({1: inv, k: 1.0 - t}), (k, SEG_DOWN, t))


def generate_y(K: int, h: float) -> FiniteMetricSpace:
    """p plus the spines S_2..S_{K+1} in l-infinity, sampled at arc spacing <= h."""
    _check_y(K, h)
    b = _Builder()
    p = b.add(SparsePoint(), (0, 0, 0.0))
    for k in range(2, K + 2):
        _add_spine(b, k, h)
    q = b.index[SparsePoint.of({1: 1.0})]
    return b.space("sup", {"p": p, "q": q}, "y-spider", {"K": K, "h": h}, h)


def zigzag_vertices(k: int, amplitude: float | None = None) -> tuple[list[tuple[float, float]], float]:
    """Vertices (t, f_k(t)) of the piecewise-linear f_k and its amplitude.

    f_k starts at (1/(k+1), 1/(k+1)), alternates between -A and +A at equally
    spaced t, and ends at (1/k, 0).  Every piece is steeper than 1, so its
    sup-length is |delta f| and the zigzag has sup-length a + 2A(N-1); A is
    the largest value not above ``amplitude`` (default 1/(k+1)) for which
    the whole path p -> (a, a) -> zigzag has length 3 + 1/k.
    """
    a, bnd = 1.0 / (k + 1), 1.0 / k
    cap = a if amplitude is None else min(a, amplitude)
    need = 3.0 + bnd - 2.0 * a
    n = math.ceil(need / (2.0 * cap)) + 1
    amp = need / (2.0 * (n - 1))
    dt = (bnd - a) / n
    if amp > a or amp < dt:
        raise ArithmeticError(f"zigzag calibration failed for k={k}")
    verts = [(a, a)]
    sign = -1.0
    for j in range(1, n):
        verts.append((a + j * dt, sign * amp))
        sign = -sign
    verts.append((bnd, 0.0))
    return verts, amp


def gamma_pieces(k: int, amplitude: float | None = None) -> list[tuple[tuple[float, float], tuple[float, float], float]]:
    """Linear pieces of the path from p to (1/k, 0), as (start, end, sup-length)."""
    verts, _ = zigzag_vertices(k, amplitude)
    pts = [(0.0, 0.0)] + verts
    return [(u, v, max(abs(v[0] - u[0]), abs(v[1] - u[1]))) for u, v in zip(pts, pts[1:])]


def generate_x(K: int, h: float) -> FiniteMetricSpace:
    """The Y sample plus, for each k, a rectifiable path from p to (1/k, 0).

    The zigzag amplitude is capped at h, below every step size eps >= 3h
    used for estimates, so chains cross the oscillations instead of
    riding them.
    """
    if K < 2:
        raise ValueError(f"need K >= 2, got {K}")
    if not 0 < h <= 1 / (K + 1) ** 2 + 1e-15:
        raise ValueError(f"need 0 < h <= 1/(K+1)^2 = {1 / (K + 1) ** 2:g}, got {h}")
    b = _Builder()
    p = b.add(SparsePoint(), (0, 0, 0.0))
    for k in range(2, K + 2):
        _add_spine(b, k, h)
        pieces = gamma_pieces(k, h)
        ray, zig = pieces[0], pieces[1:]
        ray_len = ray[2]
        n = _steps(ray_len, h)
        for j in range(1, n + 1):
            s = j / n
            tv, fv = ray[1] if j == n else (s * ray[1][0], s * ray[1][1])
            b.add(SparsePoint.of({1: tv, k: fv}), (k, SEG_RAY, s))
        total = sum(length for _, _, length in zig)
        arc = 0.0
        for u, v, length in zig:
            n = _steps(length, h)
            for j in range(1, n + 1):
                s = j / n
                tv, fv = v if j == n else (u[0] + s * (v[0] - u[0]), u[1] + s * (v[1] - u[1]))
                b.add(SparsePoint.of({1: tv, k: fv}), (k, SEG_ZIGZAG, (arc + s * length) / total))
            arc += length
    q = b.index[SparsePoint.of({1: 1.0})]
    return b.space("sup", {"p": p, "q": q}, "x-rectifiable", {"K": K, "h": h}, h)


def gamma_path_ids(space: FiniteMetricSpace, k: int) -> list[int]:
    """Point ids of the sampled path from p to (1/k, 0), in order."""
    ids = [i for i, (pc, seg, _) in enumerate(space.meta) if pc == k and seg in (SEG_RAY, SEG_ZIGZAG)]
    ids.sort(key=lambda i: (space.meta[i][1], space.meta[i][2]))
    # the path ends on the spine's foot, which is stored once as a spine point
    end = space.points.index(SparsePoint.of({1: 1.0 / k}))
    return [space["p"], *ids, end]


def spine_path_ids(space: FiniteMetricSpace, k: int) -> list[int]:
    """Point ids along S_k from q to (1/k, 0)."""
    ids = [i for i, (pc, seg, _) in enumerate(space.meta) if pc == k and seg <= SEG_DOWN]
    ids.sort(key=lambda i: (space.meta[i][1], space.meta[i][2]))
    q = space["q"]
    return ids if ids and ids[0] == q else [q] + ids


# -- slit plane -------------------------------------------------------------


def slit_crossing(a, b, tol: float = 1e-12) -> bool:
    """True iff the open segment ab meets the closed slit {0} x [-1, 1]."""
    (ax, ay), (bx, by) = _xy(a), _xy(b)
    return bool(_slit_crossing_arr(np.array([ax]), np.array([ay]), np.array([bx]), np.array([by]), tol)[0])


def _xy(pt):
    if isinstance(pt, SparsePoint):
        return pt[1], pt[2]
    return float(pt[0]), float(pt[1])


def _slit_crossing_arr(ax, ay, bx, by, tol=1e-12):
    out = np.zeros(ax.shape, dtype=bool)
    # both on the line x = 0: the open segment covers the slit iff it spans y in [-1, 1]
    vert = (ax == 0) & (bx == 0)
    lo, hi = np.minimum(ay, by), np.maximum(ay, by)
    out |= vert & (lo <= 1 + tol) & (hi >= -1 - tol)
    opp = (ax * bx) < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ycross = ay + (by - ay) * (-ax) / (bx - ax)
    out |= opp & (np.abs(ycross) <= 1 + tol)
    return out


def slit_admissible(space, i, j):
    """Vectorized admissibility: steps that do not cross the slit."""
    x = space.dense_coords()
    i, j = np.asarray(i), np.asarray(j)
    return ~_slit_crossing_arr(x[i, 0], x[i, 1], x[j, 0], x[j, 1])


def generate_slit_plane(h: float, extent: float = 1.5) -> FiniteMetricSpace:
    """Grid sample of [-extent, extent]^2 minus the closed slit, Euclidean."""
    if not h > 0:
        raise ValueError("h must be positive")
    if extent < 1.5:
        raise ValueError(f"extent must be >= 1.5, got {extent}")
    D = round(1 / h)
    if abs(1 / h - D) > 1e-9:
        raise ValueError(f"h must divide 1 so p and q are grid points, got {h}")
    N = math.floor(extent * D + 1e-9)
    pts = []
    for i in range(-N, N + 1):
        for j in range(-N, N + 1):
            if i == 0 and abs(j) <= D:
                continue
            pts.append(SparsePoint.dense(i / D, j / D))
    index = {pt: k for k, pt in enumerate(pts)}
    landmarks = {"p": index[SparsePoint.dense(-1.0, 0.0)], "q": index[SparsePoint.dense(1.0, 0.0)]}
    return FiniteMetricSpace(pts, "euclidean", None, landmarks, None, "slit-plane",
                             {"h": h, "extent": extent}, h)


# -- rationals and metric graphs ---------------------------------------------


def generate_rational_grid(h: float) -> FiniteMetricSpace:
    """The points j/D of [0, 1] with D = 1/h."""
    D = round(1 / h)
    if D < 1 or abs(1 / h - D) > 1e-9:
        raise ValueError(f"h must be 1/D for an integer D >= 1, got {h}")
    pts = [SparsePoint.dense(j / D) for j in range(D + 1)]
    meta = [(0, 0, j / D) for j in range(D + 1)]
    return FiniteMetricSpace(pts, "euclidean", None, {"p": 0, "q": D}, meta, "rational-grid", {"h": h}, h)


def segment_space(length: float, h: float, piece: int = 0) -> FiniteMetricSpace:
    """A segment of the given length sampled at spacing <= h, ends p and q."""
    n = _steps(length, h)
    pts = [SparsePoint.dense(length if j == n else j * length / n) for j in range(n + 1)]
    meta = [(piece, 0, j / n) for j in range(n + 1)]
    return FiniteMetricSpace(pts, "euclidean", None, {"p": 0, "q": n}, meta, "segment",
                             {"length": length, "h": h}, h)


def generate_multi_edge(K: int, h: float) -> GluedSpace:
    """Two vertices p, q joined by arcs of length 1 + 1/k, k = 1..K."""
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    if not 0 < h <= 0.5:
        raise ValueError(f"need 0 < h <= 1/2, got {h}")
    arcs = [(segment_space(1.0 + 1.0 / k, h, piece=k), 1.0) for k in range(1, K + 1)]
    idents = []
    for i in range(1, K):
        idents += [(0, "p", i, "p"), (0, "q", i, "q")]
    g = glue(GluingSpec(arcs, idents, {"p": (0, "p"), "q": (0, "q")}),
             generator="multi-edge-graph", params={"K": K, "h": h})
    g.resolution = h
    return g


# -- Y_n tower --------------------------------------------------------------


def projected_yn_points(n: int, M: int, K: int, h: float) -> int:
    if n == 1:
        per_spine = [_steps(1, h) + _steps(1 - 1 / k, h) + _steps(1, h) for k in range(2, K + 2)]
        return 2 + sum(per_spine)  # p and the shared q
    return sum(m * projected_yn_points(n - 1, M, K, _copy_resolution(m, K, h)) for m in range(1, M + 1))


def _copy_resolution(m: int, K: int, h: float) -> float:
    # a copy shrunk by 1/m keeps metric spacing <= h when sampled at m*h
    return min(m * h, 1.0 / (K + 1))


def build_yn(n: int, M: int, K: int, h: float, point_cap: int = DEFAULT_POINT_CAP):
    """Level-n space of the tower; level 1 is the Y sample.

    Level n glues, for each m = 1..M, a chain of m copies of level n-1
    shrunk by 1/m: q of each copy to p of the next, every chain's first p
    to p, every chain's last q to q.
    """
    if n < 1 or M < 1:
        raise ValueError("need n >= 1 and M >= 1")
    _check_y(K, h)
    projected = projected_yn_points(n, M, K, h)
    if projected > point_cap:
        raise ResourceLimitError(f"Y_{n} sample would hold ~{projected} points (cap {point_cap})")
    if n == 1:
        return generate_y(K, h)
    cache: dict[float, object] = {}
    pieces, idents = [], []
    first_of_chain = []
    for m in range(1, M + 1):
        hm = _copy_resolution(m, K, h)
        if hm not in cache:
            cache[hm] = build_yn(n - 1, M, K, hm, point_cap)
        base = len(pieces)
        first_of_chain.append(base)
        for j in range(m):
            pieces.append((cache[hm], 1.0 / m))
            if j > 0:
                idents.append((base + j - 1, "q", base + j, "p"))
        if m > 1:
            idents.append((0, "p", base, "p"))
            idents.append((0, "q", base + m - 1, "q"))
    g = glue(GluingSpec(pieces, idents, {"p": (0, "p"), "q": (0, "q")}),
             generator="yn-tower", params={"n": n, "M": M, "K": K, "h": h})
    g.resolution = h
    g.chain_starts = first_of_chain
    return g


# -- dispatch ---------------------------------------------------------------

GENERATORS = ("comb", "y-spider", "x-rectifiable", "slit-plane", "rational-grid", "multi-edge-graph", "yn-tower")


@dataclass
class SpaceSpec:
    generator: str
    h: float
    K: int = 2
    n: int = 1
    M: int = 1
    extent: float = 1.5
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {', '.join(GENERATORS)}")
        if not self.h > 0 or self.K < 1 or self.n < 1 or self.M < 1:
            raise ValueError("space parameters must be positive")

    def with_h(self, h: float) -> "SpaceSpec":
        return SpaceSpec(self.generator, h, self.K, self.n, self.M, self.extent, dict(self.extra))


def make_space(spec: SpaceSpec):
    g = spec.generator
    if g == "comb":
        return generate_comb(spec.h)
    if g == "y-spider":
        return generate_y(spec.K, spec.h)
    if g == "x-rectifiable":
        return generate_x(spec.K, spec.h)
    if g == "slit-plane":
        return generate_slit_plane(spec.h, spec.extent)
    if g == "rational-grid":
        return generate_rational_grid(spec.h)
    if g == "multi-edge-graph":
        return generate_multi_edge(spec.K, spec.h)
    return build_yn(spec.n, spec.M, spec.K, spec.h)
