"""Finite metric spaces, their epsilon-graphs, and point gluing."""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .core import (
    EXACT_TOL,
    INF,
    METRIC_FUNCS,
    DistanceMatrix,
    SparsePoint,
)

Meta = tuple[int, int, float]


def eps_cut(eps: float) -> float:
    """Inclusive threshold for ``d <= eps`` that absorbs rounding in d."""
    return eps + EXACT_TOL * max(1.0, eps)


def _symmetric_csr(n, rows, cols, vals) -> sparse.csr_matrix:
    """Symmetric weighted graph; duplicate pairs keep the smallest weight."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    v = np.concatenate([vals, vals])
    keep = r != c
    r, c, v = r[keep], c[keep], v[keep]
    if r.size:
        order = np.lexsort((v, c, r))
        r, c, v = r[order], c[order], v[order]
        first = np.ones(r.size, dtype=bool)
        first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        r, c, v = r[first], c[first], v[first]
    g = sparse.csr_matrix((v, (r, c)), shape=(n, n))
    g.sort_indices()
    return g


# -- epsilon-graph construction -------------------------------------------


def _sup_eps_edges(points: Sequence[SparsePoint], eps: float):
    """Pairs at sup distance <= eps, via buckets keyed by coordinate support.

    Two points with supports S and T differ at every index of S\\T by the
    full coordinate value, so a bucket pair only needs the rows whose
    private coordinates are all within eps; what remains is a range query
    over the shared coordinates.
    """
    cut = eps_cut(eps)
    groups: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for i, pt in enumerate(points):
        groups[pt.support].append(i)
    buckets = []
    for support, ids in sorted(groups.items()):
        coords = np.array([[v for _, v in points[i].coords] for i in ids], dtype=float)
        buckets.append((support, np.asarray(ids, dtype=np.int64), coords.reshape(len(ids), len(support))))

    rows, cols, vals = [], [], []
    for a, (sa, ida, xa) in enumerate(buckets):
        if len(ida) > 1 and len(sa) > 0:
            pairs = cKDTree(xa).query_pairs(cut, p=np.inf, output_type="ndarray")
            if pairs.size:
                d = np.abs(xa[pairs[:, 0]] - xa[pairs[:, 1]]).max(axis=1)
                ok = d <= cut
                rows.append(ida[pairs[ok, 0]])
                cols.append(ida[pairs[ok, 1]])
                vals.append(d[ok])
        for sb, idb, xb in buckets[a + 1:]:
            shared = sorted(set(sa) & set(sb))
            pa = [sa.index(i) for i in shared]
            pb = [sb.index(i) for i in shared]
            oa = [k for k, i in enumerate(sa) if i not in shared]
            ob = [k for k, i in enumerate(sb) if i not in shared]
            base_a = np.abs(xa[:, oa]).max(axis=1) if oa else np.zeros(len(ida))
            base_b = np.abs(xb[:, ob]).max(axis=1) if ob else np.zeros(len(idb))
            ma = np.flatnonzero(base_a <= cut)
            mb = np.flatnonzero(base_b <= cut)
            if ma.size == 0 or mb.size == 0:
                continue
            if not shared:
                ii, jj = np.meshgrid(ma, mb, indexing="ij")
                ii, jj = ii.ravel(), jj.ravel()
                d = np.maximum(base_a[ii], base_b[jj])
            else:
                ya = xa[np.ix_(ma, pa)]
                yb = xb[np.ix_(mb, pb)]
                res = cKDTree(ya).sparse_distance_matrix(cKDTree(yb), cut, p=np.inf, output_type="ndarray")
                if res.size == 0:
                    continue
                ii = ma[res["i"]]
                jj = mb[res["j"]]
                d = np.abs(xa[ii][:, pa] - xb[jj][:, pb]).max(axis=1)
                d = np.maximum(d, np.maximum(base_a[ii], base_b[jj]))
            ok = d <= cut
            rows.append(ida[ii[ok]])
            cols.append(idb[jj[ok]])
            vals.append(d[ok])
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _euclidean_eps_edges(coords: np.ndarray, eps: float):
    cut = eps_cut(eps)
    pairs = cKDTree(coords).query_pairs(cut, p=2, output_type="ndarray")
    if pairs.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    diff = coords[pairs[:, 0]] - coords[pairs[:, 1]]
    d = np.sqrt((diff * diff).sum(axis=1))
    ok = d <= cut
    return pairs[ok, 0], pairs[ok, 1], d[ok]


def _matrix_eps_edges(values: np.ndarray, eps: float):
    cut = eps_cut(eps)
    i, j = np.nonzero(np.triu(values <= cut, 1))
    return i, j, values[i, j]


# -- spaces ---------------------------------------------------------------


class _GraphCache:
    """Per-space memo of epsilon-graphs; safe to share across threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._graphs: dict[float, sparse.csr_matrix] = {}

    def get(self, eps, build):
        with self._lock:
            g = self._graphs.get(eps)
        if g is None:
            g = build(eps)
            with self._lock:
                g = self._graphs.setdefault(eps, g)
        return g


@dataclass(eq=False)
class FiniteMetricSpace:
    """A finite sample of a metric space.

    ``metric_kind`` is ``"sup"`` or ``"euclidean"`` (distances computed from
    ``points``) or ``"matrix"`` (distances read from ``matrix``).
    """

    points: list[SparsePoint] | None
    metric_kind: str
    matrix: DistanceMatrix | None = None
    landmarks: dict[str, int] = field(default_factory=dict)
    meta: list[Meta] | None = None
    generator: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    resolution: float | None = None

    def __post_init__(self):
        if self.metric_kind not in ("sup", "euclidean", "matrix"):
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        if self.metric_kind == "matrix":
            if self.matrix is None:
                raise ValueError("matrix metric requires a DistanceMatrix")
            if self.points is not None and len(self.points) != self.matrix.n:
                raise ValueError("points and matrix disagree on size")
        elif self.points is None:
            raise ValueError(f"{self.metric_kind} metric requires points")
        n = self.n
        for name, idx in self.landmarks.items():
            if not 0 <= idx < n:
                raise ValueError(f"landmark {name!r} -> {idx} is not a valid point id")
        if self.meta is not None and len(self.meta) != n:
            raise ValueError("meta must have one entry per point")
        self._cache = _GraphCache()
        self._dense = None

    @property
    def n(self) -> int:
        return self.matrix.n if self.points is None else len(self.points)

    def __len__(self):
        return self.n

    def __getitem__(self, name: str) -> int:
        return self.landmarks[name]

    def dense_coords(self) -> np.ndarray:
        """Points as rows of a dense array over indices 1..max index."""
        if self._dense is None:
            dim = max((pt.coords[-1][0] for pt in self.points if pt.coords), default=0)
            arr = np.zeros((self.n, max(dim, 1)))
            for r, pt in enumerate(self.points):
                for i, v in pt.coords:
                    arr[r, i - 1] = v
            self._dense = arr
        return self._dense

    def distance(self, i: int, j: int) -> float:
        if self.metric_kind == "matrix":
            return float(self.matrix.values[i, j])
        return METRIC_FUNCS[self.metric_kind](self.points[i], self.points[j])

    def distance_matrix(self) -> DistanceMatrix:
        if self.metric_kind == "matrix":
            return self.matrix
        if self.metric_kind == "euclidean":
            x = self.dense_coords()
            diff = x[:, None, :] - x[None, :, :]
            return DistanceMatrix(np.sqrt((diff * diff).sum(axis=2)))
        n = self.n
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self.distance(i, j)
        return DistanceMatrix(out)

    def epsilon_graph(self, eps: float) -> sparse.csr_matrix:
        """Symmetric CSR graph of all pairs at distance <= eps, weighted by distance."""
        if not eps > 0:
            raise ValueError("eps must be positive")
        return self._cache.get(float(eps), self._build_graph)

    def _build_graph(self, eps):
        if self.metric_kind == "sup":
            r, c, v = _sup_eps_edges(self.points, eps)
        elif self.metric_kind == "euclidean":
            r, c, v = _euclidean_eps_edges(self.dense_coords(), eps)
        else:
            r, c, v = _matrix_eps_edges(self.matrix.values, eps)
        return _symmetric_csr(self.n, r, c, v)

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        if factor <= 0:
            raise ValueError("scale must be positive")
        pts = None if self.points is None else [p.scaled(factor) for p in self.points]
        mat = None if self.matrix is None else DistanceMatrix(self.matrix.values * factor)
        res = None if self.resolution is None else self.resolution * factor
        return FiniteMetricSpace(pts, self.metric_kind, mat, dict(self.landmarks), self.meta,
                                 self.generator, dict(self.params), res)


# -- gluing ---------------------------------------------------------------


@dataclass
class GluingSpec:
    """Pieces with scale factors, plus landmark identifications.

    Each identification ``(i, a, j, b)`` merges landmark ``a`` of piece
    ``i`` with landmark ``b`` of piece ``j``.  ``landmarks`` names points of
    the result as ``name -> (piece, landmark)``.
    """

    pieces: list[tuple[Any, float]]
    identifications: list[tuple[int, str, int, str]]
    landmarks: dict[str, tuple[int, str]] = field(default_factory=dict)


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # the earlier (piece, local) pair stays the representative
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


class GluedSpace:
    """Disjoint union of scaled pieces with some points identified.

    Distances follow the quotient metric.  Pieces meet only at identified
    points ("portals"), so a cross-piece route is a sequence of in-piece
    legs between portals; distances are computed exactly on that portal
    graph and never materialized for all pairs.
    """

    metric_kind = "glued"
    points = None
    resolution = None

    def __init__(self, spec: GluingSpec, generator: str | None = None, params: dict | None = None):
        if not spec.pieces:
            raise ValueError("gluing needs at least one piece")
        self.pieces = [p for p, _ in spec.pieces]
        self.scales = [float(s) for _, s in spec.pieces]
        if any(not s > 0 for s in self.scales):
            raise ValueError("piece scales must be positive")
        self.generator = generator
        self.params = dict(params or {})

        uf = _UnionFind()
        for ident in spec.identifications:
            i, a, j, b = ident
            for piece, name in ((i, a), (j, b)):
                if not 0 <= piece < len(self.pieces):
                    raise ValueError(f"identification {ident!r} names missing piece {piece}")
                if name not in self.pieces[piece].landmarks:
                    raise ValueError(f"identification {ident!r}: piece {piece} has no landmark {name!r}")
            uf.union((i, self.pieces[i].landmarks[a]), (j, self.pieces[j].landmarks[b]))

        local_to_global = []
        members: dict[int, list[tuple[int, int]]] = {}
        owner_piece, owner_local = [], []
        root_gid: dict[tuple[int, int], int] = {}
        for pi, piece in enumerate(self.pieces):
            l2g = np.empty(piece.n, dtype=np.int64)
            for loc in range(piece.n):
                key = (pi, loc)
                root = uf.find(key) if key in uf.parent else key
                gid = root_gid.get(root)
                if gid is None:
                    gid = len(owner_piece)
                    root_gid[root] = gid
                    owner_piece.append(pi)
                    owner_local.append(loc)
                else:
                    members.setdefault(gid, [(owner_piece[gid], owner_local[gid])]).append(key)
                l2g[loc] = gid
            local_to_global.append(l2g)
        self.local_to_global = local_to_global
        self.owner_piece = np.asarray(owner_piece, dtype=np.int64)
        self.owner_local = np.asarray(owner_local, dtype=np.int64)
        self._members = members
        self.portals = np.array(sorted(members), dtype=np.int64)
        self._portal_index = {int(g): k for k, g in enumerate(self.portals)}
        self.piece_portals: list[list[tuple[int, int]]] = [[] for _ in self.pieces]
        for g in self.portals:
            for pi, loc in members[int(g)]:
                self.piece_portals[pi].append((loc, self._portal_index[int(g)]))

        self.landmarks = {}
        for name, (pi, lname) in spec.landmarks.items():
            if lname not in self.pieces[pi].landmarks:
                raise ValueError(f"landmark {name!r}: piece {pi} has no landmark {lname!r}")
            self.landmarks[name] = int(local_to_global[pi][self.pieces[pi].landmarks[lname]])

        self._portal_matrix = self._portal_distances(lambda pi, a, b: self.pieces[pi].distance(a, b))
        self._cache = _GraphCache()

    # -- structure --

    @property
    def n(self) -> int:
        return len(self.owner_piece)

    def __len__(self):
        return self.n

    def __getitem__(self, name: str) -> int:
        return self.landmarks[name]

    def members(self, g: int) -> list[tuple[int, int]]:
        """All (piece, local id) pairs identified into global point ``g``."""
        return self._members.get(int(g), [(int(self.owner_piece[g]), int(self.owner_local[g]))])

    @property
    def meta(self) -> list[Meta] | None:
        out = []
        for pi, loc in zip(self.owner_piece, self.owner_local):
            m = self.pieces[pi].meta
            if m is None:
                return None
            out.append(m[loc])
        return out

    # -- distances --

    def _portal_distances(self, piece_dist) -> np.ndarray:
        """All-pairs distances among portals, via in-piece legs only."""
        k = len(self.portals)
        rows, cols, vals = [], [], []
        for pi, plist in enumerate(self.piece_portals):
            s = self.scales[pi]
            for x in range(len(plist)):
                for y in range(x + 1, len(plist)):
                    (la, ia), (lb, ib) = plist[x], plist[y]
                    d = piece_dist(pi, la, lb)
                    if d < INF:
                        rows.append(ia)
                        cols.append(ib)
                        vals.append(s * d)
        if k == 0:
            return np.zeros((0, 0))
        g = _symmetric_csr(k, rows, cols, vals)
        return csgraph.dijkstra(g, directed=False)

    def _glued(self, i, j, piece_dist, portal_matrix) -> float:
        best = INF
        mi, mj = self.members(i), self.members(j)
        for pa, la in mi:
            for pb, lb in mj:
                if pa == pb:
                    best = min(best, self.scales[pa] * piece_dist(pa, la, lb))
        for pa, la in mi:
            sa = self.scales[pa]
            for lu, iu in self.piece_portals[pa]:
                da = sa * piece_dist(pa, la, lu)
                if da >= best:
                    continue
                for pb, lb in mj:
                    sb = self.scales[pb]
                    for lv, iv in self.piece_portals[pb]:
                        best = min(best, da + portal_matrix[iu, iv] + sb * piece_dist(pb, lv, lb))
        return best

    def distance(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return self._glued(i, j, lambda pi, a, b: self.pieces[pi].distance(a, b), self._portal_matrix)

    def _piece_union_graph(self, piece_graph) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for pi, piece in enumerate(self.pieces):
            g = piece_graph(pi, piece).tocoo()
            l2g = self.local_to_global[pi]
            rows.append(l2g[g.row])
            cols.append(l2g[g.col])
            vals.append(g.data * self.scales[pi])
        return _symmetric_csr(self.n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))

    def distance_matrix(self) -> DistanceMatrix:
        def complete(pi, piece):
            return sparse.csr_matrix(piece.distance_matrix().values)

        g = self._piece_union_graph(complete)
        return DistanceMatrix(csgraph.dijkstra(g, directed=False))

    def epsilon_graph(self, eps: float) -> sparse.csr_matrix:
        """All pairs at glued distance <= eps.

        In-piece edges come from the pieces' own graphs.  Only points within
        eps of a portal can have extra neighbors (through the portal), so
        those rows are completed by a bounded search on the union graph.
        """
        if not eps > 0:
            raise ValueError("eps must be positive")
        return self._cache.get(float(eps), self._build_graph)

    def _build_graph(self, eps):
        union = self._piece_union_graph(lambda pi, piece: piece.epsilon_graph(eps / self.scales[pi]))
        if self.portals.size == 0:
            return union
        cut = eps_cut(eps)
        near = csgraph.dijkstra(union, directed=False, indices=self.portals, limit=cut)
        hub = np.flatnonzero(np.isfinite(near).any(axis=0))
        rows, cols, vals = [], [], []
        for start in range(0, hub.size, 256):
            src = hub[start:start + 256]
            dist = csgraph.dijkstra(union, directed=False, indices=src, limit=cut)
            r, c = np.nonzero(np.isfinite(dist) & (dist <= cut))
            rows.append(src[r])
            cols.append(c)
            vals.append(dist[r, c])
        coo = union.tocoo()
        return _symmetric_csr(
            self.n,
            np.concatenate([coo.row, *rows]),
            np.concatenate([coo.col, *cols]),
            np.concatenate([coo.data, *vals]),
        )


def glue(spec: GluingSpec, **kwargs) -> GluedSpace:
    return GluedSpace(spec, **kwargs)


# -- JSON space files -------------------------------------------------------


# dense matrices beyond this many points are not written to disk
MATRIX_SAVE_CAP = 20_000


def _rebuildable(space) -> bool:
    """Glued spaces from a named generator are saved as their recipe."""
    return space.metric_kind == "glued" and bool(getattr(space, "generator", None))


def space_to_json(space, matrix_file: str | None = None) -> dict:
    if _rebuildable(space):
        return {"generator": space.generator, "params": space.params, "metric_kind": "glued"}
    labels = defaultdict(list)
    for name, idx in space.landmarks.items():
        labels[idx].append(name)
    meta = space.meta
    kind = space.metric_kind
    pts = []
    for i in range(space.n):
        rec: dict[str, Any] = {"id": i}
        if space.points is not None:
            rec["coords"] = [[idx, val] for idx, val in space.points[i].coords]
        if i in labels:
            rec["label"] = ",".join(sorted(labels[i]))
        if meta is not None:
            piece, seg, t = meta[i]
            rec["meta"] = {"piece": int(piece), "segment": int(seg), "t": float(t)}
        pts.append(rec)
    doc = {
        "generator": space.generator,
        "params": space.params,
        "points": pts,
        "metric_kind": "matrix" if kind == "glued" else kind,
    }
    if doc["metric_kind"] == "matrix":
        if matrix_file is None:
            raise ValueError("matrix-backed spaces need a matrix_file")
        doc["matrix_file"] = matrix_file
    if getattr(space, "resolution", None) is not None:
        doc["resolution"] = space.resolution
    return doc


def save_space(space, path: str | Path) -> None:
    """Write ``space`` as JSON.

    Matrix-backed and ad-hoc glued spaces also write a ``.dmx`` matrix next
    to the JSON; generated glued spaces store only their generator and
    parameters and are rebuilt on load.
    """
    path = Path(path)
    matrix_file = None
    if space.metric_kind in ("matrix", "glued") and not _rebuildable(space):
        if space.n > MATRIX_SAVE_CAP:
            raise ValueError(f"refusing to write a dense {space.n}x{space.n} matrix (cap {MATRIX_SAVE_CAP} points)")
        matrix_file = path.with_suffix(".dmx").name
        space.distance_matrix().save(path.with_suffix(".dmx"))
    path.write_text(json.dumps(space_to_json(space, matrix_file), indent=1))


def load_space(path: str | Path) -> FiniteMetricSpace:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc["metric_kind"] == "glued":
        from .generators import SpaceSpec, make_space

        return make_space(SpaceSpec(doc["generator"], **doc["params"]))
    pts_doc = sorted(doc["points"], key=lambda r: r["id"])
    landmarks = {}
    for r in pts_doc:
        for name in filter(None, r.get("label", "").split(",")):
            landmarks[name] = r["id"]
    points = None
    if all("coords" in r for r in pts_doc):
        points = [SparsePoint.of((int(i), float(v)) for i, v in r["coords"]) for r in pts_doc]
    meta = None
    if all("meta" in r for r in pts_doc):
        meta = [(r["meta"]["piece"], r["meta"]["segment"], r["meta"]["t"]) for r in pts_doc]
    matrix = None
    if doc["metric_kind"] == "matrix":
        matrix = DistanceMatrix.load(path.parent / doc["matrix_file"])
    return FiniteMetricSpace(points, doc["metric_kind"], matrix, landmarks, meta,
                             doc.get("generator"), doc.get("params", {}), doc.get("resolution"))


__all__ = [
    "FiniteMetricSpace",
    "GluedSpace",
    "GluingSpec",
    "glue",
    "eps_cut",
    "save_space",
    "load_space",
    "space_to_json",
]
