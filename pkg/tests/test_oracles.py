import math

import numpy as np
import pytest

from chainmetric.chains import chain_metric
from chainmetric.core import INF, SparsePoint
from chainmetric.generators import (
    generate_comb,
    generate_multi_edge,
    generate_rational_grid,
    generate_slit_plane,
    generate_x,
    generate_y,
    gamma_path_ids,
    spine_path_ids,
)
from chainmetric.length import polyline_length
from chainmetric.oracles import MetricGraph, oracle_for


def test_metric_graph_distances():
    g = MetricGraph(["a", "b"])
    e1 = g.add_edge("a", "b", 2.0)
    e2 = g.add_edge("b", "c", 1.0)
    assert g.distance(("node", "a"), ("node", "c")) == 3.0
    assert g.distance(("edge", e1, 0.5), ("edge", e1, 1.75)) == 1.25
    assert g.distance(("edge", e1, 0.5), ("edge", e2, 0.5)) == 2.0
    assert g.distance(("node", "a"), ("node", "a")) == 0.0
    g.nodes.append("lonely")
    g._dist = None
    assert g.distance(("node", "a"), ("node", "lonely")) == INF


def test_y_oracle_values():
    y = generate_y(4, 1 / 8)
    o = oracle_for(y)
    p, q = y["p"], y["q"]
    assert o.d0(p, q) == 3.0 and o.dbar(p, q) == INF and o.d(p, q) == 1.0
    for k in range(2, 6):
        top = y.points.index(SparsePoint.of({1: 1 / k, k: 1.0}))
        assert o.dbar(q, top) == pytest.approx(2 - 1 / k)
        path = spine_path_ids(y, k)
        assert o.dbar(q, path[-1]) == pytest.approx(polyline_length(path, y))
    a = spine_path_ids(y, 2)[5]
    b = spine_path_ids(y, 3)[7]
    assert o.dbar(a, b) == pytest.approx(o.dbar(a, q) + o.dbar(q, b))
    assert o.d0(p, a) == pytest.approx(3 + o.dbar(q, a))


def test_x_oracle_values():
    x = generate_x(3, 1 / 16)
    o = oracle_for(x)
    p, q = x["p"], x["q"]
    assert o.d0(p, q) == 3.0 and o.dbar(p, q) == 6.0
    path = gamma_path_ids(x, 3)
    for i in path[1:-1:7]:
        assert o.dbar(p, i) == pytest.approx(polyline_length(path[: path.index(i) + 1], x), abs=1e-12)


def test_comb_oracle():
    c = generate_comb(1 / 4)
    o = oracle_for(c)
    tip0, = [i for i, pt in enumerate(c.points) if (pt[1], pt[2]) == (0.0, 1.0)]
    for k in (1, 2, 3, 4):
        tip, = [i for i, pt in enumerate(c.points) if (pt[1], pt[2]) == (1 / k, 1.0)]
        assert o.dbar(tip0, tip) == pytest.approx(2 + 1 / k)
        assert o.d(tip0, tip) == pytest.approx(1 / k)


def test_slit_oracle():
    s = generate_slit_plane(1 / 4)
    o = oracle_for(s)
    assert o.dbar(s["p"], s["q"]) == pytest.approx(2 * math.sqrt(2))
    assert o.d0(s["p"], s["q"]) == 2.0


def test_rational_and_multi_edge_oracles():
    r = generate_rational_grid(1 / 4)
    o = oracle_for(r)
    assert o.dbar(0, 4) == INF and o.d0(0, 4) == 1.0 and o.dbar(2, 2) == 0.0
    g = generate_multi_edge(3, 1 / 4)
    om = oracle_for(g)
    for i in range(0, g.n, 3):
        for j in range(0, g.n, 5):
            assert om.dbar(i, j) == pytest.approx(g.distance(i, j), abs=1e-12)


SMALL = {
    "y": lambda: generate_y(3, 1 / 8),
    "x": lambda: generate_x(2, 1 / 16),
    "comb": lambda: generate_comb(1 / 8),
    "multi": lambda: generate_multi_edge(3, 1 / 8),
    "rational": lambda: generate_rational_grid(1 / 8),
}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_oracle_sandwich(name):
    space = SMALL[name]()
    o = oracle_for(space)
    ids = range(0, space.n, max(1, space.n // 25))
    for i in ids:
        for j in ids:
            vals = [o.d(i, j), o.d0(i, j), o.dbar(i, j)]
            known = [v for v in vals if v is not None]
            assert all(a <= b + 1e-12 for a, b in zip(known, known[1:]))


@pytest.mark.parametrize("name", sorted(SMALL))
@pytest.mark.parametrize("factor", [1, 2, 4])
def test_chain_sandwich(name, factor):
    space = SMALL[name]()
    o = oracle_for(space)
    eps = factor * space.resolution
    d = space.distance_matrix().values
    de = chain_metric(space, eps)
    assert np.all(d <= de + 1e-12)
    ids = range(0, space.n, max(1, space.n // 30))
    for i in ids:
        for j in ids:
            assert de[i, j] <= o.dbar(i, j) + 1e-9


def test_slit_sandwich_on_grid_aligned_routes():
    s = generate_slit_plane(1 / 8)
    o = oracle_for(s)
    eps = 3 / 8
    x = s.dense_coords()
    src = list(range(0, s.n, 37))
    rows = chain_metric(s, eps, src)
    d = np.array([[s.distance(i, j) for j in range(s.n)] for i in src])
    assert np.all(d <= rows + 1e-12)
    for r, i in enumerate(src):
        for j in range(0, s.n, 11):
            dx, dy = np.abs(x[j] - x[i])
            aligned = dx == 0 or dy == 0 or np.isclose(dx, dy)
            if aligned:
                assert rows[r, j] <= o.dbar(i, j) + 1e-9
