import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainmetric.chains import chain_metric
from chainmetric.core import SparsePoint
from chainmetric.generators import (
    SEG_DOWN,
    gamma_path_ids,
    gamma_pieces,
    generate_slit_plane,
    generate_x,
    generate_y,
    slit_admissible,
    spine_path_ids,
)
from chainmetric.length import (
    always,
    constrained_chain_metric,
    polyline_length,
    predicate_for,
    refine_length,
    y_admissible,
)
from chainmetric.oracles import oracle_for


def test_unit_segment():
    assert polyline_length([(0, 0), (1, 0)]) == 1.0
    assert polyline_length([(0, 0), (0.5, 0.5), (1, 1)], "sup") == 1.0
    assert polyline_length([(3, 4)]) == 0.0
    with pytest.raises(ValueError):
        polyline_length([])
    with pytest.raises(ValueError):
        polyline_length([(0,), (1,)], "taxicab")


def test_sparse_points_and_callables():
    a, b = SparsePoint.of({1: 0.0}), SparsePoint.of({1: 1.0, 7: 2.0})
    assert polyline_length([a, b], "sup") == 2.0
    assert polyline_length([0, 3, 1], lambda u, v: abs(u - v)) == 5.0


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_gamma_has_length_three_plus_one_over_k(k):
    pieces = gamma_pieces(k, 1 / 64)
    verts = [pieces[0][0]] + [v for _, v, _ in pieces]
    assert polyline_length(verts, "sup") == pytest.approx(3 + 1 / k, abs=1e-12)


def test_sampled_route_through_q_has_length_six():
    x = generate_x(4, 1 / 32)
    route = gamma_path_ids(x, 4) + spine_path_ids(x, 4)[::-1][1:]
    assert polyline_length(route, x) == pytest.approx(6.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=12),
       st.sampled_from(["sup", "euclidean"]))
def test_polyline_bounds(verts, metric):
    full = polyline_length(verts, metric)
    # dropping interior vertices never lengthens a path
    coarse = polyline_length(verts[::2] + [verts[-1]], metric)
    assert coarse <= full + 1e-9
    assert polyline_length([verts[0], verts[-1]], metric) <= full + 1e-9


def test_refine_constant_and_segment():
    r = refine_length(lambda t: (1.0, 2.0))
    assert r.value == 0.0 and r.converged
    r = refine_length(lambda t: (t, 2 * t))
    assert r.value == pytest.approx(math.sqrt(5)) and r.depth == 1


def test_refine_circle():
    r = refine_length(lambda t: (math.cos(2 * math.pi * t), math.sin(2 * math.pi * t)), tol=1e-10)
    assert r.converged and abs(r.value - 2 * math.pi) < 1e-8


def test_refine_reports_non_convergence():
    # t sin(1/t) style oscillation has infinite length
    r = refine_length(lambda t: (t, t * math.sin(1 / t) if t else 0.0), max_depth=10)
    assert not r.converged and r.partitions == 2**10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_refine_is_monotone(a, w):
    f = lambda t: (t, a * math.sin(w * 2 * math.pi * t))
    sums = [refine_length(f, max_depth=d, tol=-1).value for d in range(1, 8)]
    assert all(x <= y + 1e-12 for x, y in zip(sums, sums[1:]))


# -- constrained chains -----------------------------------------------------


def test_trivial_predicate_gives_chain_metric():
    y = generate_y(4, 1 / 64)
    src = [y["p"], y["q"], 10]
    assert np.array_equal(constrained_chain_metric(y, 1 / 8, always, src), chain_metric(y, 1 / 8, src))


@pytest.mark.parametrize("eps", [3 / 64, 1 / 8])
def test_constrained_never_below_unconstrained(eps):
    y = generate_y(8, 1 / 64)
    src = list(range(0, y.n, 17))
    a = constrained_chain_metric(y, eps, y_admissible, src)
    b = chain_metric(y, eps, src)
    assert np.all(a >= b - 1e-12)


def test_y_constrained_follows_each_spine():
    y = generate_y(8, 1 / 128)
    eps = 3 / 128
    oracle = oracle_for(y)
    row = constrained_chain_metric(y, eps, y_admissible, [y["q"]])[0]
    for i in range(0, y.n, 7):
        if i == y["p"]:
            continue
        ref = oracle.dbar(y["q"], i)
        assert ref - 4 * eps <= row[i] <= ref + 1e-9
    assert predicate_for(y) is y_admissible
    assert math.isinf(row[y["p"]])


def test_slit_constrained_goes_round_the_tip():
    s = generate_slit_plane(1 / 32)
    d = constrained_chain_metric(s, 3 / 32, slit_admissible, [s["p"]])[0, s["q"]]
    assert abs(d - 2 * math.sqrt(2)) <= 0.1
    assert chain_metric(s, 3 / 32, [s["p"]])[0, s["q"]] == pytest.approx(2.0, abs=0.07)
    with pytest.raises(ValueError):
        predicate_for(generate_x(2, 1 / 16))


def test_chains_do_not_exceed_sampled_paths():
    x = generate_x(4, 1 / 64)
    for k in (2, 3, 4):
        path = gamma_path_ids(x, k)
        d = chain_metric(x, 3 / 64, [path[0]])[0, path[-1]]
        assert d <= polyline_length(path, x) + 1e-12
    ids = spine_path_ids(x, 5)
    assert x.meta[ids[-1]][1] == SEG_DOWN
