"""Claims table: each claim computes one measured value and checks it against an interval."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .chains import (
    SpaceTower,
    UnreachableError,
    chain_from_graph,
    chain_metric,
    chain_operator,
    extract_waypoints,
    graph_rows,
    thread_count,
)
from .core import INF, DistanceMatrix, compare_metrics, format_float
from .generators import (
    SEG_UP,
    ResourceLimitError,
    SpaceSpec,
    build_yn,
    gamma_path_ids,
    generate_comb,
    generate_multi_edge,
    generate_rational_grid,
    generate_slit_plane,
    generate_x,
    generate_y,
    make_space,
    slit_admissible,
    spine_path_ids,
)
from .length import constrained_chain_metric, constrained_graph, polyline_length, predicate_for
from .oracles import oracle_for

SQRT2 = math.sqrt(2.0)


@dataclass
class ClaimRecord:
    claim: str
    criterion: int
    space: dict
    quantity: str
    expected: tuple[float, float]
    tag: str
    measured: float | None = None
    status: str = "pending"
    note: str = ""
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def judge(self, measured: float) -> "ClaimRecord":
        self.measured = float(measured)
        self.status = "pass" if within(self.measured, self.expected) else "fail"
        return self

    def to_json(self) -> dict:
        return {
            "claim": self.claim,
            "criterion": self.criterion,
            "space": self.space,
            "quantity": self.quantity,
            "expected": [_jnum(x) for x in self.expected],
            "tag": self.tag,
            "measured": None if self.measured is None else _jnum(self.measured),
            "status": self.status,
            "note": self.note,
        }


def within(x: float, interval: tuple[float, float], tol: float = 1e-12) -> bool:
    """Closed-interval membership; inf only matches an infinite bound."""
    lo, hi = interval
    if math.isinf(x):
        return x == hi or x == lo
    slack = tol * max(1.0, abs(x))
    return lo - slack <= x <= hi + slack


def _jnum(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(format_float(x))


# -- presets ----------------------------------------------------------------


@dataclass
class VerifyConfig:
    preset: str
    y: dict
    x: dict
    slit: dict
    rational: dict
    multi: dict
    comb: dict
    tower: dict
    out: str | None = None
    criteria: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)

    @classmethod
    def from_preset(cls, name: str, out: str | None = None) -> "VerifyConfig":
        try:
            kw = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
        cfg = cls(preset=name, out=out, **json.loads(json.dumps(kw)))
        cfg.check()
        return cfg

    def check(self) -> None:
        """Generator preconditions and the eps >= 3h floor."""
        y = self.y
        if y["h"] > 1 / (y["K"] + 1) or y["K"] < 1 / y["eps"] - 1e-9 or y["eps"] < 3 * y["h"]:
            raise ValueError(f"{self.preset}: Y needs h <= 1/(K+1), K >= 1/eps and eps >= 3h")
        x = self.x
        if x["h"] > 1 / (x["K"] + 1) ** 2 or x["eps"] < 3 * x["h"]:
            raise ValueError(f"{self.preset}: X needs h <= 1/(K+1)^2 and eps >= 3h")
        if self.slit["eps"] < 3 * self.slit["h"] or self.comb["eps"] < 3 * self.comb["h"]:
            raise ValueError(f"{self.preset}: eps must be >= 3h")
        t = self.tower
        if t["h"] > 1 / (t["K"] + 1) or len(t["levels"]) < 1:
            raise ValueError(f"{self.preset}: tower needs h <= 1/(K+1) and at least one level")


PRESETS = {
    "smoke": {
        "y": {"K": 16, "h": 1 / 128, "eps": 1 / 16},
        "x": {"K": 4, "h": 1 / 32, "eps": 1 / 8},
        "slit": {"h": 1 / 16, "eps": 3 / 16, "delta": SQRT2 / 2},
        "rational": {"h": 1 / 64, "eps": [1 / 64, 1 / 16]},
        "multi": {"K": [4, 16], "h": 1 / 32},
        "comb": {"h": 1 / 32, "eps": 3 / 32, "pairs": 20},
        "tower": {"n": 2, "M": 8, "K": 8, "h": 1 / 64, "levels": [1 / 32, 1 / 4, 1 / 4]},
    },
    "desk": {
        "y": {"K": 64, "h": 1 / 512, "eps": 1 / 32},
        "x": {"K": 8, "h": 1 / 256, "eps": 1 / 16},
        "slit": {"h": 1 / 64, "eps": 3 / 64, "delta": SQRT2 / 2},
        "rational": {"h": 1 / 256, "eps": [1 / 256, 1 / 64, 1 / 16]},
        "multi": {"K": [4, 16, 64], "h": 1 / 128},
        "comb": {"h": 1 / 128, "eps": 3 / 128, "pairs": 20},
        "tower": {"n": 2, "M": 16, "K": 16, "h": 1 / 128, "levels": [1 / 64, 1 / 4, 1 / 4]},
    },
    "full": {
        "y": {"K": 128, "h": 1 / 1024, "eps": 1 / 64},
        "x": {"K": 16, "h": 1 / 512, "eps": 1 / 32},
        "slit": {"h": 1 / 128, "eps": 3 / 128, "delta": SQRT2 / 2},
        "rational": {"h": 1 / 512, "eps": [1 / 512, 1 / 128, 1 / 32]},
        "multi": {"K": [4, 16, 64, 256], "h": 1 / 256},
        "comb": {"h": 1 / 256, "eps": 3 / 256, "pairs": 40},
        "tower": {"n": 2, "M": 32, "K": 32, "h": 1 / 256, "levels": [1 / 128, 1 / 4, 1 / 4]},
    },
}


# -- claims -----------------------------------------------------------------


class _Spaces:
    """Builds each space once per suite run."""

    def __init__(self):
        self._cache = {}

    def get(self, key, build: Callable):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def formula_points(space, count: int = 10) -> list[int]:
    """Points on the ascending segments of spines 2..5 at evenly spread heights.

    Only spines whose feet are more than eps apart from every other foot
    keep chains from creeping along the axis, so only they carry the formula
    at eps = 1/32; the ascending segment keeps corner cutting out of play.
    """
    spines = [k for k in range(2, 6) if k <= space.params["K"] + 1]
    heights = [0.25, 0.5, 0.75]
    picks = []
    for t in heights:
        for k in spines:
            picks.append((k, t))
    picks = picks[:count]
    meta = space.meta
    index = {(m[0], m[2]): i for i, m in enumerate(meta) if m[1] == SEG_UP}
    return [index[min((key for key in index if key[0] == k), key=lambda key: abs(key[1] - t))] for k, t in picks]


def comb_pairs(space, count: int, seed: int = 7) -> list[tuple[int, int]]:
    """Random pairs among base points and the six widest-spaced teeth."""
    teeth = {1.0 / k for k in range(1, 7)}
    pool = [i for i, pt in enumerate(space.points) if pt[2] == 0 or pt[1] in teeth]
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < count:
        a, b = rng.choice(len(pool), size=2, replace=False)
        pairs.append((pool[int(a)], pool[int(b)]))
    return pairs


def tower_probes(space, count: int = 24) -> list[int]:
    step = max(1, space.n // count)
    ids = {space["p"], space["q"], *range(0, space.n, step)}
    return sorted(ids)


def _claims(cfg: VerifyConfig):
    """(criterion, runner) pairs; each runner returns a list of ClaimRecords."""
    S = _Spaces()

    def y_space():
        c = cfg.y
        return S.get(("y", c["K"], c["h"]), lambda: generate_y(c["K"], c["h"]))

    def c1():
        c = cfg.y
        sp = {"generator": "y-spider", "K": c["K"], "h": c["h"]}
        y = y_space()
        p, q, eps = y["p"], y["q"], c["eps"]
        row = chain_metric(y, eps, [p])[0]
        o = oracle_for(y)
        return [
            ClaimRecord("y-d", 1, sp, "d(p,q)", (1.0, 1.0), "Y spider separation").judge(y.distance(p, q)),
            ClaimRecord("y-d0", 1, sp, f"d_eps(p,q), eps={eps:g}", (3 - 5 * eps, 3.0),
                        "Y spider separation").judge(row[q]),
            ClaimRecord("y-dbar", 1, sp, "oracle dbar(p,q)", (INF, INF), "Y spider separation").judge(o.dbar(p, q)),
        ]

    def c2():
        c = cfg.y
        sp = {"generator": "y-spider", "K": c["K"], "h": c["h"]}
        y = y_space()
        eps = c["eps"]
        o = oracle_for(y)
        row = chain_metric(y, eps, [y["p"]])[0]
        ys = formula_points(y)
        err = max(abs(row[i] - (3 + o.dbar(y["q"], i))) for i in ys)
        rec = ClaimRecord("y-formula", 2, sp, f"max |d_eps(p,y) - 3 - dbar(q,y)| over {len(ys)} points",
                          (0.0, 5 * eps), "distance from p through q")
        return [rec.judge(err)]

    def c3():
        c = cfg.x
        sp = {"generator": "x-rectifiable", "K": c["K"], "h": c["h"]}
        x = S.get(("x", c["K"], c["h"]), lambda: generate_x(c["K"], c["h"]))
        p, q = x["p"], x["q"]
        est = chain_metric(x, c["eps"], [p])[0, q]
        dev = max(abs(polyline_length(gamma_path_ids(x, k), x) - (3 + 1 / k)) for k in range(2, c["K"] + 2))
        route = gamma_path_ids(x, 2) + spine_path_ids(x, 2)[::-1][1:]
        return [
            ClaimRecord("x-d0", 3, sp, f"d_eps(p,q), eps={c['eps']:g}", (2.8, 3.05),
                        "rectifiable X separation").judge(est),
            ClaimRecord("x-gamma", 3, sp, "max |L(gamma_k) - (3 + 1/k)|", (0.0, 1e-9),
                        "rectifiable X separation").judge(dev),
            ClaimRecord("x-route", 3, sp, "L(gamma_2 then S_2)", (6.0, 6.0),
                        "rectifiable X separation").judge(polyline_length(route, x)),
            ClaimRecord("x-dbar", 3, sp, "oracle dbar(p,q)", (6.0, 6.0),
                        "rectifiable X separation").judge(oracle_for(x).dbar(p, q)),
        ]

    def slit_space():
        c = cfg.slit
        return S.get(("slit", c["h"]), lambda: generate_slit_plane(c["h"]))

    def c4():
        c = cfg.slit
        sp = {"generator": "slit-plane", "h": c["h"]}
        s = slit_space()
        p, q = s["p"], s["q"]
        un = chain_metric(s, c["eps"], [p])[0, q]
        con = chain_metric_constrained(s, c["eps"], p, q)
        return [
            ClaimRecord("slit-d0", 4, sp, f"d_eps(p,q), eps={c['eps']:g}", (2.0, 2.0 + 2 * c["h"]),
                        "slit plane").judge(un),
            ClaimRecord("slit-dbar", 4, sp, "slit-respecting d_eps(p,q)", (2 * SQRT2 - 0.1, 2 * SQRT2 + 0.02),
                        "slit plane").judge(con),
        ]

    def c5():
        c = cfg.rational
        sp = {"generator": "rational-grid", "h": c["h"]}
        r = generate_rational_grid(c["h"])
        d = r.distance_matrix()
        out = []
        for eps in c["eps"]:
            once = chain_operator(d, eps)
            twice = chain_operator(once, eps)
            dev = max(_max_rel_dev(once, d), _max_rel_dev(twice, d))
            out.append(ClaimRecord(f"rational-{eps:g}", 5, sp, f"max rel. deviation of (d)_eps and ((d)_eps)_eps, eps={eps:g}",
                                   (0.0, 1e-12), "rationals").judge(dev))
        return out

    def c6():
        c = cfg.multi
        out, vals = [], []
        for K in c["K"]:
            sp = {"generator": "multi-edge-graph", "K": K, "h": c["h"]}
            g = generate_multi_edge(K, c["h"])
            v = chain_metric(g, c["h"], [g["p"]])[0, g["q"]]
            vals.append(v)
            out.append(ClaimRecord(f"multi-{K}", 6, sp, f"d_eps(p,q), eps={c['h']:g}", (1 + 1 / K, 1 + 1 / K),
                                   "multi-edge graph").judge(v))
        dec = all(b < a for a, b in zip(vals, vals[1:])) and all(v > 1 for v in vals)
        out.append(ClaimRecord("multi-order", 6, {"generator": "multi-edge-graph", "K": list(c["K"]), "h": c["h"]},
                               "values strictly decrease in K and stay above 1", (1.0, 1.0),
                               "multi-edge graph").judge(float(dec)))
        return out

    def c7():
        c = cfg.comb
        sp = {"generator": "comb", "h": c["h"]}
        s = generate_comb(c["h"])
        o = oracle_for(s)
        pairs = comb_pairs(s, c["pairs"])
        rows = chain_metric(s, c["eps"], [a for a, _ in pairs])
        err = max(abs(rows[k, b] - o.dbar(a, b)) for k, (a, b) in enumerate(pairs))
        return [ClaimRecord("comb", 7, sp, f"max |d_eps - dbar| over {len(pairs)} pairs", (0.0, 6 * c["eps"]),
                            "comb space").judge(err)]

    def c8():
        c = cfg.tower
        sp = {"generator": "yn-tower", "n": c["n"], "M": c["M"], "K": c["K"], "h": c["h"]}
        g = build_yn(c["n"], c["M"], c["K"], c["h"])
        tower = SpaceTower(g, c["levels"])
        p, q = g["p"], g["q"]
        probes = tower_probes(g)
        mats = [tower.probe(level, probes) for level in range(len(c["levels"]) + 1)]
        strict = sum(compare_metrics(a, b, 1e-9).relation == "leq-strict" for a, b in zip(mats, mats[1:]))
        n_levels = len(c["levels"])
        expected = [(1 - 1e-9, 1.1), (3 - 0.3, 3 + 0.1), (INF, INF)]
        out = []
        for level in range(1, n_levels + 1):
            iv = expected[level - 1] if level <= len(expected) else (INF, INF)
            out.append(ClaimRecord(f"tower-level-{level}", 8, sp,
                                   f"level-{level} value at (p,q), eps={c['levels'][level - 1]:g}", iv,
                                   "iterate tower").judge(tower.value(level, p, q)))
        out.append(ClaimRecord("tower-strict", 8, sp, "consecutive levels ordered leq-strict on probes",
                               (n_levels, n_levels), "iterate tower").judge(strict))
        return out

    def c9():
        out = []
        y = y_space()
        eps = cfg.y["eps"]
        w = extract_waypoints(y, eps, y["p"], y["q"], 0.5)
        out.append(ClaimRecord("waypoints-y", 9, {"generator": "y-spider", "K": cfg.y["K"], "h": cfg.y["h"]},
                               "waypoint additivity residual p->q, delta=1/2", (0.0, w.bound),
                               "minimizing chains").judge(w.residual))
        s = slit_space()
        c = cfg.slit
        ws = extract_waypoints(s, c["eps"], s["p"], s["q"], c["delta"],
                               graph=constrained_graph(s, c["eps"], slit_admissible))
        out.append(ClaimRecord("waypoints-slit", 9, {"generator": "slit-plane", "h": c["h"]},
                               "waypoint additivity residual p->q, slit-respecting", (0.0, ws.bound),
                               "minimizing chains").judge(ws.residual))
        return out

    def c10():
        s = slit_space()
        c = cfg.slit
        g = constrained_graph(s, c["eps"], slit_admissible)
        w = extract_waypoints(s, c["eps"], s["p"], s["q"], c["delta"], graph=g)
        stops = [s["p"], *w.points, s["q"]]
        rows = dict(zip(stops, graph_rows(g, stops)))
        poly = polyline_length(stops, lambda a, b: rows[a][b])
        ratio = abs(poly / w.total - 1)
        return [ClaimRecord("geodesic-slit", 10, {"generator": "slit-plane", "h": c["h"]},
                            "|L(waypoint polyline) / d_eps(p,q) - 1|, slit-respecting", (0.0, 0.03),
                            "approximate geodesic").judge(ratio)]

    table = {1: c1, 2: c2, 3: c3, 4: c4, 5: c5, 6: c6, 7: c7, 8: c8, 9: c9, 10: c10}
    return [(k, table[k]) for k in cfg.criteria]


def chain_metric_constrained(space, eps, s, t) -> float:
    return float(constrained_chain_metric(space, eps, slit_admissible, [s])[0, t])


def _max_rel_dev(a: DistanceMatrix, b: DistanceMatrix) -> float:
    x, y = a.values, b.values
    if not np.array_equal(np.isinf(x), np.isinf(y)):
        return INF
    fin = np.isfinite(x)
    return float(np.max(np.abs(x[fin] - y[fin]) / np.maximum(1.0, np.abs(y[fin])), initial=0.0))


# -- suite ------------------------------------------------------------------


@dataclass
class SuiteReport:
    preset: str
    claims: list[ClaimRecord] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if all(c.status in ("pass", "skipped") for c in self.claims) else 1

    def by_criterion(self) -> dict[int, list[ClaimRecord]]:
        out: dict[int, list[ClaimRecord]] = {}
        for c in self.claims:
            out.setdefault(c.criterion, []).append(c)
        return out

    def to_json(self) -> str:
        body = {
            "preset": self.preset,
            "summary": {s: sum(c.status == s for c in self.claims) for s in ("pass", "fail", "skipped")},
            "claims": [c.to_json() for c in self.claims],
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = [f"{'claim':<18} {'status':<8} {'measured':>22}  expected"]
        for c in self.claims:
            m = "-" if c.measured is None else format_float(c.measured)
            lo, hi = (format_float(v) for v in c.expected)
            lines.append(f"{c.claim:<18} {c.status:<8} {m:>22}  [{lo}, {hi}]  {c.quantity}")
        return "\n".join(lines)


def _run_one(criterion, runner):
    t0 = time.perf_counter()
    try:
        recs = runner()
    except ResourceLimitError as exc:
        recs = [ClaimRecord(f"criterion-{criterion}", criterion, {}, "resource cap", (0.0, 0.0), "",
                            status="skipped", note=str(exc))]
    except UnreachableError as exc:
        recs = [ClaimRecord(f"criterion-{criterion}", criterion, {}, "chain reconstruction", (0.0, 0.0), "",
                            status="fail", note=str(exc))]
    elapsed = time.perf_counter() - t0
    for r in recs:
        r.runtime = elapsed
    return criterion, recs, elapsed


def run_verify_suite(cfg: VerifyConfig) -> SuiteReport:
    """Evaluate every configured claim; writes JSON and timings when ``cfg.out`` is set."""
    report = SuiteReport(cfg.preset)
    jobs = _claims(cfg)
    with ThreadPoolExecutor(max(1, min(thread_count(), len(jobs)))) as pool:
        results = list(pool.map(lambda job: _run_one(*job), jobs))
    for criterion, recs, elapsed in sorted(results, key=lambda r: r[0]):
        report.claims.extend(recs)
        report.timings[f"criterion-{criterion}"] = round(elapsed, 3)
    if cfg.out:
        path = Path(cfg.out)
        path.write_text(report.to_json())
        path.with_suffix(".timings.json").write_text(json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
    return report


# -- sweeps -----------------------------------------------------------------


@dataclass
class SweepRow:
    h: float
    eps: float
    estimate: float
    runtime: float
    hops: int


def sweep(spec: SpaceSpec, eps_grid, h_grid, pair=("p", "q"), constrained: bool = False) -> list[SweepRow]:
    """d_eps(pair) over an (h, eps) grid; eps runs from large to small per h."""
    eps_grid = sorted({float(e) for e in eps_grid}, reverse=True)
    h_grid = sorted({float(h) for h in h_grid}, reverse=True)
    if not eps_grid or not h_grid:
        raise ValueError("sweep grids must be nonempty")
    for h in h_grid:
        if eps_grid[-1] < 3 * h * (1 - 1e-12):
            raise ValueError(f"eps {eps_grid[-1]:g} is below 3h = {3 * h:g}")
    rows = []
    for h in h_grid:
        space = make_space(spec.with_h(h))
        s, t = space[pair[0]], space[pair[1]]
        for eps in eps_grid:
            t0 = time.perf_counter()
            graph = constrained_graph(space, eps, predicate_for(space)) if constrained else space.epsilon_graph(eps)
            try:
                chain = chain_from_graph(graph, eps, s, t)
                est, hops = chain.length, chain.hops
            except UnreachableError:
                est, hops = INF, 0
            rows.append(SweepRow(h, eps, est, time.perf_counter() - t0, hops))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "eps", "estimate", "runtime", "hops"])
    for r in rows:
        w.writerow([format_float(r.h), format_float(r.eps), format_float(r.estimate), f"{r.runtime:.6f}", r.hops])
    return buf.getvalue()
