"""Command-line entry point: ``chainmetric <command> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chains import (
    EpsSchedule,
    SpaceTower,
    UnreachableError,
    chain_from_graph,
    eps_floor,
    estimate_d0,
    extract_waypoints,
    graph_rows,
)
from .core import DistanceMatrix, compare_metrics, format_float
from .generators import GENERATORS, ResourceLimitError, SpaceSpec, make_space
from .length import constrained_graph, polyline_length, predicate_for
from .space import load_space, save_space
from .verify import PRESETS, VerifyConfig, run_verify_suite, sweep, sweep_csv


class UsageError(Exception):
    """Bad arguments or configuration; exits with status 2."""


def _floats(text: str) -> list[float]:
    try:
        return [_num(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _num(text: str) -> float:
    """A float or a fraction such as 1/32."""
    text = text.strip()
    if "/" in text:
        a, b = text.split("/", 1)
        return float(a) / float(b)
    return float(text)


def _pair(space, text: str) -> tuple[int, int]:
    parts = [x.strip() for x in text.split(",")]
    if len(parts) != 2:
        raise UsageError(f"--pair needs two labels or ids, got {text!r}")
    return _point(space, parts[0]), _point(space, parts[1])


def _point(space, label: str) -> int:
    if label in space.landmarks:
        return space.landmarks[label]
    try:
        idx = int(label)
    except ValueError:
        raise UsageError(f"unknown landmark {label!r}; known: {', '.join(sorted(space.landmarks))}") from None
    if not 0 <= idx < space.n:
        raise UsageError(f"point id {idx} out of range for {space.n} points")
    return idx


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"not serializable: {type(x)}")


def _fmt(x: float) -> str:
    return format_float(float(x))


def _graph(space, eps, constrained: bool):
    if constrained:
        return constrained_graph(space, eps, predicate_for(space))
    return space.epsilon_graph(eps)


# -- commands ---------------------------------------------------------------


def cmd_gen(args) -> int:
    extra = {}
    spec = SpaceSpec(args.generator, args.h, args.K, args.n, args.M, args.extent, extra)
    space = make_space(spec)
    save_space(space, args.out)
    print(f"{args.generator}: {space.n} points -> {args.out}")
    return 0


def cmd_chain(args) -> int:
    space = load_space(args.space)
    graph = _graph(space, args.eps, args.constrained)
    if args.source is not None and args.target is not None:
        s, t = _point(space, args.source), _point(space, args.target)
        try:
            chain = chain_from_graph(graph, args.eps, s, t)
        except UnreachableError:
            print("inf")
            return 0
        print(_fmt(chain.length))
        if args.out:
            _emit(chain.to_json(), args.out)
        return 0
    sources = None if args.source is None else [_point(space, args.source)]
    rows = graph_rows(graph, sources)
    if sources is None:
        m = DistanceMatrix(rows)
        if args.out:
            m.save(args.out)
        else:
            sys.stdout.write(m.to_csv())
    else:
        line = ",".join(_fmt(v) for v in rows[0])
        if args.out:
            Path(args.out).write_text(line + "\n")
        else:
            print(line)
    return 0


def cmd_d0(args) -> int:
    space = load_space(args.space)
    s, t = _pair(space, args.pair)
    floor = eps_floor(space)
    try:
        sched = EpsSchedule(args.schedule, floor)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rep = estimate_d0(space, s, t, sched, args.rtol,
                      graph_fn=(lambda e: _graph(space, e, True)) if args.constrained else None)
    _emit(rep.to_json(), args.out)
    return 0


def cmd_iterate(args) -> int:
    space = load_space(args.space)
    s, t = _pair(space, args.pair)
    tower = SpaceTower(space, args.levels)
    values = [tower.value(level, s, t) for level in range(len(args.levels) + 1)]
    probes = sorted({s, t, *range(0, space.n, max(1, space.n // 24))})
    mats = [tower.probe(level, probes) for level in range(len(args.levels) + 1)]
    rel = [compare_metrics(a, b, 1e-9).relation for a, b in zip(mats, mats[1:])]
    _emit({"levels": args.levels, "values": [None if math.isinf(v) else v for v in values],
           "relations": rel}, args.out)
    return 0


def cmd_length(args) -> int:
    data = json.loads(Path(args.path).read_text())
    if isinstance(data, dict):
        if "space" in data:
            space = load_space(Path(args.path).parent / data["space"])
            print(_fmt(polyline_length(data["points"], space)))
            return 0
        verts, metric = data["vertices"], data.get("metric", "euclidean")
    else:
        verts, metric = data, args.metric
    print(_fmt(polyline_length(verts, metric)))
    return 0


def cmd_waypoints(args) -> int:
    space = load_space(args.space)
    s, t = _pair(space, args.pair)
    w = extract_waypoints(space, args.eps, s, t, args.delta, graph=_graph(space, args.eps, args.constrained))
    _emit(w.to_json(), args.out)
    return 0


def cmd_verify(args) -> int:
    try:
        cfg = VerifyConfig.from_preset(args.preset, args.out)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.criteria:
        cfg.criteria = tuple(int(c) for c in args.criteria.split(","))
    report = run_verify_suite(cfg)
    print(report.table())
    return report.exit_code


def cmd_sweep(args) -> int:
    try:
        spec = SpaceSpec(**json.loads(args.space_spec))
        rows = sweep(spec, args.eps_grid, args.h_grid, tuple(args.pair.split(",")), args.constrained)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    text = sweep_csv(rows)
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chainmetric", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a sample space")
    g.add_argument("generator", choices=GENERATORS)
    g.add_argument("--h", type=_num, required=True, help="sample resolution, e.g. 1/256")
    g.add_argument("--K", type=int, default=2)
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--M", type=int, default=1)
    g.add_argument("--extent", type=float, default=1.5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("chain", help="chain metric d_eps")
    c.add_argument("--space", required=True)
    c.add_argument("--eps", type=_num, required=True)
    c.add_argument("--source")
    c.add_argument("--target")
    c.add_argument("--constrained", action="store_true", help="only admissible steps")
    c.add_argument("--out", help="matrix file (.dmx or .csv) or chain JSON")
    c.set_defaults(func=cmd_chain)

    d = sub.add_parser("d0", help="estimate d0 along a decreasing eps schedule")
    d.add_argument("--space", required=True)
    d.add_argument("--pair", required=True)
    d.add_argument("--schedule", type=_floats, required=True)
    d.add_argument("--rtol", type=float, default=1e-2)
    d.add_argument("--constrained", action="store_true")
    d.add_argument("--out")
    d.set_defaults(func=cmd_d0)

    it = sub.add_parser("iterate", help="iterated chain metrics at (pair)")
    it.add_argument("--space", required=True)
    it.add_argument("--levels", type=_floats, required=True)
    it.add_argument("--pair", required=True)
    it.add_argument("--out")
    it.set_defaults(func=cmd_iterate)

    ln = sub.add_parser("length", help="polyline length of a JSON path")
    ln.add_argument("--path", required=True)
    ln.add_argument("--metric", default="euclidean", choices=("euclidean", "sup"))
    ln.set_defaults(func=cmd_length)

    w = sub.add_parser("waypoints", help="equally spaced points on a minimizing chain")
    w.add_argument("--space", required=True)
    w.add_argument("--eps", type=_num, required=True)
    w.add_argument("--pair", required=True)
    w.add_argument("--delta", type=_num, required=True)
    w.add_argument("--constrained", action="store_true")
    w.add_argument("--out")
    w.set_defaults(func=cmd_waypoints)

    v = sub.add_parser("verify", help="run the claims table")
    v.add_argument("--preset", required=True, help=f"one of {', '.join(PRESETS)}")
    v.add_argument("--criteria", help="comma-separated subset, e.g. 1,4,6")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="d_eps over an (h, eps) grid as CSV")
    s.add_argument("--space-spec", required=True, help='JSON, e.g. {"generator": "y-spider", "h": 0.0078125, "K": 16}')
    s.add_argument("--eps-grid", type=_floats, required=True)
    s.add_argument("--h-grid", type=_floats, required=True)
    s.add_argument("--pair", default="p,q")
    s.add_argument("--constrained", action="store_true")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UnreachableError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
