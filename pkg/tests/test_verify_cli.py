import json
import math

import pytest

from chainmetric import cli
from chainmetric.core import DistanceMatrix, SparsePoint
from chainmetric.generators import SpaceSpec
from chainmetric.space import load_space
from chainmetric.verify import (
    PRESETS,
    ClaimRecord,
    SuiteReport,
    VerifyConfig,
    run_verify_suite,
    sweep,
    sweep_csv,
    within,
)


# -- presets and records ----------------------------------------------------


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_consistent(name):
    cfg = VerifyConfig.from_preset(name)
    assert cfg.criteria == tuple(range(1, 11))


def test_unknown_and_bad_presets():
    with pytest.raises(ValueError, match="unknown preset"):
        VerifyConfig.from_preset("laptop")
    cfg = VerifyConfig.from_preset("smoke")
    cfg.slit["eps"] = cfg.slit["h"]
    with pytest.raises(ValueError, match="3h"):
        cfg.check()


def test_within():
    assert within(1.0, (1.0, 1.0))
    assert within(math.inf, (3.0, math.inf))
    assert not within(math.inf, (0.0, 1.0))
    assert not within(1.1, (0.0, 1.0))


def test_record_judging_and_exit_code():
    ok = ClaimRecord("a", 1, {}, "q", (0.0, 1.0), "t").judge(0.5)
    bad = ClaimRecord("b", 2, {}, "q", (0.0, 1.0), "t").judge(2.0)
    skip = ClaimRecord("c", 3, {}, "q", (0.0, 0.0), "t", status="skipped")
    assert SuiteReport("x", [ok, skip]).exit_code == 0
    rep = SuiteReport("x", [ok, bad, skip])
    assert rep.exit_code == 1 and set(rep.by_criterion()) == {1, 2, 3}
    body = json.loads(rep.to_json())
    assert body["summary"] == {"pass": 1, "fail": 1, "skipped": 1}
    assert "runtime" not in body["claims"][0]
    assert "b" in rep.table()


def test_report_is_deterministic(tmp_path):
    texts = []
    for run in range(2):
        cfg = VerifyConfig.from_preset("smoke", str(tmp_path / f"r{run}.json"))
        cfg.criteria = (5, 6, 7)
        rep = run_verify_suite(cfg)
        assert rep.exit_code == 0
        texts.append((tmp_path / f"r{run}.json").read_bytes())
        assert (tmp_path / f"r{run}.timings.json").exists()
    assert texts[0] == texts[1]


# -- sweeps -----------------------------------------------------------------


def test_sweep_rows_decrease_in_eps():
    spec = SpaceSpec("y-spider", 1 / 128, K=16)
    rows = sweep(spec, [1 / 8, 1 / 16], [1 / 64, 1 / 128])
    assert [(r.h, r.eps) for r in rows] == [(1 / 64, 1 / 8), (1 / 64, 1 / 16), (1 / 128, 1 / 8), (1 / 128, 1 / 16)]
    for a, b in zip(rows[::2], rows[1::2]):
        assert a.estimate <= b.estimate
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "h,eps,estimate,runtime,hops" and len(text.splitlines()) == 5


def test_sweep_rejects_eps_below_floor():
    with pytest.raises(ValueError, match="3h"):
        sweep(SpaceSpec("y-spider", 1 / 64, K=8), [1 / 64], [1 / 64])


# -- command line -----------------------------------------------------------


@pytest.fixture
def ydir(tmp_path):
    assert cli.main(["gen", "y-spider", "--h", "1/64", "--K", "8", "--out", str(tmp_path / "y.json")]) == 0
    return tmp_path


def test_cli_chain(ydir, capsys):
    y = str(ydir / "y.json")
    capsys.readouterr()
    assert cli.main(["chain", "--space", y, "--eps", "1/8", "--source", "p", "--target", "q",
                     "--out", str(ydir / "c.json")]) == 0
    d = float(capsys.readouterr().out)
    assert 3 - 5 / 8 <= d <= 3
    assert json.loads((ydir / "c.json").read_text())["points"][0] == 0
    assert cli.main(["chain", "--space", y, "--eps", "1/16", "--source", "p", "--target", "q"]) == 0
    assert capsys.readouterr().out.strip() == "inf"
    assert cli.main(["chain", "--space", y, "--eps", "1/8", "--out", str(ydir / "m.dmx")]) == 0
    assert DistanceMatrix.load(str(ydir / "m.dmx")).n > 100


def test_cli_d0_iterate_waypoints(ydir, capsys):
    y = str(ydir / "y.json")
    assert cli.main(["d0", "--space", y, "--pair", "p,q", "--schedule", "1/4,1/8"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["schedule"] == [0.25, 0.125] and all(rep["monotone"])
    assert cli.main(["d0", "--space", y, "--pair", "p,q", "--schedule", "1/128"]) == 2
    assert cli.main(["iterate", "--space", y, "--pair", "p,q", "--levels", "1/4,1/8"]) == 0
    it = json.loads(capsys.readouterr().out)
    assert it["values"][0] == 1.0 and len(it["relations"]) == 2
    foot = load_space(y).points.index(SparsePoint.of({1: 0.5}))
    assert cli.main(["waypoints", "--space", y, "--eps", "1/16", "--pair", f"q,{foot}", "--delta", "1/2",
                     "--out", str(ydir / "w.json")]) == 0
    w = json.loads((ydir / "w.json").read_text())
    assert len(w["points"]) == math.floor(w["total"] / 0.5) and 2.5 - 2 / 16 <= w["total"] <= 2.5
    assert cli.main(["waypoints", "--space", y, "--eps", "1/8", "--pair", "p,q", "--delta", "1/4"]) == 1
    assert cli.main(["waypoints", "--space", y, "--eps", "1/8", "--pair", "p,nowhere", "--delta", "1/2"]) == 2


def test_cli_length(tmp_path, capsys):
    (tmp_path / "a.json").write_text("[[0, 0], [3, 4]]")
    (tmp_path / "b.json").write_text('{"vertices": [[0, 0], [3, 4]], "metric": "sup"}')
    assert cli.main(["length", "--path", str(tmp_path / "a.json")]) == 0
    assert cli.main(["length", "--path", str(tmp_path / "b.json")]) == 0
    assert capsys.readouterr().out.split() == ["5", "4"]


def test_cli_usage_errors(tmp_path, capsys):
    assert cli.main(["verify", "--preset", "laptop"]) == 2
    assert cli.main(["nonsense"]) == 2
    assert cli.main(["gen", "y-spider", "--h", "1/2", "--K", "8", "--out", str(tmp_path / "y.json")]) == 1
    assert cli.main(["sweep", "--space-spec", '{"generator": "y-spider", "h": 0.0625, "K": 8}',
                     "--eps-grid", "1/64", "--h-grid", "1/64"]) == 2


def test_cli_verify_subset(tmp_path, capsys):
    assert cli.main(["verify", "--preset", "smoke", "--criteria", "6", "--out", str(tmp_path / "v.json")]) == 0
    assert "pass" in capsys.readouterr().out
    assert json.loads((tmp_path / "v.json").read_text())["summary"]["fail"] == 0


def test_cli_tower_round_trip(tmp_path, capsys):
    out = str(tmp_path / "t.json")
    assert cli.main(["gen", "yn-tower", "--n", "2", "--M", "4", "--K", "4", "--h", "1/32", "--out", out]) == 0
    assert not (tmp_path / "t.dmx").exists()
    capsys.readouterr()
    assert cli.main(["iterate", "--space", out, "--pair", "p,q", "--levels", "1/16,1/4"]) == 0
    it = json.loads(capsys.readouterr().out)
    assert it["values"][0] == pytest.approx(1.0)
    assert it["values"][1] == it["values"][2] and it["relations"][1] == "equal"
