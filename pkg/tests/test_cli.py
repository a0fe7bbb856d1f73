import csv
import json

import pytest

from trunclap.cli import (
    EXIT_OK,
    EXIT_USAGE,
    UsageError,
    main,
    parse_grid,
)
from trunclap.nonlinearity import make_cubic


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_constant(capsys):
    code, out, _ = run(capsys, "solve", "--xi", "1")
    assert code == EXIT_OK
    s = json.loads(out)
    assert s["classification"]["kind"] == "constant"
    assert s["switches"] == []


def test_solve_writes_csv_and_json(tmp_path, capsys):
    base = tmp_path / "run"
    code, _, _ = run(capsys, "solve", "--xi", "0.5", "--k", "2", "--out", str(base),
                     "--phase-plane")
    assert code == EXIT_OK
    rows = read_csv(str(base) + ".csv")
    assert list(rows[0]) == ["r", "u", "uprime", "Au", "regime", "segment_index", "energy"]
    assert float(rows[0]["r"]) == 0.0 and float(rows[0]["u"]) == 0.5
    assert {r["regime"] for r in rows} == {"SOE", "FOE"}
    s = json.loads((tmp_path / "run.json").read_text())
    assert s["residual_max"] <= 1e-7 and s["branch_consistent"]


def test_json_switch_invariants(tmp_path, capsys):
    base = tmp_path / "sw"
    run(capsys, "solve", "--xi", "0.9", "--k", "2", "--out", str(base))
    s = json.loads((tmp_path / "sw.json").read_text())
    sw = s["switches"]
    assert sw[0]["direction"] == "FOE->SOE"
    assert sw[0]["u"] == pytest.approx(make_cubic(1.0).beta, abs=1e-15)
    assert sw[0]["jump"] == 0.0
    assert len(sw) <= 3
    assert all(w["jump"] > 0 for w in sw if w["direction"] == "SOE->FOE")


def test_solve_from_switch(capsys):
    code, out, _ = run(capsys, "solve", "--g", "cubic:3", "--k", "2", "--r0", "5",
                       "--from-switch")
    assert code == EXIT_OK
    s = json.loads(out)
    assert s["class"] == "C" and s["xi"] == 1.0
    assert s["theta"] == pytest.approx(-5 / 3)


def test_solve_with_theta_reports_k1_outcome(capsys):
    code, out, _ = run(capsys, "solve", "--g", "scaled-cubic:0.25:1", "--xi", "0.6",
                       "--theta", "-0.2", "--truncation", "40")
    assert code == EXIT_OK
    s = json.loads(out)
    assert s["kind"] == "periodic"
    assert s["E"] == pytest.approx(0.0569, rel=1e-12)


def test_solve_minus_mirrors(capsys):
    _, plus, _ = run(capsys, "solve", "--xi", "-0.5", "--k", "2")
    _, minus, _ = run(capsys, "solve", "--xi", "0.5", "--k", "2", "--equation", "minus")
    p, m = json.loads(plus), json.loads(minus)
    assert [w["r"] for w in p["switches"]] == pytest.approx([w["r"] for w in m["switches"]])


def test_cross_check_flag(capsys):
    code, out, _ = run(capsys, "solve", "--xi", "-2", "--k", "2", "--cross-check")
    assert code == EXIT_OK
    assert all(r["passed"] for r in json.loads(out)["cross_check"])


def test_sweep_xi(tmp_path, capsys):
    base = tmp_path / "sweep"
    code, _, _ = run(capsys, "sweep", "--xi=-2:2:9", "--out", str(base))
    assert code == EXIT_OK
    rows = read_csv(str(base) + ".csv")
    assert [float(r["xi"]) for r in rows] == pytest.approx([-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2])
    kinds = {float(r["xi"]): r["kind"] for r in rows}
    assert kinds[1.0] == kinds[-1.0] == kinds[0.0] == "constant"
    assert kinds[2.0] == "unbounded_up" and kinds[-2.0] == "unbounded_down"
    hist = json.loads((tmp_path / "sweep.json").read_text())["histogram"]
    assert sum(hist.values()) == 9


def test_sweep_r0(capsys):
    code, out, err = run(capsys, "sweep", "--g", "cubic:3", "--k", "2", "--r0", "0.5,1.5,4,5")
    assert code == EXIT_OK
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["r0", "class"]
    assert [r[1] for r in rows[1:]] == ["A", "A", "A", "C"]
    assert json.loads(err)["histogram"] == {"A": 3, "C": 1}


def test_sweep_is_bit_reproducible(tmp_path, capsys):
    texts = []
    for name, workers in (("a", "1"), ("b", "2")):
        base = tmp_path / name
        run(capsys, "sweep", "--xi=-1.8:1.8:7", "--k", "2", "--workers", workers,
            "--out", str(base))
        texts.append((tmp_path / f"{name}.csv").read_bytes())
    assert texts[0] == texts[1]


def test_critical_json(tmp_path, capsys):
    code, out, _ = run(capsys, "critical", "--g", "cubic:3", "--k", "2", "--tol", "0.05")
    assert code == EXIT_OK
    d = json.loads(out)
    lo, hi = d["r0_bracket"]
    assert d["r0_lower_bound"] <= lo < hi <= d["r0_upper_bound"]
    assert hi - lo <= 0.05
    assert d["xi_star"] < d["xi_bracket"][0]


def test_critical_k1(capsys):
    code, out, _ = run(capsys, "critical", "--k", "1")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["r0_bracket"] is None
    assert d["k1_check"]["passed"] is True


def test_period_cross_check(capsys):
    code, out, _ = run(capsys, "period", "--g", "scaled-cubic:0.25:1", "--xi", "0.6",
                       "--theta", "-0.2", "--cross-check")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["kind"] == "periodic" and d["E"] < d["G_alpha"]
    assert d["cross_check"]["rel_dev"] <= 1e-5


def test_audit(capsys):
    code, out, _ = run(capsys, "audit", "--xi", "0.5", "--k", "2", "--until", "30")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["residual_max"] <= 1e-7 and d["branch_consistent"]
    assert "energy_audit" in d


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"g": "cubic:3", "k": 2, "tol-rel": 1e-11, "r0": "0.5,5"}))
    code, out, _ = run(capsys, "sweep", "--config", str(cfg))
    assert code == EXIT_OK
    assert [r[1] for r in list(csv.reader(out.splitlines()))[1:]] == ["A", "C"]
    code, out, _ = run(capsys, "sweep", "--config", str(cfg), "--r0", "4")
    assert [r[1] for r in list(csv.reader(out.splitlines()))[1:]] == ["A"]


@pytest.mark.parametrize(
    "argv",
    [
        ["solve"],
        ["solve", "--theta", "0.1"],
        ["solve", "--from-switch", "--k", "2"],
        ["solve", "--xi", "0.5", "--k", "0"],
        ["solve", "--xi", "0.5", "--g", "sine"],
        ["solve", "--xi", "0.5", "--truncation", "-1"],
        ["sweep", "--xi", "0:1:3", "--r0", "1,2"],
        ["sweep", "--r0", "1,2", "--k", "1"],
        ["sweep", "--xi", "0:1"],
        ["period", "--xi", "0.5", "--theta", "0", "--k", "2"],
        ["period", "--xi", "0.5"],
        ["audit"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert err.startswith("error:")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    code, _, _ = run(capsys, "solve", "--config", str(cfg), "--xi", "1")
    assert code == EXIT_USAGE


def test_argparse_rejects_unknown_command():
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 2


@pytest.mark.parametrize(
    "spec, expected",
    [("0:1:3", [0.0, 0.5, 1.0]), ("2:5:1", [2.0]), ("1, 2,3", [1.0, 2.0, 3.0]),
     (0.5, [0.5]), ([1, 2], [1.0, 2.0])],
)
def test_parse_grid(spec, expected):
    assert parse_grid(spec) == expected


@pytest.mark.parametrize("spec", ["0:1", "0:1:0"])
def test_parse_grid_errors(spec):
    with pytest.raises(UsageError):
        parse_grid(spec)
