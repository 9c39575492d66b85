import os
from pathlib import Path

import numpy as np
import pytest

from bernvine import ase_study, backtests, cli, vine
from bernvine.empirical import PseudoSample, kendall_matrix
from bernvine.synthetic import PANEL_FILE, SMALL_FILE, fixture_path

GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("BERNVINE_REGEN_GOLDEN") == "1"


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_body(path):
    return [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]


def check_golden(path, name):
    target = GOLDEN / name
    text = Path(path).read_text()
    if REGEN:
        GOLDEN.mkdir(exist_ok=True)
        target.write_text(text)
    assert text == target.read_text()


@pytest.fixture(scope="module")
def small():
    return fixture_path(SMALL_FILE)


def test_fit_round_trips_through_simulate_loader(small, tmp_path):
    model = tmp_path / "m.txt"
    report = tmp_path / "r.csv"
    assert run("fit", "--input", small, "--output", model, "--report", report, "--seed", 4) == 0
    text = model.read_text()
    assert text.splitlines()[0] == "# seed=4"
    loaded = vine.loads(text)
    assert vine.dumps(loaded) == "\n".join(read_body(model)) + "\n"
    lines = report.read_text().splitlines()
    assert lines[0] == "# seed=4" and lines[1].startswith("tree,edge,label,arm,family")
    assert len(lines) == 2 + 3
    check_golden(model, "fit_bernstein_small.txt")


def test_parametric_fit_and_report(small, tmp_path):
    model = tmp_path / "m.txt"
    report = tmp_path / "r.csv"
    code = run("fit", "--input", small, "--arm", "parametric", "--kind", "D", "--output", model,
               "--report", report)
    assert code in (0, 3)
    assert isinstance(vine.loads(model.read_text()).edge(0, 0).family.value, str)
    check_golden(model, "fit_parametric_small.txt")


def test_bernstein_never_exits_unstable(small, tmp_path):
    for kind in "CD":
        for m in ("4", "8", "20"):
            assert run("fit", "--input", small, "--kind", kind, "--m", m,
                       "--output", tmp_path / "m.txt") == 0


def test_input_errors(small, tmp_path, capsys):
    assert run("fit", "--input", tmp_path / "nope.csv") == 2
    assert "input error" in capsys.readouterr().err
    assert run("fit", "--input", small, "--columns", "A1,ZZ", "--output", tmp_path / "m") == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("bernvine-vine 1\nstructure C 2 0 1\nedge 0 0 parametric nonsense 1\n")
    assert run("simulate", "--model", bad, "--n", 5) == 2
    assert run("simulate", "--model", tmp_path / "none.txt", "--n", 5) == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("no_such_key = 1\n")
    assert run("fit", "--input", small, "--config", cfg) == 2


def test_config_file_with_flag_override(small, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# fit settings\nkind = D\nm = 5\nseed = 9\n")
    out = tmp_path / "m.txt"
    assert run("fit", "--input", small, "--config", cfg, "--seed", 2, "--output", out) == 0
    text = out.read_text()
    model = vine.loads(text)
    assert text.startswith("# seed=2") and model.structure.kind == "D" and model.edge(0, 0).m == 5


def write_independence_model(path, d=3):
    model = vine.independence_vine(vine.VineStructure("C", tuple(range(d))))
    path.write_text(vine.dumps(model))


def test_simulate_contract(tmp_path):
    model = tmp_path / "ind.txt"
    write_independence_model(model)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("simulate", "--model", model, "--n", 2000, "--seed", 5, "--output", a) == 0
    assert run("simulate", "--model", model, "--n", 2000, "--seed", 5, "--output", b) == 0
    assert a.read_bytes() == b.read_bytes()
    body = read_body(a)
    assert body[0] == "V1,V2,V3"
    u = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]])
    tau = kendall_matrix(PseudoSample(u))
    assert np.abs(tau[np.triu_indices(3, 1)]).max() < 0.05
    empty = tmp_path / "e.csv"
    assert run("simulate", "--model", model, "--n", 0, "--output", empty, "--delimiter", ";") == 0
    assert read_body(empty) == ["V1;V2;V3"]


def test_simulate_golden(small, tmp_path):
    model = tmp_path / "m.txt"
    run("fit", "--input", small, "--output", model)
    out = tmp_path / "s.csv"
    assert run("simulate", "--model", model, "--n", 50, "--seed", 1, "--output", out) == 0
    check_golden(out, "simulate_small.csv")


def test_ase_study_outputs(tmp_path):
    summ, recs = tmp_path / "s.csv", tmp_path / "r.csv"
    code = run("ase-study", "--dims", "3", "--kinds", "C", "--sizes", "200", "--replications", 2,
               "--seed", 13, "--threads", 1, "--summary", summ, "--records", recs)
    assert code == 0
    s, r = summ.read_text().splitlines(), recs.read_text().splitlines()
    assert s[0] == r[0] == "# seed=13"
    assert s[1] == ",".join(ase_study.SUMMARY_COLUMNS)
    assert r[1] == ",".join(ase_study.RECORD_COLUMNS)
    assert len(s) == 2 + 2 and len(r) == 2 + 4
    # human summary rounded to 6 decimals
    assert len(s[2].split(",")[4].split(".")[1]) == 6


def test_var_backtest_shape(small, tmp_path):
    fc, rep = tmp_path / "f.csv", tmp_path / "r.csv"
    code = run("var-backtest", "--input", small, "--input-kind", "returns", "--window", 150,
               "--n-out", 3, "--K", 1000, "--n-sim", 199, "--seed", 3,
               "--forecasts", fc, "--report", rep)
    assert code == 0
    lines = read_body(fc)
    assert lines[0] == "date,arm,level,side,var,realized,hit"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 3 * 4 * 2
    realized = {}
    for date, arm, level, side, var, y, hit in rows:
        realized.setdefault(date, set()).add(y)
        assert hit == str(int(float(y) < float(var)) if side == "long" else int(float(y) > float(var)))
    assert all(len(v) == 1 for v in realized.values())
    report = read_body(rep)
    assert report[0] == ",".join(backtests.REPORT_COLUMNS)
    assert len(report) - 1 == 4 * 3 * 2
    assert rep.read_text().splitlines()[0] == "# seed=3"


def test_full_panel_expected_exceedances_row(tmp_path):
    # the expected column depends only on levels and out-of-sample length
    hits = tmp_path / "h.csv"
    lines = ["date,arm,level,side,hit"]
    for level, side in ((0.02, "long"), (0.05, "long"), (0.1, "long"), (0.975, "short")):
        lines += [f"d{i},x,{level},{side},0" for i in range(300)]
    hits.write_text("\n".join(lines) + "\n")
    out = tmp_path / "r.csv"
    assert run("backtest-only", "--hits", hits, "--n-sim", 199, "--output", out) == 0
    rows = [ln.split(",") for ln in read_body(out)[1:]]
    expected = {}
    for r in rows:
        expected[r[0]] = int(r[4])
    assert expected == {"0.02": 6, "0.05": 15, "0.1": 30, "0.975": 8}
    assert fixture_path(PANEL_FILE).endswith(".csv")


def test_backtest_only_plain_column(tmp_path):
    hits = tmp_path / "h.txt"
    h = np.zeros(250, dtype=int)
    h[[10, 11, 90, 200]] = 1
    hits.write_text("hit\n" + "\n".join(map(str, h)) + "\n")
    out = tmp_path / "r.csv"
    assert run("backtest-only", "--hits", hits, "--n-sim", 199, "--output", out) == 2
    assert run("backtest-only", "--hits", hits, "--alpha", 0.02, "--n-sim", 199,
               "--output", out) == 0
    assert len(read_body(out)) == 1 + 3
    hits.write_text("hit\n0\n2\n")
    assert run("backtest-only", "--hits", hits, "--alpha", 0.02) == 2


def test_threads_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.default_threads() == 3
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    with pytest.raises(cli.risk.InputError):
        cli.default_threads()
