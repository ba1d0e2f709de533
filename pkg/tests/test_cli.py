import csv
import json
from pathlib import Path

import pytest

from uavflow.cli import main, parse_grid
from uavflow.errors import ValidationError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SMALL_SIM = """
[network]
topology = "tandem"
v = 8.0
w = 2.0
theta = 400.0
capacities = [[800.0, 800.0], [600.0, 600.0]]
inflows = [500.0]

[generator]
rates = [[-1.0, 1.0], [1.0, -1.0]]

[sim]
horizon = 5.0
dt = 0.01
n_paths = 2
seed = 4
"""


def _report(out):
    return json.loads((out / "report.json").read_text())


@pytest.mark.parametrize(
    "text, values",
    [
        ("0..400 step 50", [0, 50, 100, 150, 200, 250, 300, 350, 400]),
        ("0..1:0.5", [0, 0.5, 1.0]),
        ("0, 100,200", [0, 100, 200]),
    ],
)
def test_parse_grid(text, values):
    assert parse_grid(text) == pytest.approx(values)


@pytest.mark.parametrize("text", ["0..10 step 0", "10..0:1", "a,b", ""])
def test_parse_grid_rejects(text):
    with pytest.raises(ValidationError):
        parse_grid(text)


def test_steady_state(tmp_path, capsys):
    assert main(["steady-state", "--scenario", str(SCENARIOS / "tandem_mu.toml"), "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path)
    assert rep["result"]["p"] == pytest.approx([0.5, 0.5])
    assert json.loads(capsys.readouterr().out)["command"] == "steady-state"


def test_check_reports_necessary_failure(tmp_path):
    assert main(["check", "--scenario", str(SCENARIOS / "merge_unstable.toml"), "--out", str(tmp_path)]) == 0
    nec = _report(tmp_path)["result"]["necessary"]
    assert nec["passed"] is False
    assert [e["label"] for e in nec["entries"] if not e["passed"]] == ["queue 3"]


def test_certify_merge_reports_flag_and_reference(tmp_path):
    assert main(["certify", "--scenario", str(SCENARIOS / "merge_stable.toml"), "--out", str(tmp_path)]) == 0
    res = _report(tmp_path)["result"]
    assert res["region_minima"]["certificate"] == pytest.approx([1100.0, 600.0])
    assert res["sufficient"]["feasible"] is False
    assert res["reference_witness"]["satisfied"] == [True, False]


def test_sweep_delta_writes_csv(tmp_path):
    code = main(
        ["sweep", "--scenario", str(SCENARIOS / "tandem_delta.toml"), "--out", str(tmp_path),
         "--axis", "delta_c", "0..300 step 150"]
    )
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert [r["param"] for r in rows] == ["0.00", "150.00", "300.00"]
    assert all(r["a_n"] == "600.00" for r in rows)
    a_s = [float(r["a_s"]) for r in rows]
    assert a_s == sorted(a_s, reverse=True)


def test_simulate_writes_trajectories(tmp_path):
    scen = tmp_path / "small.toml"
    scen.write_text(SMALL_SIM)
    out = tmp_path / "out"
    assert main(["simulate", "--scenario", str(scen), "--out", str(out)]) == 0
    rep = _report(out)
    assert (out / "trajectory_0.csv").exists() and (out / "trajectory_1.csv").exists()
    assert [r["seed"] for r in rep["result"]["runs"]] == [4, 5]
    assert "ensemble" in rep["result"]
    assert all(r["mass_balance_residual"] >= 0 for r in rep["result"]["runs"])


def test_seed_override_is_reproducible(tmp_path):
    scen = tmp_path / "small.toml"
    scen.write_text(SMALL_SIM)
    for name in ("a", "b"):
        assert main(["simulate", "--scenario", str(scen), "--out", str(tmp_path / name), "--seed", "99"]) == 0
    assert (tmp_path / "a" / "trajectory_0.csv").read_text() == (tmp_path / "b" / "trajectory_0.csv").read_text()


def test_stationary_dist(tmp_path):
    scen = tmp_path / "single.toml"
    scen.write_text((SCENARIOS / "single.toml").read_text().replace("empirical_paths = 4", "empirical_paths = 0"))
    assert main(["stationary-dist", "--scenario", str(scen), "--out", str(tmp_path)]) == 0
    res = _report(tmp_path)["result"]
    assert res["spectral"]["atom_at_zero"] == pytest.approx([1 / 3, 0.0])
    header = (tmp_path / "stationary_cdf.csv").read_text().splitlines()[0]
    assert header == "q,F0,F1,total"


def test_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[network\n")
    assert main(["check", "--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert "ParseError" in capsys.readouterr().err
    assert main(["check", "--scenario", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 1
    assert main(["stationary-dist", "--scenario", str(SCENARIOS / "tandem_mu.toml"), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(["frobnicate", "--scenario", "x"])
