import numpy as np
import pytest

from conftest import MERGE_CAPS
from uavflow.ctmc import stationary_distribution, validate_generator
from uavflow.errors import ClampBudgetExceeded, InvalidNetwork, TooFewSamples, UnstableQueue
from uavflow.netmodel import NetworkParams
from uavflow.sim import (
    empirical_cdf,
    ensemble_stability,
    mass_balance_audit,
    simulate,
    stability_metric,
    upstream_caps,
)

ONE = validate_generator([[0.0]])


def _single(a, caps=(800.0, 400.0)):
    return NetworkParams("single", [list(caps)], (a,))


@pytest.mark.parametrize(
    "params",
    [
        NetworkParams("single", [[800.0, 400.0]], (0.0,)),
        NetworkParams("tandem", [[800.0, 800.0], [600.0, 600.0]], (0.0,), v=8, w=2, theta=400),
        NetworkParams("merge", MERGE_CAPS, (0.0, 0.0), v=8, w=2, theta=400),
    ],
    ids=["single", "tandem", "merge"],
)
def test_empty_network_stays_empty(params, sym2):
    tr = simulate(params, sym2, np.zeros(params.n_queues), horizon=20, dt=0.01, seed=3)
    assert np.all(tr.q == 0.0)
    assert np.all(tr.f == 0.0)


def test_same_seed_same_trajectory(merge_stable, sym2):
    a = simulate(merge_stable, sym2, [0, 0, 0], horizon=10, dt=1e-2, seed=42)
    b = simulate(merge_stable, sym2, [0, 0, 0], horizon=10, dt=1e-2, seed=42)
    np.testing.assert_array_equal(a.q, b.q)
    np.testing.assert_array_equal(a.modes, b.modes)
    c = simulate(merge_stable, sym2, [0, 0, 0], horizon=10, dt=1e-2, seed=43)
    assert not np.array_equal(a.modes, c.modes) or not np.array_equal(a.q, c.q)


@pytest.mark.parametrize("fixture", ["tandem_flat", "merge_unstable"])
def test_domain_and_flow_bounds(fixture, sym2, request):
    p = request.getfixturevalue(fixture)
    tr = simulate(p, sym2, np.zeros(p.n_queues), horizon=30, dt=1e-3, seed=7, record_stride=5)
    assert np.all(tr.q >= 0)
    assert np.all(tr.q[:, -1] <= p.theta + 1e-9)
    caps = np.array(p.capacities)[:, tr.modes].T
    if p.topology.value == "merge":
        assert np.all(tr.f[:, 0] <= caps[:, 0] + 1e-9)
        assert np.all(tr.f[:, 1] <= caps[:, 1] + 1e-9)
        assert np.all(tr.f[:, 2] <= caps[:, 2] + 1e-9)
    else:
        assert np.all(tr.f <= caps + 1e-9)


def test_time_grid_lands_on_jumps(merge_stable, sym2):
    tr = simulate(merge_stable, sym2, [0, 0, 0], horizon=5, dt=1e-2, seed=9)
    for tj in tr.mode_path.jump_times:
        assert np.any(np.isclose(tr.t, tj, atol=1e-12))
    assert tr.t[-1] == pytest.approx(5.0)


@pytest.mark.parametrize("fixture", ["tandem_flat", "merge_stable"])
def test_mass_balance(fixture, sym2, request):
    p = request.getfixturevalue(fixture)
    tr = simulate(p, sym2, np.zeros(p.n_queues), horizon=50, dt=1e-3, seed=11)
    assert mass_balance_audit(tr) <= 5e-3


def test_single_queue_exact_reflection():
    p = NetworkParams("single", [[400.0]], (300.0,))
    tr = simulate(p, ONE, [50.0], horizon=2.0, dt=0.3, seed=0)
    np.testing.assert_allclose(tr.q[:, 0], np.maximum(0.0, 50.0 - 100.0 * tr.t), atol=1e-12)


def test_halving_dt_converges_single_mode():
    p = NetworkParams("merge", [[800.0], [800.0], [500.0]], (300.0, 350.0), v=8, w=2, theta=400)
    finals = [simulate(p, ONE, [0, 0, 0], horizon=5.0, dt=dt, seed=0).q[-1] for dt in (0.04, 0.02, 0.01, 0.005)]
    diffs = [np.abs(a - b).max() for a, b in zip(finals, finals[1:])]
    assert diffs[-1] < 1e-3
    assert diffs[-1] <= diffs[0]


def test_clamp_budget_enforced(sym2):
    p = NetworkParams("tandem", [[800.0, 800.0], [600.0, 600.0]], (0.0,), v=50, w=2, theta=400)
    with pytest.raises(ClampBudgetExceeded):
        simulate(p, sym2, [5.0, 5.0], horizon=5, dt=0.1, seed=1)
    assert simulate(p, sym2, [5.0, 5.0], horizon=5, dt=0.01, seed=1).clamp_total == 0.0


def test_too_few_tail_samples(sym2):
    tr = simulate(_single(500.0), sym2, [0.0], horizon=1.0, dt=0.1, seed=0)
    with pytest.raises(TooFewSamples):
        stability_metric(tr, 0.5)
    with pytest.raises(TooFewSamples):
        ensemble_stability([tr])


def test_single_queue_verdicts(sym2):
    stable = simulate(_single(500.0), sym2, [0.0], horizon=5000, dt=0.1, seed=2, record_stride=10)
    unstable = simulate(_single(700.0), sym2, [0.0], horizon=5000, dt=0.1, seed=2, record_stride=10)
    assert stability_metric(stable).bounded
    v = stability_metric(unstable)
    assert not v.bounded
    assert v.slopes[0] == pytest.approx(100.0, rel=0.1)


def test_upstream_caps(merge_stable, tandem_flat):
    caps = upstream_caps(merge_stable)
    assert np.all(np.isfinite(caps[:2])) and np.isnan(caps[2])
    assert np.isfinite(upstream_caps(tandem_flat)[0])


def test_csv_header_and_rows(tandem_flat, sym2):
    tr = simulate(tandem_flat, sym2, [0, 0], horizon=1, dt=0.1, seed=0)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,mode,q1,q2,f12,f2"
    assert len(lines) == len(tr) + 1
    assert lines[1].startswith("0,0,0,0,")


def test_empirical_cdf_properties(sym2):
    p = _single(500.0)
    grid = np.linspace(0, 1500, 31)
    emp = empirical_cdf(p, sym2, grid, n_paths=2, horizon=3000, burn_in=100, seed=5)
    assert emp.values.shape == (31, 2)
    assert np.all(np.diff(emp.values, axis=0) >= -1e-12)
    assert np.all(emp.values >= 0) and emp.marginal()[-1] <= 1 + 1e-12
    assert emp.values[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_empirical_cdf_rejects(sym2, tandem_flat):
    with pytest.raises(UnstableQueue):
        empirical_cdf(_single(700.0), sym2, [0.0, 1.0])
    with pytest.raises(InvalidNetwork):
        empirical_cdf(tandem_flat, sym2, [0.0, 1.0])


def test_mode_count_mismatch(tandem_flat):
    with pytest.raises(InvalidNetwork):
        simulate(tandem_flat, ONE, [0, 0], horizon=1)


def test_occupation_matches_path_fraction(sym2):
    p = _single(100.0)  # drains in every mode: all time at zero
    emp = empirical_cdf(p, sym2, [0.0], n_paths=2, horizon=2000, burn_in=10, seed=1)
    np.testing.assert_allclose(emp.values[0].sum(), 1.0)
    np.testing.assert_allclose(emp.values[0], stationary_distribution(sym2), atol=0.05)
