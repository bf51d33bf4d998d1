import math

import numpy as np
import pytest

from ermlab.errors import BadDelta, InsufficientTrials, RangeError, TooFewAtoms
from ermlab.geometry import Ball
from ermlab.losses import EmpiricalObjective, make_loss, make_squared_loss
from ermlab.risk_lab import (CellResult, ExperimentConfig, RiskSweepResult,
                             bound_domination_ratio, calibrate_constant, distribution_for,
                             empirical_quantile, make_distribution, run_sweep, tail_profile,
                             theory_bound)
from ermlab.seminorm import build_seminorm
from ermlab.solver import (DiscreteDistribution, excess_risk, minimize_empirical,
                           minimize_population)


def test_distribution_examples():
    dist = make_distribution("squared", 1, 2, 0)
    assert dist.size == 2
    assert math.fsum(dist.probabilities) == pytest.approx(1.0, abs=1e-15)
    a = make_distribution("logistic", 3, 5, 42)
    b = make_distribution("logistic", 3, 5, 42)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.probabilities, b.probabilities)
    with pytest.raises(TooFewAtoms):
        make_distribution("squared", 2, 1, 0)


def test_distribution_rank():
    dist = make_distribution("squared", 8, 50, 1)
    s = build_seminorm(dist.second_moment())
    distinct = len({tuple(r) for r in dist.x})
    assert s.rank == min(8, distinct) == 8
    low = make_distribution("squared", 8, 3, 1)
    assert build_seminorm(low.second_moment()).rank == 3


@pytest.mark.parametrize("kind", ["squared", "logistic"])
def test_distribution_within_bounds(kind):
    loss = make_loss(kind, 1.5, 0.8)
    dist = make_distribution(kind, 4, 30, 3, radius_r=1.5, ball_b=0.8)
    loss.check_sample(dist.x, dist.y)
    norms = np.linalg.norm(dist.x, axis=1)
    assert np.all(norms >= 0.3 * loss.feature_radius - 1e-12)
    assert np.all(dist.probabilities >= 0)


def test_theory_bound_examples():
    from ermlab.losses import LossModel

    unit = LossModel("unit", 1.0, 1.0, 1.0, 1.0, 1.0, False, None, None)
    assert theory_bound(unit, 1, 1, 1 / math.e) == pytest.approx(2.0)
    sq = make_squared_loss(1.0)
    assert theory_bound(sq, 5, 1000, 0.1) == pytest.approx(16 * (5 + math.log(10)) / 2000)
    assert theory_bound(sq, 5, 1000, 0.1) == pytest.approx(0.05842, abs=1e-5)
    assert theory_bound(sq, 5, 2000, 0.1) == 0.5 * theory_bound(sq, 5, 1000, 0.1)
    assert theory_bound(sq, 5, 1000, 0.1, c=3) == pytest.approx(3 * theory_bound(sq, 5, 1000, 0.1))
    cor = theory_bound(sq, 50, 100, 0.1, corollary=True)
    assert cor == pytest.approx(16 * math.log(100) * math.log(10) / 200)
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(BadDelta):
            theory_bound(sq, 5, 100, bad)


def test_quantile_convention():
    v = np.arange(1.0, 11.0)
    assert empirical_quantile(v, 0.1) == 9.0
    assert empirical_quantile(v, 0.05) == 10.0
    assert empirical_quantile(v, 0.5) == 5.0
    assert empirical_quantile(np.arange(1.0, 101.0), 0.1) == 90.0


def test_config_trials_rule():
    ExperimentConfig(trials=500, deltas=(0.1,))
    with pytest.raises(RangeError, match="50/delta"):
        ExperimentConfig(trials=200, deltas=(0.01,))
    with pytest.raises(RangeError):
        ExperimentConfig(trials=99, deltas=(0.9,))
    with pytest.raises(RangeError):
        ExperimentConfig(trials=500, deltas=(1.5,))
    with pytest.raises(RangeError):
        ExperimentConfig(dims=())


def test_population_coincidence_gives_zero_excess():
    loss = make_squared_loss(1.0)
    rng = np.random.default_rng(0)
    m = 6
    x = rng.uniform(-0.5, 0.5, (m, 3))
    y = rng.uniform(-1, 1, m)
    dist = DiscreteDistribution(x, y, np.full(m, 1 / m))
    dom = Ball.centered(3, 1.0)
    w_star = minimize_population(loss, dist, dom, 1e-10).w_hat
    w_hat = minimize_empirical(EmpiricalObjective(loss, x, y), dom, 1e-10).w_hat
    assert 0 <= excess_risk(loss, dist, w_hat, w_star) <= 1e-12


def test_single_atom_distribution_zero_excess():
    loss = make_squared_loss(1.0)
    dist = DiscreteDistribution([[0.6]], [0.3], [1.0])
    dom = Ball.centered(1, 1.0)
    w_star = minimize_population(loss, dist, dom, 1e-10).w_hat
    for n in (1, 10, 100):
        obj = EmpiricalObjective(loss, [[0.6]], [0.3], [n])
        w_hat = minimize_empirical(obj, dom, 1e-10).w_hat
        assert excess_risk(loss, dist, w_hat, w_star) <= 1e-12


@pytest.fixture(scope="module")
def small_sweep():
    cfg = ExperimentConfig(dims=(2, 3), sample_sizes=(50, 100), trials=500,
                           deltas=(0.2, 0.1), distribution_seed=3, trial_seed=4)
    return cfg, run_sweep(cfg, threads=1)


def test_sweep_invariants(small_sweep):
    cfg, res = small_sweep
    assert set(res.cells) == {(2, 50), (2, 100), (3, 50), (3, 100)}
    for cell in res.cells.values():
        assert cell.excess.size == 500
        assert np.all(cell.excess >= 0)
        assert cell.flagged == 0 and not cell.failed
        assert cell.quantiles[0.1] >= cell.quantiles[0.2] >= cell.median
    assert len(res.slopes()) == 2 * 3 + 2 * 3
    loss = cfg.loss()
    w_star = minimize_population(loss, distribution_for(cfg, 2), Ball.centered(2, 1.0), 1e-8).w_hat
    np.testing.assert_allclose(res.cell(2, 50).w_star, w_star, atol=1e-6)


def test_sweep_reproducible_across_workers(small_sweep):
    cfg, res = small_sweep
    other = run_sweep(cfg, threads=2, chunk=70)
    for key, cell in res.cells.items():
        np.testing.assert_array_equal(cell.excess, other.cells[key].excess)
        np.testing.assert_array_equal(cell.converged, other.cells[key].converged)


def test_sweep_seed_changes_results(small_sweep):
    cfg, res = small_sweep
    from dataclasses import replace

    other = run_sweep(replace(cfg, trial_seed=5, dims=(2,), sample_sizes=(50,)), threads=1)
    assert not np.array_equal(other.cell(2, 50).excess, res.cell(2, 50).excess)
    # per-trial streams: trial t does not depend on how many trials run
    fewer = run_sweep(replace(cfg, trials=100, deltas=(0.5,), dims=(2,), sample_sizes=(50,)),
                      threads=1)
    np.testing.assert_array_equal(fewer.cell(2, 50).excess, res.cell(2, 50).excess[:100])


def _synthetic(deltas, cells, trials=1000):
    cfg = ExperimentConfig(dims=tuple(sorted({d for d, _ in cells})),
                           sample_sizes=tuple(sorted({n for _, n in cells})),
                           trials=trials, deltas=deltas)
    res = RiskSweepResult(cfg)
    for (d, n), values in cells.items():
        res.cells[(d, n)] = CellResult(d, n, np.asarray(values, dtype=float),
                                       np.ones(len(values), dtype=bool), None, deltas)
    return res


def test_slopes_exact_power_law():
    base = np.linspace(0.1, 1.0, 1000)
    cells = {(d, n): base * d / n for d in (2, 4, 8) for n in (100, 200, 400)}
    res = _synthetic((0.1,), cells)
    assert res.slope_n(4, 0.1) == pytest.approx(-1.0, abs=1e-12)
    assert res.slope_d(200, 0.1) == pytest.approx(1.0, abs=1e-12)
    for s in res.slopes():
        assert s.stderr == pytest.approx(0.0, abs=1e-6)


def test_tail_profile_ratio():
    values = np.arange(1, 5001) / 5000.0
    res = _synthetic((0.1, 0.01, 0.01), {(2, 100): values}, trials=5000)
    prof = tail_profile(res, 2, 100)
    assert [d for d, _ in prof.quantiles] == [0.1, 0.01]
    q1, q2 = 0.9, 0.99
    loss = res.config.loss()
    expect = (q2 - q1) * 100 / (loss.lipschitz**2 * math.log(10) / loss.sigma)
    assert len(prof.ratios) == 1
    assert prof.ratios[0][2] == pytest.approx(expect)


def test_tail_profile_insufficient():
    res = _synthetic((0.01,), {(2, 100): np.linspace(0, 1, 5000)}, trials=5000)
    conv = np.zeros(5000, dtype=bool)
    conv[:4000] = True
    res.cells[(2, 100)] = CellResult(2, 100, np.linspace(0, 1, 5000), conv, None, (0.01,))
    assert res.cells[(2, 100)].failed
    with pytest.raises(InsufficientTrials):
        tail_profile(res, 2, 100)


def test_calibration_and_domination():
    base = np.linspace(0.1, 1.0, 1000)
    cells = {(5, n): base / n for n in (100, 200, 400)}
    res = _synthetic((0.1,), cells)
    c = calibrate_constant(res, 5, 100, 0.1)
    assert bound_domination_ratio(res, c) == pytest.approx(1.0)
