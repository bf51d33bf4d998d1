import math

import numpy as np
import pytest

from ermlab.errors import DimMismatch, TooManySigns
from ermlab.geometry import Annulus, Ball, cover_annulus, project_to_ball, sample_ball
from ermlab.losses import EmpiricalObjective, make_logistic_loss, make_squared_loss
from ermlab.processes import (OffsetProcessInstance, all_sign_vectors, ball_grid,
                              chaining_bound, default_lambda, default_peeling_radius,
                              enumerate_suprema, exp_moment_exhaustive, log_moment_bound,
                              multinomial_probability, offset_supremum, rademacher_sup_mc,
                              sample_multisets, symmetrization_check)
from ermlab.solver import DiscreteDistribution, minimize_empirical


def one_dim_instance(n, per_axis=2001, seed=0):
    loss = make_squared_loss(1.0)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 1))
    y = rng.uniform(-1, 1, n)
    obj = EmpiricalObjective(loss, x, y)
    dom = Ball.centered(1, 1.0)
    w_star = np.array([0.1])
    return OffsetProcessInstance(obj, w_star, ball_grid(dom, per_axis))


def test_lambda_default():
    inst = one_dim_instance(4)
    assert inst.lam == pytest.approx(2.0 * 4 / (32 * math.e * 16))
    assert default_lambda(1.0, 1.0, 32) == pytest.approx(1 / math.e)


def test_bound_values():
    for d in (1, 2, 5):
        direct = math.log(14) + 2048 * (1 + math.e) ** 2 * d / math.e
        assert log_moment_bound(d) == pytest.approx(direct, rel=1e-12)
    assert chaining_bound(4.0, 0.5, 4, 16) == pytest.approx(64.0)
    assert default_peeling_radius(2.0, 4.0, 5, 20) == pytest.approx(1.0)


def test_degenerate_eval_set():
    inst = one_dim_instance(5)
    inst = OffsetProcessInstance(inst.obj, inst.w_star, [inst.w_star])
    for eps in all_sign_vectors(5):
        assert offset_supremum(inst, eps) == 0.0
    res = exp_moment_exhaustive(inst)
    assert res.moment == pytest.approx(1.0, abs=1e-15) and res.log_moment == pytest.approx(0.0, abs=1e-15)
    mc = rademacher_sup_mc(inst, 200, 0)
    assert (mc.mean, mc.stderr) == (0.0, 0.0)


def test_single_datum_example():
    loss = make_squared_loss(1.0)
    obj = EmpiricalObjective(loss, [[1.0]], [0.0])
    inst = OffsetProcessInstance(obj, [0.0], ball_grid(Ball.centered(1, 1.0), 2001))
    assert offset_supremum(inst, [1.0]) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(DimMismatch):
        offset_supremum(inst, [1.0, -1.0])


def test_eval_set_must_lie_in_w():
    inst = one_dim_instance(3)
    with pytest.raises(ValueError):
        OffsetProcessInstance(inst.obj, inst.w_star, [[1.5]])


def test_sign_vectors():
    s = all_sign_vectors(3)
    assert s.shape == (8, 3)
    assert len({tuple(r) for r in s}) == 8
    np.testing.assert_array_equal(s[0], [1, 1, 1])


def test_sign_flip_symmetry():
    inst = one_dim_instance(6)
    sups = enumerate_suprema(inst)
    flipped = np.array([offset_supremum(inst, -e) for e in all_sign_vectors(6)])
    np.testing.assert_allclose(np.sort(sups), np.sort(flipped), rtol=0, atol=1e-15)
    # the flip maps index k to its bitwise complement
    np.testing.assert_allclose(flipped, sups[::-1], rtol=0, atol=1e-15)


def test_enumeration_matches_pointwise_and_threads(monkeypatch):
    import ermlab.processes as proc

    # small blocks so that several workers really share the enumeration
    monkeypatch.setattr(proc, "_BLOCK_ELEMENTS", 20_000)
    inst = one_dim_instance(7)
    sups = enumerate_suprema(inst)
    direct = [offset_supremum(inst, e) for e in all_sign_vectors(7)]
    np.testing.assert_allclose(sups, direct, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(sups, enumerate_suprema(inst, threads=3))
    a = exp_moment_exhaustive(inst, threads=1)
    b = exp_moment_exhaustive(inst, threads=4)
    assert a == b


def test_too_many_signs():
    inst = one_dim_instance(17, per_axis=11)
    with pytest.raises(TooManySigns):
        exp_moment_exhaustive(inst)


def test_jensen_lower_bound():
    rng = np.random.default_rng(0)
    for seed in range(10):
        inst = one_dim_instance(int(rng.integers(2, 11)), per_axis=401, seed=seed)
        res = exp_moment_exhaustive(inst)
        assert res.moment >= math.exp(res.lam * res.mean_sup) * (1 - 1e-14)


def test_monotone_in_eval_set():
    inst = one_dim_instance(6)
    small = OffsetProcessInstance(inst.obj, inst.w_star, inst.eval_set[::7])
    for e in all_sign_vectors(6):
        assert offset_supremum(inst, e) >= offset_supremum(small, e)


def test_grid_refinement_two_points():
    coarse = exp_moment_exhaustive(one_dim_instance(2, 2001))
    fine = exp_moment_exhaustive(one_dim_instance(2, 4001))
    assert abs(fine.moment - coarse.moment) <= 1e-4 * coarse.moment
    assert coarse.within_bound and fine.within_bound


def test_exp_moment_logistic_two_dim():
    loss = make_logistic_loss(1.0, 1.0)
    rng = np.random.default_rng(3)
    x = sample_ball(rng, 2, 1.0, 6)
    obj = EmpiricalObjective(loss, x, rng.choice([-1.0, 1.0], 6))
    dom = Ball.centered(2, 1.0)
    res = exp_moment_exhaustive(OffsetProcessInstance(obj, np.zeros(2), ball_grid(dom, 101)))
    assert res.within_bound and res.log_moment >= 0


def test_rademacher_mc_within_chaining_bound():
    loss = make_squared_loss(1.0)
    rng = np.random.default_rng(1)
    for n in (10, 40):
        x = rng.uniform(-1, 1, (n, 1))
        obj = EmpiricalObjective(loss, x, rng.uniform(-1, 1, n))
        dom = Ball.centered(1, 1.0)
        w_star = minimize_empirical(obj, dom, 1e-10).w_hat
        r = default_peeling_radius(loss.sigma, loss.lipschitz, 1, n)
        ann = Annulus(dom, w_star, obj.h, 0.0, r)
        pts = ball_grid(dom, 2001)
        inst = OffsetProcessInstance(obj, w_star, pts[ann.contains(pts)])
        mc = rademacher_sup_mc(inst, 2000, 5)
        assert mc.mean <= chaining_bound(loss.lipschitz, r, 1, n) + 3 * mc.stderr
        assert mc.mean >= 0


def test_rademacher_mc_stderr_scaling():
    inst = one_dim_instance(12, per_axis=401)
    a = rademacher_sup_mc(inst, 20_000, 1)
    b = rademacher_sup_mc(inst, 40_000, 2)
    assert a.stderr / b.stderr == pytest.approx(math.sqrt(2), rel=0.2)
    with pytest.raises(ValueError):
        rademacher_sup_mc(inst, 50, 0)


def test_net_eval_set_three_dims():
    loss = make_squared_loss(1.0)
    rng = np.random.default_rng(2)
    obj = EmpiricalObjective(loss, sample_ball(rng, 3, 1.0, 5), rng.uniform(-1, 1, 5))
    dom = Ball.centered(3, 1.0)
    net = cover_annulus(Annulus(dom, np.zeros(3), obj.h, 0.0, 1.0), 0.5, 0)
    inst = OffsetProcessInstance(obj, np.zeros(3), project_to_ball(dom, net.points))
    assert exp_moment_exhaustive(inst).within_bound


def test_boundary_grid():
    dom = Ball.centered(2, 1.0)
    plain = ball_grid(dom, 21)
    full = ball_grid(dom, 21, boundary=True)
    assert len(full) > len(plain)
    assert np.all(dom.contains(full))
    assert np.isclose(np.linalg.norm(full, axis=1).max(), 1.0)


def test_multisets_and_probabilities():
    sets = list(sample_multisets(3, 3))
    assert len(sets) == 10
    p = np.array([0.2, 0.3, 0.5])
    total = math.fsum(multinomial_probability(c, p) for c in sets)
    assert total == pytest.approx(1.0, abs=1e-14)
    assert multinomial_probability([3, 0, 0], p) == pytest.approx(0.008)


def test_symmetrization_sanity():
    rng = np.random.default_rng(11)
    for i in range(20):
        atoms = int(rng.integers(2, 4))
        n = int(rng.integers(2, 7))
        if i % 2:
            loss = make_squared_loss(1.0)
            x = rng.uniform(-1, 1, (atoms, 1))
            y = rng.uniform(-1, 1, atoms)
        else:
            loss = make_logistic_loss(1.0, 1.0)
            x = rng.uniform(-1, 1, (atoms, 1))
            y = rng.choice([-1.0, 1.0], atoms)
        p = rng.dirichlet(np.ones(atoms))
        p[-1] = 1.0 - math.fsum(p[:-1])
        check = symmetrization_check(loss, DiscreteDistribution(x, y, p), n, Ball.centered(1, 1.0))
        assert check.expected_excess >= 0
        assert check.holds, (check.expected_excess, check.offset_bound)
