import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ermlab.errors import DimMismatch, IndefiniteMatrix, NonSymmetric
from ermlab.seminorm import (build_seminorm, jacobi_eigh, pushforward_root, sample_covariance,
                             seminorm_of)

from conftest import random_psd


def test_identity():
    s = build_seminorm(np.eye(2))
    np.testing.assert_allclose(s.eigenvalues, [1.0, 1.0])
    assert s.rank == 2


def test_diag_rank_one():
    s = build_seminorm(np.diag([4.0, 0.0]))
    np.testing.assert_allclose(s.eigenvalues, [4.0, 0.0], atol=1e-15)
    assert s.rank == 1
    np.testing.assert_allclose(s.sqrt, np.diag([2.0, 0.0]), atol=1e-15)
    np.testing.assert_allclose(s.pinv_sqrt, np.diag([0.5, 0.0]), atol=1e-15)


def test_sample_covariance_of_basis():
    h = sample_covariance(np.eye(2))
    np.testing.assert_allclose(h, 0.5 * np.eye(2))
    np.testing.assert_allclose(build_seminorm(h).matrix, 0.5 * np.eye(2))


def test_seminorm_examples():
    assert seminorm_of(build_seminorm(np.eye(2)), [3.0, 4.0]) == pytest.approx(5.0)
    assert seminorm_of(build_seminorm(np.diag([4.0, 0.0])), [1.0, 7.0]) == pytest.approx(2.0)
    h = build_seminorm(random_psd(np.random.default_rng(0), 3))
    assert seminorm_of(h, np.zeros(3)) == 0.0


def test_pushforward_examples():
    np.testing.assert_allclose(pushforward_root(build_seminorm(np.eye(2)), [1.0, 2.0]), [1.0, 2.0])
    s = build_seminorm(np.diag([4.0, 0.0]))
    b = pushforward_root(s, [2.0, 2.0])
    np.testing.assert_allclose(b, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(s.sqrt @ b, s.projector @ [2.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(pushforward_root(s, [0.0, 5.0]), [0.0, 0.0], atol=1e-15)


def test_errors():
    with pytest.raises(NonSymmetric):
        build_seminorm(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(IndefiniteMatrix):
        build_seminorm(np.diag([1.0, -1.0]))
    s = build_seminorm(np.eye(2))
    with pytest.raises(DimMismatch):
        seminorm_of(s, [1.0, 2.0, 3.0])
    with pytest.raises(DimMismatch):
        pushforward_root(s, [1.0])


def test_tiny_negative_round_off_tolerated():
    h = np.diag([1.0, -1e-13])
    s = build_seminorm(h)
    assert s.rank == 1
    assert seminorm_of(s, [0.0, 1.0]) == 0.0


def test_immutable():
    s = build_seminorm(np.eye(2))
    with pytest.raises(ValueError):
        s.matrix[0, 0] = 3.0


@pytest.mark.parametrize("d", [1, 2, 5, 12, 30])
def test_jacobi_matches_lapack(d):
    # oracle: LAPACK symmetric eigensolver
    rng = np.random.default_rng(d)
    a = rng.standard_normal((d, d))
    a = a + a.T
    vals, vecs = jacobi_eigh(a)
    ref = np.linalg.eigvalsh(a)[::-1]
    np.testing.assert_allclose(vals, ref, atol=1e-11 * max(1, np.abs(ref).max()))
    assert np.all(np.diff(vals) <= 1e-14)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(d), atol=1e-12)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, a, atol=1e-11)


def test_reconstruction():
    rng = np.random.default_rng(7)
    for d in range(1, 9):
        for rank in range(1, d + 1):
            h = random_psd(rng, d, rank)
            s = build_seminorm(h)
            assert s.rank == rank
            keep = s.eigenvalues[: s.rank]
            v = s.eigenvectors[:, : s.rank]
            rec = (v * keep) @ v.T
            assert np.linalg.norm(rec - h) <= 1e-8 * np.linalg.norm(h)


def test_kernel_characterisation():
    rng = np.random.default_rng(3)
    h = random_psd(rng, 4, 2)
    s = build_seminorm(h)
    kernel = s.eigenvectors[:, 2:]
    for c in rng.standard_normal((20, 2)):
        w = kernel @ c
        assert np.allclose(s.projector @ w, 0, atol=1e-12)
        assert seminorm_of(s, w) < 1e-7
    w = s.eigenvectors[:, 0]
    assert seminorm_of(s, w) > 0


psd_cases = st.tuples(st.integers(1, 6), st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))


@settings(max_examples=60, deadline=None)
@given(psd_cases)
def test_projector_idempotent(case):
    d, seed, scale = case
    rng = np.random.default_rng(seed)
    rank = int(rng.integers(1, d + 1))
    s = build_seminorm(random_psd(rng, d, rank, scale))
    assert np.linalg.norm(s.projector @ s.projector - s.projector) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(psd_cases)
def test_pseudo_inverse_consistency(case):
    d, seed, scale = case
    rng = np.random.default_rng(seed)
    rank = int(rng.integers(1, d + 1))
    h = random_psd(rng, d, rank, scale)
    s = build_seminorm(h)
    assert np.linalg.norm(s.matrix @ s.pinv @ s.matrix - s.matrix) <= 1e-8 * np.linalg.norm(h)
    np.testing.assert_allclose(s.sqrt @ s.pinv_sqrt, s.projector, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(psd_cases)
def test_triangle_inequality(case):
    d, seed, scale = case
    rng = np.random.default_rng(seed)
    s = build_seminorm(random_psd(rng, d, None, scale))
    u, v = rng.standard_normal((2, d))
    assert seminorm_of(s, u + v) <= seminorm_of(s, u) + seminorm_of(s, v) + 1e-10


def test_seminorm_transfer_1000_pairs():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        rank = int(rng.integers(1, d + 1))
        s = build_seminorm(random_psd(rng, d, rank))
        w = rng.standard_normal(d)
        assert abs(seminorm_of(s, w) - np.linalg.norm(s.sqrt @ w)) <= 1e-10
