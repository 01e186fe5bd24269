import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import sqrtm

from kernel_mor import KernelSpec, TimeGrid, ToleranceConfig, balance_dataset, collect, kernel_balance, truncate
from kernel_mor.balancing import (BalancedReduction, auto_gap, gap_ratios, load_reduction, read_hankel_values,
                                  save_reduction, write_hankel_values)
from kernel_mor.errors import DegenerateSystemError, DimensionMismatchError, RankDeficiencyError
from kernel_mor.gramians import GramianDataset, empirical_gramians, linear_balance
from kernel_mor.kernels import EmpiricalFeatureMap, gram_matrix
from kernel_mor.systems import lti_system

from conftest import random_psd, random_symmetric_lti
from test_kernels import central_difference

EXACT = ToleranceConfig(jitter=0.0)


def off_diagonal_mass(A):
    return np.linalg.norm(A - np.diag(np.diag(A)))


def mirrored_dataset(rng, n=3, N=300):
    """Dataset whose observability samples equal its controllability samples.

    This is what a symmetric system (F = F^T, H = G^T) produces in the limit
    of an ideal impulse; both balancing routes must then agree exactly.
    """
    F, G, H = random_symmetric_lti(rng, n)
    ds = collect(lti_system(F, G, H), TimeGrid.with_substeps(10.0, N, 2))
    return GramianDataset(ds.grid, n, 1, 1, ds.ctrl, ds.ctrl.copy())


def test_identity_pair():
    res = kernel_balance(np.eye(3), np.eye(3), EXACT)
    np.testing.assert_allclose(res.sigma, np.ones(3))


def test_hand_example():
    res = kernel_balance(np.diag([4.0, 1.0]), np.diag([1.0, 4.0]), EXACT)
    np.testing.assert_allclose(res.sigma, [2.0, 2.0], rtol=1e-14)


def test_scale_factors_rescale_sigma(rng):
    Kc, Ko = random_psd(rng, 5), random_psd(rng, 5)
    a = kernel_balance(Kc, Ko, EXACT)
    b = kernel_balance(Kc, Ko, EXACT, ctrl_scale=0.5, obs_scale=0.5)
    np.testing.assert_allclose(b.sigma, 0.5 * a.sigma, rtol=1e-10)


@pytest.mark.parametrize("seed", range(50))
def test_diagonalizes_random_pairs(seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(2, 12))
    Kc, Ko = random_psd(rng, L), random_psd(rng, L)
    res = kernel_balance(Kc, Ko, EXACT)
    T, Tit = res.T, res.T_inv_T
    norm = np.linalg.norm(res.sigma)
    for A in (T @ Kc @ T.T, Tit @ Ko @ Tit.T):
        assert off_diagonal_mass(A) <= 1e-6 * norm
        np.testing.assert_allclose(np.diag(A), res.sigma, rtol=1e-6)
    np.testing.assert_allclose(Tit, np.linalg.inv(T).T, rtol=1e-6, atol=1e-6 * np.abs(Tit).max())


def test_jitter_applied_to_controllability_side():
    res = kernel_balance(np.zeros((2, 2)), np.eye(2), ToleranceConfig(jitter=1e-2))
    np.testing.assert_allclose(res.sigma, [0.1, 0.1], rtol=1e-12)


def test_rank_truncation(rng):
    B = rng.standard_normal((6, 2))
    res = kernel_balance(B @ B.T, random_psd(rng, 6), EXACT)
    assert res.rank == 2
    assert np.all(np.diff(res.sigma) <= 0) and np.all(res.sigma > 0)


def test_errors():
    with pytest.raises(DimensionMismatchError):
        kernel_balance(np.eye(2), np.eye(3))
    with pytest.raises(DegenerateSystemError):
        kernel_balance(np.eye(2), np.zeros((2, 2)))


def test_sample_permutation_invariance(rng):
    X, Y = rng.standard_normal((2, 15, 3))
    k = KernelSpec.polynomial(3)
    perm = rng.permutation(15)
    a = kernel_balance(gram_matrix(k, X), gram_matrix(k, Y))
    b = kernel_balance(gram_matrix(k, X[perm]), gram_matrix(k, Y[perm]))
    np.testing.assert_allclose(a.sigma, b.sigma, rtol=1e-8)


def test_linear_kernel_matches_moore_on_mirrored_data(rng):
    ds = mirrored_dataset(rng)
    res, _ = balance_dataset(ds, KernelSpec.linear(), EXACT)
    _, moore = linear_balance(empirical_gramians(ds), EXACT)
    k = res.rank
    assert k >= 2
    np.testing.assert_allclose(res.sigma, moore[:k], rtol=1e-6)


def test_linear_kernel_matches_moore_on_symmetric_lti(rng):
    F, G, H = random_symmetric_lti(rng, 4)
    ds = collect(lti_system(F, G, H), TimeGrid.with_substeps(20.0, 1000, 16))
    res, _ = balance_dataset(ds, KernelSpec.linear(), EXACT)
    _, moore = linear_balance(empirical_gramians(ds), EXACT)
    k = min(res.rank, 4)
    np.testing.assert_allclose(res.sigma[:k], moore[:k], rtol=1e-6)


def test_linear_reduce_matches_balanced_truncation(rng):
    # Pi(x) = T_q^T X x and the Moore coordinates T x differ by (X^T X)^{1/2}, up to signs.
    ds = mirrored_dataset(rng)
    res, fmap = balance_dataset(ds, KernelSpec.linear(), EXACT)
    br = truncate(res, fmap, 2, ds.ctrl_scale, EXACT)
    T, _ = linear_balance(empirical_gramians(ds), EXACT)
    bridge = np.real(sqrtm(ds.ctrl.T @ ds.ctrl))
    X = rng.standard_normal((10, 3))
    P, Q = br.reduce(X), X @ (T[:2] @ bridge).T
    signs = np.sign(np.sum(P * Q, axis=0))
    np.testing.assert_allclose(P, Q * signs, rtol=1e-6, atol=1e-6 * np.abs(P).max())


def test_reduce_at_origin_polynomial(bench_reduction):
    np.testing.assert_allclose(bench_reduction.reduce(np.zeros(7)), bench_reduction.Tq.sum(axis=0), rtol=1e-12)


def test_reduce_batch_and_dimension(bench_reduction, rng):
    X = rng.uniform(-0.5, 0.5, (4, 7))
    P = bench_reduction.reduce(X)
    assert P.shape == (4, 2)
    np.testing.assert_allclose(P[1], bench_reduction.reduce(X[1]), rtol=1e-12)
    with pytest.raises(DimensionMismatchError):
        bench_reduction.reduce(np.zeros(6))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_finite_differences(seed):
    br = _shared["br"]
    x = np.random.default_rng(seed).uniform(-0.5, 0.5, 7)
    J = br.jacobian(x)
    fd = central_difference(br.reduce, x)
    assert np.linalg.norm(J - fd) <= 1e-5 * np.linalg.norm(J)


_shared = {}


@pytest.fixture(autouse=True)
def _share(bench_reduction):
    _shared["br"] = bench_reduction


def test_jacobian_zero_samples():
    fm = EmpiricalFeatureMap(KernelSpec.polynomial(3), np.zeros((4, 3)))
    br = BalancedReduction(fm, np.ones(2), np.ones((2, 4)), 2)
    np.testing.assert_array_equal(br.jacobian(np.ones(3)), np.zeros((2, 3)))


def test_jacobian_linear_constant(rng):
    fm = EmpiricalFeatureMap(KernelSpec.linear(), rng.standard_normal((5, 3)))
    br = BalancedReduction(fm, np.array([2.0, 1.0]), rng.standard_normal((2, 5)), 2)
    J1, J2 = br.jacobian(rng.standard_normal(3)), br.jacobian(rng.standard_normal(3))
    np.testing.assert_allclose(J1, J2, rtol=1e-14)
    np.testing.assert_allclose(J1, br.Tq.T @ fm.samples, rtol=1e-12)


def test_truncate_shapes_and_range(bench_dataset):
    res, fmap = balance_dataset(bench_dataset, KernelSpec.polynomial(3))
    br = truncate(res, fmap, 2, bench_dataset.ctrl_scale)
    assert br.Tq.shape == (bench_dataset.ctrl.shape[0], 2)
    np.testing.assert_array_equal(br.Tq, res.T[:2].T)
    full = truncate(res, fmap, res.rank)
    assert full.reduce(np.zeros(7)).shape == (res.rank,)
    for q in (0, res.rank + 1):
        with pytest.raises(ValueError):
            truncate(res, fmap, q)


def test_metric_identity_case():
    fm = EmpiricalFeatureMap(KernelSpec.linear(), np.eye(3))
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
    br = BalancedReduction(fm, np.array([3.0, 2.0, 1.0]), Q.T, 2)
    np.testing.assert_allclose(br.metric_matrix(), np.eye(2), atol=1e-12)


def test_metric_scalar_case(rng):
    S = rng.standard_normal((6, 2))
    fm = EmpiricalFeatureMap(KernelSpec.polynomial(2), S)
    T = rng.standard_normal((3, 6))
    br = BalancedReduction(fm, np.array([3.0, 2.0, 1.0]), T, 1)
    t1 = T[0]
    assert br.metric_matrix()[0, 0] == pytest.approx(1.0 / (t1 @ gram_matrix(fm.kernel, S) @ t1), rel=1e-12)


def test_metric_singular_block():
    fm = EmpiricalFeatureMap(KernelSpec.linear(), np.zeros((3, 2)))
    br = BalancedReduction(fm, np.array([1.0, 0.5]), np.eye(2, 3), 2)
    with pytest.raises(RankDeficiencyError):
        br.metric_matrix()


def test_metric_with_identity_gram():
    # K_c = I gives T T^T = Sigma, so the metric is Sigma_q^{-1} while the
    # alternative form T_q^T T_q Sigma_q equals Sigma_q^2.
    fm = EmpiricalFeatureMap(KernelSpec.linear(), np.eye(4))
    res = kernel_balance(np.eye(4), np.diag([4.0, 3.0, 2.0, 1.0]), EXACT)
    br = truncate(res, fm, 2, tol=EXACT)
    sq = res.sigma[:2]
    np.testing.assert_allclose(br.metric_matrix(), np.diag(1.0 / sq), rtol=1e-12, atol=1e-14)
    expected = np.linalg.norm(sq - sq**2) / np.linalg.norm(sq)
    assert br.metric_identity_deviation() == pytest.approx(expected, rel=1e-10)


def test_metric_identity_deviation_on_benchmark(bench_reduction):
    # Diagnostic only: the jittered and scaled Gram matrix used for balancing
    # is not the matrix in the metric, so the two forms differ on real data.
    dev = bench_reduction.metric_identity_deviation()
    assert np.isfinite(dev) and dev > 1e-3


def test_gap_ratios_and_auto_gap():
    s = np.array([100.0, 50.0, 2.0, 1.0])
    np.testing.assert_allclose(gap_ratios(s), [2.0, 25.0, 2.0])
    assert auto_gap(s) == 2
    assert auto_gap(np.array([8.0, 4.0, 1.0])) == 2
    assert auto_gap(np.array([3.0])) == 1


def test_benchmark_gap(bench_reduction):
    s = bench_reduction.sigma
    assert s[0] / s[2] >= 10
    assert auto_gap(s) == 2


def test_mismatched_sample_counts_rejected():
    sys = lti_system(-np.eye(2), np.ones((2, 1)), np.eye(2))
    ds = collect(sys, TimeGrid.with_substeps(1.0, 10))
    with pytest.raises(DimensionMismatchError):
        balance_dataset(ds, KernelSpec.linear())


def test_hankel_csv_round_trip(tmp_path, bench_reduction):
    write_hankel_values(tmp_path / "h.csv", bench_reduction.sigma)
    np.testing.assert_array_equal(read_hankel_values(tmp_path / "h.csv"), bench_reduction.sigma)


def test_reduction_bundle_round_trip(tmp_path, bench_reduction, rng):
    save_reduction(bench_reduction, tmp_path / "r")
    br = load_reduction(tmp_path / "r")
    assert br.q == bench_reduction.q and br.kernel == bench_reduction.kernel
    np.testing.assert_array_equal(br.T, bench_reduction.T)
    np.testing.assert_array_equal(br.fmap.samples, bench_reduction.fmap.samples)
    x = rng.uniform(-0.5, 0.5, 7)
    np.testing.assert_array_equal(br.reduce(x), bench_reduction.reduce(x))
