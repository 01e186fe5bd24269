import math

import numpy as np
import pytest

from kernel_mor import (JacobianMode, KernelSpec, RegressionDataset, ReducedSystem, TimeGrid, ToleranceConfig,
                        balance_dataset, collect, compare, rls_fit, simulate_reduced, truncate)
from kernel_mor.balancing import BalancedReduction
from kernel_mor.errors import DegenerateExpansionError, DimensionMismatchError, UnsupportedModeError
from kernel_mor.kernels import EmpiricalFeatureMap
from kernel_mor.reduced import (Expansion, KernelPropertyJacobian, kernel_property_jacobian, real_root_power,
                                taylor_preimage)
from kernel_mor.rkhs import InputMap, RKHSModel
from kernel_mor.systems import Sine, Square, UniformRandom, benchmark_7d, integrate, lti_system

EXACT = ToleranceConfig(jitter=0.0)


def zero_model(input_dim, n_targets, n_train=3):
    imap = InputMap(np.zeros(input_dim), np.ones(input_dim), False)
    return RKHSModel(KernelSpec.linear(), imap, np.ones((n_train, input_dim)), np.zeros((n_targets, n_train)), 1.0)


def constant_model(input_dim, value):
    """Linear-kernel model with bias whose prediction is ``value`` everywhere."""
    imap = InputMap(np.zeros(input_dim), np.ones(input_dim), True)
    Z = np.zeros((1, input_dim + 1))
    Z[0, -1] = 1.0
    return RKHSModel(KernelSpec.linear(), imap, Z, np.atleast_2d(value).reshape(-1, 1), 1.0)


@pytest.fixture(scope="module")
def linear_reduction():
    F = np.array([[-1.0, 0.3, 0.0], [0.3, -2.0, 0.1], [0.0, 0.1, -3.0]])
    G = np.array([[1.0], [0.5], [-0.5]])
    ds = collect(lti_system(F, G, G.T), TimeGrid.with_substeps(8.0, 400, 2))
    res, fmap = balance_dataset(ds, KernelSpec.linear(), EXACT)
    return truncate(res, fmap, 2, ds.ctrl_scale, EXACT)


# -- preimage -------------------------------------------------------------------


def test_preimage_of_image_is_expansion_point(bench_reduction, rng):
    for _ in range(5):
        a = rng.uniform(-0.5, 0.5, 7)
        np.testing.assert_array_equal(taylor_preimage(bench_reduction, a, bench_reduction.reduce(a)), a)


def test_linear_preimage_is_exact_right_inverse(linear_reduction, rng):
    br = linear_reduction
    a = rng.standard_normal(3)
    for _ in range(5):
        x_r = rng.standard_normal(2)
        np.testing.assert_allclose(br.reduce(taylor_preimage(br, a, x_r)), x_r, rtol=1e-10, atol=1e-10)


def test_preimage_residual(bench_reduction, rng):
    a = rng.uniform(-0.3, 0.3, 7)
    x_r = bench_reduction.reduce(a) + rng.standard_normal(2)
    x = taylor_preimage(bench_reduction, a, x_r)
    J = bench_reduction.jacobian(a)
    np.testing.assert_allclose(J @ (x - a), x_r - bench_reduction.reduce(a), rtol=1e-8, atol=1e-8)


def test_preimage_is_least_norm(bench_reduction, rng):
    a = np.zeros(7)
    step = taylor_preimage(bench_reduction, a, rng.standard_normal(2)) - a
    J = bench_reduction.jacobian(a)
    null = np.linalg.svd(J)[2][2:]
    np.testing.assert_allclose(null @ step, 0.0, atol=1e-8 * np.linalg.norm(step))


def test_degenerate_expansion():
    fm = EmpiricalFeatureMap(KernelSpec.polynomial(3), np.zeros((3, 2)))
    br = BalancedReduction(fm, np.ones(1), np.ones((1, 3)), 1)
    with pytest.raises(DegenerateExpansionError):
        taylor_preimage(br, np.ones(2), np.zeros(1))
    with pytest.raises(DimensionMismatchError):
        Expansion.at(br, np.ones(3))


# -- kernel-property Jacobian ------------------------------------------------------


def test_real_root_power():
    assert real_root_power(8.0, 3) == pytest.approx(4.0)
    assert real_root_power(-8.0, 3) == pytest.approx(4.0)
    assert real_root_power(-8.0, 2) == pytest.approx(-(8.0 ** 0.5))
    assert real_root_power(0.0, 3) == 0.0
    assert real_root_power(-5.0, 1) == 1.0


def test_kernel_property_zero_state(bench_reduction):
    kp = KernelPropertyJacobian(bench_reduction)
    np.testing.assert_array_equal(kp.rows(np.zeros(2)), 0.0)
    np.testing.assert_array_equal(kp(np.zeros(2)), 0.0)


def test_kernel_property_linear_rows(linear_reduction, rng):
    kp = KernelPropertyJacobian(linear_reduction)
    samples = linear_reduction.fmap.samples
    np.testing.assert_array_equal(kp.rows(rng.standard_normal(2)), samples)
    np.testing.assert_allclose(kp(rng.standard_normal(2)), linear_reduction.jacobian(rng.standard_normal(3)),
                               rtol=1e-12, atol=1e-14)


def test_kernel_property_row_scaling(bench_reduction, rng):
    kp = KernelPropertyJacobian(bench_reduction)
    x_r = rng.standard_normal(2)
    np.testing.assert_allclose(kp.rows(2 * x_r), 2 ** (2 / 3) * kp.rows(x_r), rtol=1e-12, atol=1e-300)


def test_kernel_property_rows_formula(bench_reduction, rng):
    kp = KernelPropertyJacobian(bench_reduction)
    x_r = rng.standard_normal(2)
    s = bench_reduction.reduce(bench_reduction.fmap.samples) @ (bench_reduction.metric_matrix() @ x_r)
    expected = 3 * np.cbrt(s)[:, None] ** 2 * bench_reduction.fmap.samples
    np.testing.assert_allclose(kp.rows(x_r), expected, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(kernel_property_jacobian(bench_reduction, x_r),
                               bench_reduction.Tq.T @ kp.rows(x_r), rtol=1e-10, atol=1e-12)


def test_kernel_property_rejects_gaussian(bench_dataset):
    res, fmap = balance_dataset(bench_dataset, KernelSpec.gaussian(1.0))
    with pytest.raises(UnsupportedModeError):
        KernelPropertyJacobian(truncate(res, fmap, 2))


def test_kernel_property_agreement_diagnostic(bench_reduction):
    x = bench_reduction.fmap.samples[40]
    exact = bench_reduction.jacobian(x)
    approx = kernel_property_jacobian(bench_reduction, bench_reduction.reduce(x))
    deviation = np.linalg.norm(approx - exact) / np.linalg.norm(exact)
    assert np.isfinite(deviation)


# -- closed system ---------------------------------------------------------------


def test_closed_rhs_zero_model(bench_reduction, rng):
    rs = ReducedSystem(bench_reduction, zero_model(3, 7), zero_model(2, 1), JacobianMode.taylor(), 1)
    exp = rs.initial_expansion(np.zeros(7))
    np.testing.assert_array_equal(rs.closed_rhs(rng.standard_normal(2), [0.3], exp), np.zeros(2))


def test_reduced_system_dimension_checks(bench_reduction):
    with pytest.raises(DimensionMismatchError):
        ReducedSystem(bench_reduction, zero_model(2, 7), zero_model(2, 1), JacobianMode.taylor(), 1)
    with pytest.raises(DimensionMismatchError):
        ReducedSystem(bench_reduction, zero_model(3, 6), zero_model(2, 1), JacobianMode.taylor(), 1)
    with pytest.raises(DimensionMismatchError):
        ReducedSystem(bench_reduction, zero_model(3, 7), zero_model(3, 1), JacobianMode.taylor(), 1)


def test_equilibrium_consistency(bench_reduction):
    sys = benchmark_7d()
    traj = integrate(sys, np.zeros(7), Square(10.0, 2.0), TimeGrid.with_substeps(5.0, 1000, 5))
    P = bench_reduction.reduce(traj.states)
    F = np.array([sys.rhs(x, u) for x, u in zip(traj.states, traj.inputs)])
    f_model = rls_fit(RegressionDataset(np.hstack([P, traj.inputs]), F, bias=True, standardize=True),
                      KernelSpec.polynomial(3), 1e-8)
    rs = ReducedSystem(bench_reduction, f_model, zero_model(2, 1), JacobianMode.taylor(), 1)
    x_r0 = bench_reduction.reduce(np.zeros(7))
    rhs = rs.closed_rhs(x_r0, [0.0], rs.initial_expansion(np.zeros(7)))
    residual = f_model.predict(np.r_[x_r0, 0.0])
    assert np.linalg.norm(rhs) <= np.linalg.norm(bench_reduction.jacobian(np.zeros(7)), 2) * np.linalg.norm(residual)


def test_chain_rule_on_scalar_system():
    sys = lti_system([[-1.0]], [[1.0]], [[1.0]])
    ds = collect(sys, TimeGrid.with_substeps(5.0, 100, 2))
    res, fmap = balance_dataset(ds, KernelSpec.linear(), EXACT)
    br = truncate(res, fmap, 1, ds.ctrl_scale, EXACT)
    grid = TimeGrid.with_substeps(4.0, 400, 4)
    traj = integrate(sys, [0.5], Sine(1.0), grid)
    P = br.reduce(traj.states)
    F = np.array([sys.rhs(x, u) for x, u in zip(traj.states, traj.inputs)])
    f_model = rls_fit(RegressionDataset(np.hstack([P, traj.inputs]), F), KernelSpec.linear(), 1e-10)
    h_model = rls_fit(RegressionDataset(P, traj.outputs), KernelSpec.linear(), 1e-10)
    rs = ReducedSystem(br, f_model, h_model, JacobianMode.taylor(), 1)
    exp = rs.initial_expansion(np.zeros(1))
    rhs = np.array([rs.closed_rhs(p, u, exp) for p, u in zip(P, traj.inputs)])[:, 0]
    dPdt = np.gradient(P[:, 0], traj.times)
    inner = slice(5, -5)
    assert np.linalg.norm(rhs[inner] - dPdt[inner]) <= 0.05 * np.linalg.norm(dPdt[inner])
    rt = simulate_reduced(rs, br.reduce([0.5]), Sine(1.0), grid, x0=[0.5])
    assert compare(traj.outputs, rt.outputs)["relative_l2"] <= 1e-3


def test_taylor_rhs_continuity(bench_reduction, rng):
    rs = ReducedSystem(bench_reduction, constant_model(3, rng.standard_normal(7)), zero_model(2, 1),
                       JacobianMode.taylor(), 1)
    exp = rs.initial_expansion(np.zeros(7))
    x_r = bench_reduction.reduce(np.zeros(7))
    base = rs.closed_rhs(x_r, [0.0], exp)
    for eps in (1e-3, 1e-4, 1e-5):
        d = rng.standard_normal(2)
        change = np.linalg.norm(rs.closed_rhs(x_r + eps * d, [0.0], exp) - base)
        assert change <= 1e3 * eps * np.linalg.norm(base)


def test_simulate_zero_model(bench_reduction):
    h = constant_model(2, 0.7)
    rs = ReducedSystem(bench_reduction, zero_model(3, 7), h, JacobianMode.taylor(refresh_every=3), 1)
    rt = simulate_reduced(rs, np.zeros(2), Square(5.0), TimeGrid.with_substeps(1.0, 20, 2))
    np.testing.assert_array_equal(rt.states, 0.0)
    np.testing.assert_allclose(rt.outputs, 0.7, rtol=1e-15)
    assert rt.outputs.shape == (20, 1)


def test_simulate_deterministic(bench_reduction):
    rng = np.random.default_rng(5)
    rs = ReducedSystem(bench_reduction, constant_model(3, 0.01 * rng.standard_normal(7)), constant_model(2, 0.0),
                       JacobianMode.kernel_property(), 1)
    u = UniformRandom(-1.0, 1.0, 0.05, seed=3)
    grid = TimeGrid.with_substeps(0.5, 50, 2)
    x_r0 = bench_reduction.reduce(np.zeros(7))
    a, b = simulate_reduced(rs, x_r0, u, grid), simulate_reduced(rs, x_r0, u, grid)
    np.testing.assert_array_equal(a.states, b.states)


def test_simulate_rejects_bad_initial_state(bench_reduction):
    rs = ReducedSystem(bench_reduction, zero_model(3, 7), zero_model(2, 1), JacobianMode.taylor(), 1)
    with pytest.raises(DimensionMismatchError):
        simulate_reduced(rs, np.zeros(3), None, TimeGrid.with_substeps(1.0, 10))


def test_jacobian_mode_validation():
    with pytest.raises(ValueError):
        JacobianMode("newton")
    with pytest.raises(ValueError):
        JacobianMode.taylor(refresh_every=-1)
    assert JacobianMode().to_dict() == {"variant": "taylor_inverse", "refresh_every": 0, "expansion_point": "x0"}


# -- comparison ----------------------------------------------------------------


def test_compare_examples():
    y = np.sin(np.linspace(0, 3, 50))[:, None]
    assert compare(y, y) == {"rmse": 0.0, "relative_l2": 0.0, "max_abs_err": 0.0}
    c = np.full((10, 1), 2.5)
    assert compare(c, np.zeros_like(c))["relative_l2"] == pytest.approx(1.0)
    m = compare(y, y + 1e-3)
    assert m["max_abs_err"] == pytest.approx(1e-3, rel=1e-9)
    assert m["rmse"] == pytest.approx(1e-3, rel=1e-9)
    with pytest.raises(DimensionMismatchError):
        compare(y, y[:-1])
