"""Closed reduced-order dynamics, simulation and output comparison.

The reduced vector field is ``x_r' = J_Pi(x~) f^(x_r, u)``, where ``f^`` is
the learned full-state dynamics and ``x~`` an approximate preimage of
``x_r``. Two ways of obtaining the Jacobian are provided:

``taylor_inverse``
    ``x~ = J_Pi(a)^+ (x_r - Pi(a)) + a`` and ``J_Pi`` evaluated exactly at ``x~``.
    The expansion point ``a`` can be moved to the current preimage every
    ``refresh_every`` integrator substeps (0 keeps it fixed).
``kernel_property``
    Polynomial kernels only. Kernel values at the implicit preimage are
    recovered from ``<x_r, M Pi(y)>`` with ``M = (T_q^T K_c T_q)^{-1}``, so no
    preimage is formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .balancing import BalancedReduction
from .errors import DegenerateExpansionError, DimensionMismatchError, IntegrationDivergedError, UnsupportedModeError
from .numerics import pinv
from .systems import Signal, TimeGrid, Zero

TAYLOR = "taylor_inverse"
KERNEL_PROPERTY = "kernel_property"


@dataclass(frozen=True)
class JacobianMode:
    variant: str = TAYLOR
    expansion_point: tuple | None = None
    refresh_every: int = 0

    def __post_init__(self):
        if self.variant not in (TAYLOR, KERNEL_PROPERTY):
            raise ValueError(f"unknown jacobian mode {self.variant!r}")
        if int(self.refresh_every) != self.refresh_every or self.refresh_every < 0:
            raise ValueError("refresh_every must be a nonnegative integer (0 = never)")
        if self.expansion_point is not None:
            object.__setattr__(self, "expansion_point", tuple(float(v) for v in self.expansion_point))

    @classmethod
    def taylor(cls, a=None, refresh_every=0):
        return cls(TAYLOR, None if a is None else tuple(np.ravel(a)), int(refresh_every))

    @classmethod
    def kernel_property(cls):
        return cls(KERNEL_PROPERTY)

    def to_dict(self):
        if self.variant == KERNEL_PROPERTY:
            return {"variant": KERNEL_PROPERTY}
        d = {"variant": TAYLOR, "refresh_every": self.refresh_every}
        d["expansion_point"] = "x0" if self.expansion_point is None else list(self.expansion_point)
        return d


@dataclass(frozen=True, eq=False)
class Expansion:
    """First-order inverse of ``Pi`` about ``a``."""

    a: np.ndarray
    pi_a: np.ndarray
    J_pinv: np.ndarray

    @classmethod
    def at(cls, br: BalancedReduction, a):
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.size != br.n:
            raise DimensionMismatchError(f"expansion point has dimension {a.size}, state has {br.n}")
        J = br.jacobian(a)
        pi_a = br.reduce(a)  # same evaluation path as callers' Pi(a), so x_r = Pi(a) maps back to a exactly
        if not np.any(J):
            raise DegenerateExpansionError(f"Jacobian of the reduction map vanishes at {a}")
        return cls(a, pi_a, pinv(J, br.tol))

    def preimage(self, x_r):
        return self.J_pinv @ (np.asarray(x_r, dtype=float) - self.pi_a) + self.a


def taylor_preimage(br: BalancedReduction, a, x_r):
    """``J_Pi(a)^+ (x_r - Pi(a)) + a``."""
    return Expansion.at(br, a).preimage(x_r)


def real_root_power(s, d):
    """``s^{(d-1)/d}`` with the sign-preserving real ``d``-th root."""
    s = np.asarray(s, dtype=float)
    return (np.sign(s) * np.abs(s) ** (1.0 / d)) ** (d - 1)


@dataclass(frozen=True, eq=False)
class KernelPropertyJacobian:
    """Closed-form ``J_Pi`` for polynomial kernels from reduced coordinates alone."""

    br: BalancedReduction

    def __post_init__(self):
        if self.br.kernel.family not in ("polynomial", "linear"):
            raise UnsupportedModeError(
                f"kernel_property Jacobians need a polynomial kernel, not {self.br.kernel.family!r}"
            )

    @property
    def degree(self):
        return 1 if self.br.kernel.family == "linear" else self.br.kernel.degree

    @cached_property
    def metric(self):
        return self.br.metric_matrix()

    @cached_property
    def sample_images(self):
        """``Pi(y_l)`` for every stored sample, ``L x q``."""
        return self.br.reduce(self.br.fmap.samples)

    def inner_products(self, x_r):
        x_r = np.asarray(x_r, dtype=float).reshape(-1)
        if x_r.size != self.br.q:
            raise DimensionMismatchError(f"reduced state has dimension {x_r.size}, q = {self.br.q}")
        return self.sample_images @ (self.metric @ x_r)

    def rows(self, x_r):
        """``L x n`` matrix; row ``l`` is ``d s_l^{(d-1)/d} y_l^T``."""
        d = self.degree
        g = d * real_root_power(self.inner_products(x_r), d)
        return g[:, None] * self.br.fmap.samples

    def __call__(self, x_r):
        d = self.degree
        g = d * real_root_power(self.inner_products(x_r), d)
        return (self.br.Tq * g[:, None]).T @ self.br.fmap.samples


def kernel_property_jacobian(br: BalancedReduction, x_r):
    return KernelPropertyJacobian(br)(x_r)


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """``x_r' = J_Pi f^((x_r, u))``, ``y = h^(x_r)``."""

    br: BalancedReduction
    f_model: object
    h_model: object
    jmode: JacobianMode
    m: int

    def __post_init__(self):
        q = self.br.q
        if self.f_model.input_dim != q + self.m:
            raise DimensionMismatchError(f"dynamics model takes {self.f_model.input_dim} inputs, expected q+m={q + self.m}")
        if self.f_model.n_targets != self.br.n:
            raise DimensionMismatchError(f"dynamics model has {self.f_model.n_targets} targets, state has n={self.br.n}")
        if self.h_model.input_dim != q:
            raise DimensionMismatchError(f"output model takes {self.h_model.input_dim} inputs, expected q={q}")

    @property
    def q(self):
        return self.br.q

    @cached_property
    def _kp(self):
        return KernelPropertyJacobian(self.br)

    def initial_expansion(self, x0):
        a = x0 if self.jmode.expansion_point is None else self.jmode.expansion_point
        return Expansion.at(self.br, a)

    def jacobian(self, x_r, expansion: Expansion | None = None):
        if self.jmode.variant == KERNEL_PROPERTY:
            return self._kp(x_r)
        if expansion is None:
            expansion = self.initial_expansion(np.zeros(self.br.n))
        return self.br.jacobian(expansion.preimage(x_r))

    def closed_rhs(self, x_r, u, expansion: Expansion | None = None):
        x_r = np.asarray(x_r, dtype=float).reshape(-1)
        z = np.concatenate([x_r, np.atleast_1d(np.asarray(u, dtype=float))])
        return self.jacobian(x_r, expansion) @ self.f_model.predict(z)

    def output(self, x_r):
        return self.h_model.predict(x_r)


@dataclass(frozen=True, eq=False)
class ReducedTrajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray


def _signals(u, m):
    if u is None:
        return [Zero()] * m
    if isinstance(u, Signal):
        return [u]
    return list(u)


def simulate_reduced(rs: ReducedSystem, x_r0, u, grid: TimeGrid, x0=None) -> ReducedTrajectory:
    """Fixed-step RK4 on the closed reduced system.

    The input is held at its substep-midpoint value, as in the full-order integrator. ``x0`` is
    the full-order initial state used as the default expansion point.
    """
    signals = _signals(u, rs.m)
    if len(signals) != rs.m:
        raise DimensionMismatchError(f"system has {rs.m} inputs but {len(signals)} signals were given")
    x = np.asarray(x_r0, dtype=float).reshape(-1).copy()
    if x.size != rs.q:
        raise DimensionMismatchError(f"reduced initial state has dimension {x.size}, q = {rs.q}")
    x0 = np.zeros(rs.br.n) if x0 is None else np.asarray(x0, dtype=float)
    taylor = rs.jmode.variant == TAYLOR
    exp = rs.initial_expansion(x0) if taylor else None
    refresh = rs.jmode.refresh_every if taylor else 0
    tk = grid.hold_times()
    U = np.column_stack([s(tk) for s in signals]) if rs.m else np.zeros((len(tk), 0))
    h = grid.h
    sub = grid.substeps
    states = np.empty((grid.n_samples, rs.q))
    for k in range(grid.n_steps):
        uk = U[k]
        k1 = rs.closed_rhs(x, uk, exp)
        k2 = rs.closed_rhs(x + 0.5 * h * k1, uk, exp)
        k3 = rs.closed_rhs(x + 0.5 * h * k2, uk, exp)
        k4 = rs.closed_rhs(x + h * k3, uk, exp)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergedError(grid.t_final * (k + 1) / grid.n_steps, run="reduced")
        if refresh and (k + 1) % refresh == 0:
            exp = Expansion.at(rs.br, exp.preimage(x))
        if (k + 1) % sub == 0:
            states[(k + 1) // sub - 1] = x
    times = grid.sample_times()
    outputs = np.atleast_2d(rs.h_model.predict(states))
    outputs = outputs.reshape(grid.n_samples, -1)
    inputs = np.column_stack([s(times) for s in signals]) if rs.m else np.zeros((len(times), 0))
    return ReducedTrajectory(times, states, outputs, inputs)


def compare(y, y_hat) -> dict:
    """``rmse``, ``relative_l2`` and ``max_abs_err`` of ``y_hat`` against ``y``."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise DimensionMismatchError(f"trajectories differ in shape: {y.shape} vs {y_hat.shape}")
    e = y - y_hat
    ny = np.linalg.norm(y)
    return {
        "rmse": float(np.sqrt(np.mean(e**2))),
        "relative_l2": float(np.linalg.norm(e) / ny) if ny > 0 else (0.0 if not e.any() else float("inf")),
        "max_abs_err": float(np.max(np.abs(e))),
    }
