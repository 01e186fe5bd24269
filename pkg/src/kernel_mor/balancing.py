"""Kernel balancing, truncation and the nonlinear reduction map.

The controllability and observability Gram matrices are scaled by the same
factors as the empirical Gramians, ``t_final / (m N)`` and ``t_final / (p N)``.
With a linear kernel the Hankel values therefore coincide with the linear
empirical balancing of the same samples.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import csvio
from .errors import DegenerateSystemError, DimensionMismatchError, RankDeficiencyError
from .gramians import GramianDataset
from .kernels import EmpiricalFeatureMap, KernelSpec, gram_matrix, resolve_gamma
from .numerics import DEFAULT_TOL, ToleranceConfig, _check_symmetric, psd_sqrt_pair

GAP_RATIO = 10.0


@dataclass(frozen=True)
class BalanceResult:
    """Output of :func:`kernel_balance`.

    ``T`` is ``r x L``, ``T_inv_T`` is the matching ``r x L`` block of
    ``T^-T`` and ``sigma`` holds the ``r`` nonzero Hankel values, descending.
    """

    T: np.ndarray
    sigma: np.ndarray
    T_inv_T: np.ndarray

    @property
    def rank(self):
        return self.sigma.size


def kernel_balance(K_c, K_o, tol: ToleranceConfig = DEFAULT_TOL,
                   ctrl_scale: float = 1.0, obs_scale: float = 1.0) -> BalanceResult:
    """Simultaneously diagonalize two Gram matrices.

    With ``A_c = ctrl_scale (K_c + jitter I)`` and ``A_o = obs_scale K_o``,
    let ``S = A_c^{1/2}`` and ``S A_o S = U diag(sigma^2) U^T``. Then
    ``T = diag(sigma^1/2) U^T S^+`` gives ``T A_c T^T = diag(sigma)`` and
    ``T^-T = diag(sigma^-1/2) U^T S`` gives ``T^-T A_o T^-1 = diag(sigma)``.
    Directions with ``sigma^2`` below ``pinv_rtol`` times the largest are dropped.
    """
    K_c = _check_symmetric(K_c)
    K_o = _check_symmetric(K_o)
    if K_c.shape != K_o.shape:
        raise DimensionMismatchError(
            f"controllability and observability Gram matrices differ in size: {K_c.shape} vs {K_o.shape}"
        )
    L = K_c.shape[0]
    A_c = ctrl_scale * (K_c + tol.jitter * np.eye(L))
    S, S_pinv = psd_sqrt_pair(A_c, tol)
    M = S @ (obs_scale * K_o) @ S
    s2, U = np.linalg.eigh(0.5 * (M + M.T))
    s2, U = np.maximum(s2[::-1], 0.0), U[:, ::-1]
    top = s2[0] if s2.size else 0.0
    r = int(np.sum(s2 > tol.pinv_rtol * top)) if top > 0 else 0
    if r == 0:
        raise DegenerateSystemError("all Hankel values vanish; the system is neither controllable nor observable")
    sigma = np.sqrt(s2[:r])
    Ur = U[:, :r]
    T = np.sqrt(sigma)[:, None] * (Ur.T @ S_pinv)
    T_inv_T = (1.0 / np.sqrt(sigma))[:, None] * (Ur.T @ S)
    return BalanceResult(T, sigma, T_inv_T)


def gap_ratios(sigma):
    """``sigma_k / sigma_{k+1}`` for ``k = 1 .. r-1``."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma[:-1] / sigma[1:]


def auto_gap(sigma, threshold: float = GAP_RATIO) -> int:
    """Smallest ``k`` with ``sigma_k / sigma_{k+1} >= threshold``, else the largest ratio."""
    ratios = gap_ratios(sigma)
    if ratios.size == 0:
        return 1
    hits = np.nonzero(ratios >= threshold)[0]
    return int(hits[0] + 1) if hits.size else int(np.argmax(ratios) + 1)


def balance_dataset(ds: GramianDataset, kernel: KernelSpec, tol: ToleranceConfig = DEFAULT_TOL):
    """Build both Gram matrices from a dataset and balance them.

    Returns ``(result, fmap)`` where ``fmap`` is the empirical feature map over
    the controllability samples (with any ``auto`` Gaussian scale resolved).
    """
    if ds.m != ds.p:
        raise DimensionMismatchError(
            f"kernel balancing needs equal sample counts (m = p); got m={ds.m}, p={ds.p}"
        )
    kernel = resolve_gamma(kernel, ds.ctrl)
    res = kernel_balance(gram_matrix(kernel, ds.ctrl), gram_matrix(kernel, ds.obs), tol,
                         ds.ctrl_scale, ds.obs_scale)
    return res, EmpiricalFeatureMap(kernel, ds.ctrl)


@dataclass(frozen=True, eq=False)
class BalancedReduction:
    """Truncated balancing transform and the map ``Pi(x) = T_q^T k_c(x)``."""

    fmap: EmpiricalFeatureMap
    sigma: np.ndarray
    T: np.ndarray
    q: int
    gram_scale: float = 1.0
    tol: ToleranceConfig = DEFAULT_TOL

    def __post_init__(self):
        if not 1 <= self.q <= self.sigma.size:
            raise ValueError(f"q={self.q} out of range; numerical rank is {self.sigma.size}")
        if self.T.shape != (self.sigma.size, self.fmap.size):
            raise DimensionMismatchError(f"transform shape {self.T.shape} does not match "
                                         f"rank {self.sigma.size} and {self.fmap.size} samples")

    @property
    def kernel(self):
        return self.fmap.kernel

    @property
    def n(self):
        return self.fmap.dim

    @cached_property
    def Tq(self):
        """``L x q``: the first ``q`` rows of ``T``, transposed."""
        Tq = np.ascontiguousarray(self.T[: self.q].T)
        Tq.setflags(write=False)
        return Tq

    def reduce(self, x):
        """``Pi(x)``; a 2-D ``x`` is treated as one point per row."""
        return self.fmap(x) @ self.Tq

    def jacobian(self, x):
        """``q x n`` Jacobian of ``Pi`` at ``x``."""
        return self.fmap.weighted(x, self.Tq)[1]

    def reduce_and_jacobian(self, x):
        return self.fmap.weighted(x, self.Tq)

    def gap_ratios(self):
        return gap_ratios(self.sigma)

    @cached_property
    def _gram_block(self):
        K = gram_matrix(self.kernel, self.fmap.samples)
        B = self.Tq.T @ K @ self.Tq
        return 0.5 * (B + B.T)

    def metric_matrix(self):
        """``(T_q^T K_c T_q)^{-1}`` with the unscaled, unjittered Gram matrix."""
        B = self._gram_block
        w = np.linalg.eigvalsh(B)
        if w[0] <= self.tol.pinv_rtol * max(w[-1], 0.0) or w[-1] <= 0:
            raise RankDeficiencyError(f"T_q^T K_c T_q is singular (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})")
        return np.linalg.inv(B)

    def metric_identity_deviation(self):
        """Relative difference between ``T_q^T K_c T_q`` and ``T_q^T T_q Sigma_q``."""
        B = self._gram_block
        alt = self.Tq.T @ self.Tq * self.sigma[: self.q][None, :]
        return float(np.linalg.norm(B - alt) / np.linalg.norm(B))


def truncate(res: BalanceResult, fmap: EmpiricalFeatureMap, q: int, gram_scale: float = 1.0,
             tol: ToleranceConfig = DEFAULT_TOL) -> BalancedReduction:
    return BalancedReduction(fmap, res.sigma, res.T, int(q), gram_scale, tol)


# -- artifacts --------------------------------------------------------------


def write_hankel_values(path, sigma):
    csvio.write_rows(path, ["index", "value"], [[k + 1, float(s)] for k, s in enumerate(sigma)])


def read_hankel_values(path):
    _, _, rows = csvio.read_rows(path)
    return np.array([float(r[1]) for r in rows])


def save_reduction(br: BalancedReduction, directory):
    """Write ``header.json``, ``samples.csv`` and ``transform.csv`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    header = {
        "kernel": br.kernel.to_dict(),
        "q": br.q,
        "gram_scale": br.gram_scale,
        "tolerances": br.tol.to_dict(),
        "sigma": [csvio.fmt(s) for s in br.sigma],
    }
    with open(os.path.join(directory, "header.json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csvio.write_matrix(os.path.join(directory, "samples.csv"), br.fmap.samples, prefix="x")
    csvio.write_matrix(os.path.join(directory, "transform.csv"), br.T, prefix="l")


def load_reduction(directory) -> BalancedReduction:
    with open(os.path.join(directory, "header.json")) as fh:
        header = json.load(fh)
    kernel = KernelSpec.from_dict(header["kernel"])
    samples = csvio.read_matrix(os.path.join(directory, "samples.csv"))
    T = csvio.read_matrix(os.path.join(directory, "transform.csv"))
    sigma = np.array([float(s) for s in header["sigma"]])
    return BalancedReduction(EmpiricalFeatureMap(kernel, samples), sigma, T, int(header["q"]),
                             float(header["gram_scale"]), ToleranceConfig.from_dict(header["tolerances"]))
