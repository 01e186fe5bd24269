"""Excitation experiments, empirical Gramians and the linear balancing baseline.

Sample sets use a time-major linear index: all channels at ``t_1``, then
all channels at ``t_2``, and so on. The same order is used for the rows of
the kernel matrices built from them.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from . import csvio
from .errors import IntegrationDivergedError
from .numerics import ToleranceConfig, jittered_cholesky, reduced_svd
from .systems import ControlSystem, TimeGrid, impulse_response, observability_response


@dataclass(frozen=True, eq=False)
class GramianDataset:
    """Controllability samples ``x^j(t_i)`` and observability samples ``d_j(t_i)``.

    ``ctrl`` has shape ``(N * m, n)``; ``obs`` has shape ``(N * p, n)`` with
    ``obs[i * p + j, k]`` equal to output ``j`` at ``t_i`` from ``x0 = e_k``.
    """

    grid: TimeGrid
    n: int
    m: int
    p: int
    ctrl: np.ndarray
    obs: np.ndarray

    def __post_init__(self):
        N = self.grid.n_samples
        if self.ctrl.shape != (N * self.m, self.n) or self.obs.shape != (N * self.p, self.n):
            raise ValueError(
                f"dataset shapes {self.ctrl.shape}, {self.obs.shape} do not match "
                f"N={N}, n={self.n}, m={self.m}, p={self.p}"
            )

    @property
    def ctrl_scale(self):
        return self.grid.t_final / (self.m * self.grid.n_samples)

    @property
    def obs_scale(self):
        return self.grid.t_final / (self.p * self.grid.n_samples)

    def ctrl_index(self, row):
        """``(time_index, channel)``, both 0-based, of a ``ctrl`` row."""
        return divmod(row, self.m)

    def obs_index(self, row):
        return divmod(row, self.p)


def collect(sys: ControlSystem, grid: TimeGrid, workers: int = 1) -> GramianDataset:
    """Run the ``m`` impulse experiments and ``n`` initial-condition experiments.

    With ``workers > 1`` the runs execute on a thread pool; results are
    assembled in the same order either way.
    """
    jobs = [("impulse", j) for j in range(sys.m)] + [("initial_condition", k) for k in range(sys.n)]

    def run(job):
        kind, idx = job
        try:
            if kind == "impulse":
                return impulse_response(sys, idx, grid)
            return observability_response(sys, idx, grid)
        except IntegrationDivergedError as exc:
            raise exc.annotate(f"{kind}[{idx}]") from None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(run, jobs))
    else:
        trajs = [run(j) for j in jobs]
    imp, ic = trajs[: sys.m], trajs[sys.m:]
    N = grid.n_samples
    ctrl = np.stack([t.states for t in imp], axis=1).reshape(N * sys.m, sys.n) if sys.m else np.zeros((0, sys.n))
    obs = np.stack([t.outputs for t in ic], axis=2).reshape(N * sys.p, sys.n)
    return GramianDataset(grid, sys.n, sys.m, sys.p, ctrl, obs)


@dataclass(frozen=True)
class EmpiricalGramianPair:
    Wc: np.ndarray
    Wo: np.ndarray
    ctrl_scale: float
    obs_scale: float


def empirical_gramians(ds: GramianDataset) -> EmpiricalGramianPair:
    Wc = ds.ctrl_scale * (ds.ctrl.T @ ds.ctrl)
    Wo = ds.obs_scale * (ds.obs.T @ ds.obs)
    return EmpiricalGramianPair(0.5 * (Wc + Wc.T), 0.5 * (Wo + Wo.T), ds.ctrl_scale, ds.obs_scale)


def linear_balance(g: EmpiricalGramianPair, tol: ToleranceConfig | None = None):
    """Square-root balancing of a Gramian pair.

    Factor ``Wo = Z Z^T`` and diagonalize ``Z^T Wc Z = U diag(sigma^2) U^T``.
    Then ``T = diag(sigma^-1/2) U^T Z^T`` satisfies
    ``T Wc T^T = T^-T Wo T^-1 = diag(sigma)``.

    Returns
    -------
    T : (n, n) ndarray
    sigma : (n,) ndarray, descending
    """
    tol = tol or ToleranceConfig(jitter=0.0)
    Z = jittered_cholesky(g.Wo, tol)
    U, s2, _ = reduced_svd(Z.T @ g.Wc @ Z)
    sigma = np.sqrt(s2)
    keep = sigma > tol.pinv_rtol * sigma[0] if sigma[0] > 0 else np.zeros_like(sigma, bool)
    inv_half = np.zeros_like(sigma)
    inv_half[keep] = sigma[keep] ** -0.5
    T = inv_half[:, None] * (U.T @ Z.T)
    return T, sigma


def solve_lyapunov(F, Q):
    """Solve ``F W + W F^T = -Q`` and symmetrize the result."""
    W = solve_continuous_lyapunov(np.asarray(F, dtype=float), -np.asarray(Q, dtype=float))
    return 0.5 * (W + W.T)


def lyapunov_gramians(F, G, H):
    F, G, H = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (F, G, H))
    return solve_lyapunov(F, G @ G.T), solve_lyapunov(F.T, H.T @ H)


def lyapunov_hankel_values(F, G, H):
    """Hankel singular values from the exact Gramians, descending."""
    Wc, Wo = lyapunov_gramians(F, G, H)
    ev = np.linalg.eigvals(Wc @ Wo).real
    return np.sqrt(np.clip(np.sort(ev)[::-1], 0.0, None))


# -- CSV export -------------------------------------------------------------


def export_dataset(ds: GramianDataset, path):
    """One row per sample: ``tag, time_index, channel_index, v1..vn`` (indices 1-based)."""
    g = ds.grid
    meta = (f"grid t_final={csvio.fmt(g.t_final)} samples={g.n_samples} step={csvio.fmt(g.step)} "
            f"n={ds.n} m={ds.m} p={ds.p}")
    header = ["tag", "time_index", "channel_index"] + [f"v{k + 1}" for k in range(ds.n)]
    rows = []
    for tag, data, width in (("ctrl", ds.ctrl, ds.m), ("obs", ds.obs, ds.p)):
        for r, vec in enumerate(data):
            i, j = divmod(r, width)
            rows.append([tag, i + 1, j + 1] + [csvio.fmt(v) for v in vec])
    csvio.write_rows(path, header, rows, comments=[meta])


def import_dataset(path) -> GramianDataset:
    comments, header, rows = csvio.read_rows(path)
    meta = next(c for c in comments if c.startswith("grid "))
    kv = dict(item.split("=") for item in meta[len("grid "):].split())
    grid = TimeGrid(float(kv["t_final"]), int(kv["samples"]), float(kv["step"]))
    n, m, p = int(kv["n"]), int(kv["m"]), int(kv["p"])
    ctrl = np.zeros((grid.n_samples * m, n))
    obs = np.zeros((grid.n_samples * p, n))
    for row in rows:
        tag, i, j = row[0], int(row[1]) - 1, int(row[2]) - 1
        vec = [float(v) for v in row[3:]]
        if tag == "ctrl":
            ctrl[i * m + j] = vec
        elif tag == "obs":
            obs[i * p + j] = vec
        else:
            raise ValueError(f"unknown sample tag {tag!r}")
    return GramianDataset(grid, n, m, p, ctrl, obs)
