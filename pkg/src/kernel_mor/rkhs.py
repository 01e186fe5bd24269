"""Kernel regularized least squares with closed-form leave-one-out error.

All fits go through one symmetric eigendecomposition ``G = Q diag(w) Q^T``
of the training Gram matrix, so every ``lambda`` on a grid and every target
coordinate reuses the same factorization.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import csvio
from .errors import DimensionMismatchError
from .kernels import KernelSpec, cross_gram, gram_matrix, resolve_gamma


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """Inputs ``z_j`` (rows) and targets ``y_j`` (rows).

    ``bias`` appends a constant 1 to every input; ``standardize`` z-scores
    the raw inputs with training statistics before the bias is appended.
    """

    inputs: np.ndarray
    targets: np.ndarray
    bias: bool = False
    standardize: bool = False

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        Y = np.asarray(self.targets, dtype=float)
        Y = Y[:, None] if Y.ndim == 1 else Y
        if Z.shape[0] != Y.shape[0]:
            raise DimensionMismatchError(f"{Z.shape[0]} inputs but {Y.shape[0]} targets")
        if Z.shape[0] == 0:
            raise ValueError("regression dataset is empty")
        object.__setattr__(self, "inputs", Z)
        object.__setattr__(self, "targets", Y)

    @property
    def size(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class InputMap:
    """Affine preprocessing ``z -> [(z - mean) / std, 1?]``."""

    mean: np.ndarray
    std: np.ndarray
    bias: bool

    @classmethod
    def fit(cls, ds: RegressionDataset):
        d = ds.inputs.shape[1]
        if ds.standardize:
            mean = ds.inputs.mean(axis=0)
            std = ds.inputs.std(axis=0)
            std = np.where(std > 0, std, 1.0)
        else:
            mean, std = np.zeros(d), np.ones(d)
        return cls(mean, std, ds.bias)

    @property
    def raw_dim(self):
        return self.mean.size

    def __call__(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.raw_dim:
            raise DimensionMismatchError(f"input has dimension {Z.shape[1]}, model expects {self.raw_dim}")
        Z = (Z - self.mean) / self.std
        if self.bias:
            Z = np.hstack([Z, np.ones((Z.shape[0], 1))])
        return Z


def _check_lambda(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"regularization must be positive, got {lam!r}")
    return lam


class _Factorization:
    def __init__(self, G):
        w, Q = np.linalg.eigh(G)
        self.w = np.clip(w, 0.0, None)
        self.Q = Q

    def coefficients(self, lam, Y):
        """``(G + lam I)^{-1} Y``."""
        return self.Q @ ((self.Q.T @ Y) / (self.w + lam)[:, None])

    def loo_residuals(self, lam, Y):
        c = self.coefficients(lam, Y)
        hdiag = (self.Q**2) @ (1.0 / (self.w + lam))
        return c / hdiag[:, None]


def _prepare(ds: RegressionDataset, kernel: KernelSpec):
    imap = InputMap.fit(ds)
    Z = imap(ds.inputs)
    kernel = resolve_gamma(kernel, Z)
    return kernel, imap, Z, _Factorization(gram_matrix(kernel, Z))


@dataclass(frozen=True, eq=False)
class RKHSModel:
    """``y(z) = C k(z)`` with ``k(z)_j = K(map(z), z_j)``.

    ``C`` has one row per target coordinate and one column per training example.
    """

    kernel: KernelSpec
    imap: InputMap
    train_inputs: np.ndarray
    C: np.ndarray
    lam: float

    @property
    def n_targets(self):
        return self.C.shape[0]

    @property
    def input_dim(self):
        return self.imap.raw_dim

    def features(self, z):
        return cross_gram(self.kernel, self.imap(z), self.train_inputs)

    def predict(self, z):
        """Targets for one input vector, or one row per input for a 2-D array."""
        z = np.asarray(z, dtype=float)
        out = self.features(z) @ self.C.T
        return out[0] if z.ndim == 1 else out


def rls_fit(ds: RegressionDataset, kernel: KernelSpec, lam: float) -> RKHSModel:
    """Solve ``(G + lam I) c_i = y_i`` for every target coordinate ``i``."""
    lam = _check_lambda(lam)
    kernel, imap, Z, fac = _prepare(ds, kernel)
    return RKHSModel(kernel, imap, Z, np.ascontiguousarray(fac.coefficients(lam, ds.targets).T), lam)


def loocv_curve(ds: RegressionDataset, kernel: KernelSpec, lams) -> np.ndarray:
    """Mean squared leave-one-out residual per coordinate, shape ``(len(lams), n_targets)``."""
    lams = [_check_lambda(l) for l in np.atleast_1d(lams)]
    _, _, _, fac = _prepare(ds, kernel)
    return np.array([np.mean(fac.loo_residuals(l, ds.targets) ** 2, axis=0) for l in lams])


def loocv_error(ds: RegressionDataset, kernel: KernelSpec, lam: float) -> np.ndarray:
    return loocv_curve(ds, kernel, [lam])[0]


def loo_residuals(ds: RegressionDataset, kernel: KernelSpec, lam: float) -> np.ndarray:
    """``y_j - f^{(-j)}(z_j)`` for every example, shape ``(size, n_targets)``."""
    _, _, _, fac = _prepare(ds, kernel)
    return fac.loo_residuals(_check_lambda(lam), ds.targets)


def _argbest(lams, scores):
    # minimum score; ties go to the larger lambda
    lams = np.asarray(lams, dtype=float)
    scores = np.asarray(scores, dtype=float)
    best = np.min(scores)
    return float(np.max(lams[scores == best]))


def select_lambda(ds: RegressionDataset, kernel: KernelSpec, lams) -> float:
    if len(np.atleast_1d(lams)) == 0:
        raise ValueError("lambda grid is empty")
    curve = loocv_curve(ds, kernel, lams)
    return _argbest(np.atleast_1d(lams), curve.sum(axis=1))


def fit_loocv(ds: RegressionDataset, kernel: KernelSpec, lams):
    """Select ``lambda`` by LOOCV and refit. Returns ``(model, curve)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if lams.size == 0:
        raise ValueError("lambda grid is empty")
    curve = loocv_curve(ds, kernel, lams)
    return rls_fit(ds, kernel, _argbest(lams, curve.sum(axis=1))), curve


@dataclass(frozen=True, eq=False)
class StackedModel:
    """Independent models for consecutive blocks of target coordinates."""

    parts: tuple

    @property
    def n_targets(self):
        return sum(p.n_targets for p in self.parts)

    @property
    def input_dim(self):
        return self.parts[0].input_dim

    def predict(self, z):
        return np.concatenate([p.predict(z) for p in self.parts], axis=-1)


def fit_per_coordinate(ds: RegressionDataset, kernels, lams):
    """One model per target coordinate, each with its own kernel and LOOCV choice.

    Returns ``(StackedModel, curves)``.
    """
    if len(kernels) != ds.targets.shape[1]:
        raise DimensionMismatchError(f"{len(kernels)} kernels for {ds.targets.shape[1]} target coordinates")
    parts, curves = [], []
    for i, k in enumerate(kernels):
        sub = RegressionDataset(ds.inputs, ds.targets[:, i], ds.bias, ds.standardize)
        model, curve = fit_loocv(sub, k, lams)
        parts.append(model)
        curves.append(curve[:, 0])
    return StackedModel(tuple(parts)), np.column_stack(curves)


@dataclass(frozen=True, eq=False)
class SeparableModel:
    """``f(x_r) + G(x_r) u`` for input-affine dynamics.

    ``drift`` maps ``x_r`` to ``n`` values; ``gain`` maps ``x_r`` to ``n * m``
    values laid out row-major as an ``n x m`` matrix.
    """

    drift: object
    gain: object
    m: int

    @property
    def n_targets(self):
        return self.drift.n_targets

    @property
    def input_dim(self):
        return self.drift.input_dim + self.m

    def predict(self, z):
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        z = np.atleast_2d(z)
        q = self.drift.input_dim
        xr, u = z[:, :q], z[:, q:]
        f = np.atleast_2d(self.drift.predict(xr))
        g = np.atleast_2d(self.gain.predict(xr)).reshape(len(z), -1, self.m)
        out = f + np.einsum("tij,tj->ti", g, u)
        return out[0] if single else out


# -- bundles ----------------------------------------------------------------


def save_model(model, directory):
    """Write a model bundle: ``header.json`` plus CSV payloads."""
    os.makedirs(directory, exist_ok=True)
    if isinstance(model, RKHSModel):
        header = {
            "type": "rkhs",
            "kernel": model.kernel.to_dict(),
            "lambda": csvio.fmt(model.lam),
            "bias": model.imap.bias,
            "mean": [csvio.fmt(v) for v in model.imap.mean],
            "std": [csvio.fmt(v) for v in model.imap.std],
        }
        csvio.write_matrix(os.path.join(directory, "inputs.csv"), model.train_inputs, prefix="z")
        csvio.write_matrix(os.path.join(directory, "coefficients.csv"), model.C.T, prefix="y")
    elif isinstance(model, StackedModel):
        header = {"type": "stacked", "parts": len(model.parts)}
        for i, p in enumerate(model.parts):
            save_model(p, os.path.join(directory, f"part{i + 1}"))
    elif isinstance(model, SeparableModel):
        header = {"type": "separable", "m": model.m}
        save_model(model.drift, os.path.join(directory, "drift"))
        save_model(model.gain, os.path.join(directory, "gain"))
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    with open(os.path.join(directory, "header.json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(directory):
    with open(os.path.join(directory, "header.json")) as fh:
        header = json.load(fh)
    kind = header["type"]
    if kind == "stacked":
        return StackedModel(tuple(load_model(os.path.join(directory, f"part{i + 1}"))
                                  for i in range(header["parts"])))
    if kind == "separable":
        return SeparableModel(load_model(os.path.join(directory, "drift")),
                              load_model(os.path.join(directory, "gain")), int(header["m"]))
    imap = InputMap(np.array([float(v) for v in header["mean"]]),
                    np.array([float(v) for v in header["std"]]), bool(header["bias"]))
    Z = csvio.read_matrix(os.path.join(directory, "inputs.csv"))
    C = csvio.read_matrix(os.path.join(directory, "coefficients.csv")).T
    return RKHSModel(KernelSpec.from_dict(header["kernel"]), imap, Z, np.ascontiguousarray(C),
                     float(header["lambda"]))


def write_loocv_curve(path, lams, curve):
    curve = np.atleast_2d(np.asarray(curve, dtype=float))
    header = ["lambda"] + [f"loo_mse{i + 1}" for i in range(curve.shape[1])] + ["total"]
    rows = [[float(l)] + [float(v) for v in row] + [float(row.sum())] for l, row in zip(lams, curve)]
    csvio.write_rows(path, header, rows)
