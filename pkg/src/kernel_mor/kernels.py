"""Kernel functions, Gram matrices, empirical feature maps and gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import backend
from .errors import ConfigError, DimensionMismatchError

FAMILIES = ("linear", "polynomial", "gaussian")
GAMMA_RULES = ("inverse_mean", "inverse_mean_square")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and hyperparameters.

    ``polynomial``: ``(offset + <x, y>) ** degree``.
    ``gaussian``: ``exp(-gamma * ||x - y||^2)``. ``gamma`` may be ``None``
    until resolved from data with :func:`resolve_gamma`.
    """

    family: str
    degree: int = 1
    offset: float = 1.0
    gamma: float | None = None
    gamma_rule: str = "inverse_mean"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial degree must be an integer >= 1")
            if self.offset < 0:
                raise ValueError("polynomial offset must be >= 0")
        if self.family == "gaussian" and self.gamma is not None and not self.gamma > 0:
            raise ValueError("gaussian gamma must be positive")
        if self.gamma_rule not in GAMMA_RULES:
            raise ValueError(f"unknown gamma rule {self.gamma_rule!r}")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def polynomial(cls, degree=3, offset=1.0):
        return cls("polynomial", degree=int(degree), offset=float(offset))

    @classmethod
    def gaussian(cls, gamma=None, rule="inverse_mean"):
        return cls("gaussian", gamma=None if gamma is None else float(gamma), gamma_rule=rule)

    @property
    def resolved(self):
        return self.family != "gaussian" or self.gamma is not None

    def _require_resolved(self):
        if not self.resolved:
            raise ValueError("gaussian kernel gamma is 'auto' and has not been resolved from data")

    @property
    def backend_args(self):
        self._require_resolved()
        code = {"linear": backend.LINEAR, "polynomial": backend.POLYNOMIAL,
                "gaussian": backend.GAUSSIAN}[self.family]
        return code, float(self.degree), float(self.offset), float(self.gamma or 0.0)

    def to_dict(self):
        if self.family == "linear":
            return {"family": "linear"}
        if self.family == "polynomial":
            return {"family": "polynomial", "degree": self.degree, "offset": self.offset}
        d = {"family": "gaussian", "gamma": "auto" if self.gamma is None else self.gamma}
        if self.gamma_rule != "inverse_mean":
            d["gamma_rule"] = self.gamma_rule
        return d

    @classmethod
    def from_dict(cls, d, where="kernel"):
        if not isinstance(d, dict) or "family" not in d:
            raise ConfigError(where, "kernel must be an object with a 'family' key")
        allowed = {"linear": {"family"}, "polynomial": {"family", "degree", "offset"},
                   "gaussian": {"family", "gamma", "gamma_rule"}}
        fam = d["family"]
        if fam not in allowed:
            raise ConfigError(f"{where}.family", f"unknown kernel family {fam!r}")
        extra = set(d) - allowed[fam]
        if extra:
            raise ConfigError(where, f"unknown keys {sorted(extra)}")
        try:
            if fam == "linear":
                return cls.linear()
            if fam == "polynomial":
                return cls.polynomial(d.get("degree", 3), d.get("offset", 1.0))
            gamma = d.get("gamma", "auto")
            return cls.gaussian(None if gamma == "auto" else gamma, d.get("gamma_rule", "inverse_mean"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(where, str(exc)) from None


def mean_pairwise_distance(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) < 2:
        raise ValueError("need at least two points for a pairwise distance")
    return float(pdist(X).mean())


def resolve_gamma(k: KernelSpec, X) -> KernelSpec:
    """Fix an ``auto`` Gaussian scale from training inputs.

    ``inverse_mean`` sets ``gamma = 1 / mean pairwise distance``;
    ``inverse_mean_square`` uses the squared distance instead.
    """
    if k.resolved:
        return k
    d = mean_pairwise_distance(X)
    if d == 0:
        raise ValueError("training inputs coincide; cannot choose a gaussian scale")
    gamma = 1.0 / d if k.gamma_rule == "inverse_mean" else 1.0 / d**2
    return KernelSpec("gaussian", gamma=gamma, gamma_rule=k.gamma_rule)


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatchError(f"kernel arguments have shapes {x.shape} and {y.shape}")
    return x, y


def eval_kernel(k: KernelSpec, x, y) -> float:
    x, y = _pair(x, y)
    k._require_resolved()
    if k.family == "linear":
        return float(x @ y)
    if k.family == "polynomial":
        return float((k.offset + x @ y) ** k.degree)
    d = x - y
    return float(np.exp(-k.gamma * (d @ d)))


def cross_gram(k: KernelSpec, X, Y) -> np.ndarray:
    """``G[i, j] = K(X[i], Y[j])``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(f"point dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    k._require_resolved()
    if k.family == "linear":
        return X @ Y.T
    if k.family == "polynomial":
        return (k.offset + X @ Y.T) ** k.degree
    return np.exp(-k.gamma * cdist(X, Y, "sqeuclidean"))


def gram_matrix(k: KernelSpec, data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise DimensionMismatchError("gram_matrix needs a nonempty 2-D array of points (rows)")
    G = cross_gram(k, data, data)
    return 0.5 * (G + G.T)


def kernel_gradient(k: KernelSpec, x, y) -> np.ndarray:
    """Gradient of ``K(x, y)`` with respect to ``x`` (a length-n row)."""
    x, y = _pair(x, y)
    k._require_resolved()
    if k.family == "linear":
        return y.copy()
    if k.family == "polynomial":
        return k.degree * (k.offset + x @ y) ** (k.degree - 1) * y
    d = x - y
    return -2.0 * k.gamma * np.exp(-k.gamma * (d @ d)) * d


@dataclass(frozen=True, eq=False)
class EmpiricalFeatureMap:
    """``x -> (K(x, s_1), ..., K(x, s_L))`` over fixed, ordered samples."""

    kernel: KernelSpec
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 2:
            raise DimensionMismatchError("samples must be a 2-D array (one sample per row)")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def size(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def __call__(self, x):
        return feature_vector(self, x)

    def jacobian(self, x):
        """``L x n`` Jacobian; row ``l`` is the gradient of ``K(x, s_l)``."""
        x = _check_point(self, x)
        k, Y = self.kernel, self.samples
        k._require_resolved()
        if k.family == "linear":
            return Y.copy()
        if k.family == "polynomial":
            g = k.degree * (k.offset + Y @ x) ** (k.degree - 1)
            return g[:, None] * Y
        d = x - Y
        return (-2.0 * k.gamma * np.exp(-k.gamma * np.einsum("ij,ij->i", d, d)))[:, None] * d

    def weighted(self, x, weights):
        """``(W^T k(x), W^T J_k(x))`` without materializing ``J_k``."""
        x = _check_point(self, x)
        return backend.pi_and_jacobian(x, self.samples, np.ascontiguousarray(weights, dtype=float),
                                       *self.kernel.backend_args)


def _check_point(fm, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != fm.dim:
        raise DimensionMismatchError(f"point has dimension {x.shape[0]}, samples have {fm.dim}")
    return x


def feature_vector(fm: EmpiricalFeatureMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return cross_gram(fm.kernel, x, fm.samples)
    x = _check_point(fm, x)
    return cross_gram(fm.kernel, x[None, :], fm.samples)[0]
