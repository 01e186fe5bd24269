"""Control systems, input signals and fixed-step simulation.

Systems have the form ``x' = f(x, u)``, ``y = h(x)``. Trajectories are
sampled on the regular partition ``t_i = (t_final / N) * i``, ``i = 1..N``,
with classical RK4 substeps of width ``h`` between samples. The input is
sampled at the start of each substep and held over it, which makes a
one-substep rectangular pulse integrate to exactly one unit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import backend
from .errors import ConfigError, DimensionMismatchError, IntegrationDivergedError

# ---------------------------------------------------------------------------
# Signals
# ---------------------------------------------------------------------------

_SNAP = 1e-12


def square_wave(theta):
    """``sign(sin(theta))`` with ``sign(0) := +1``.

    Multiples of pi (up to floating-point rounding of the phase) map to +1,
    so the wave is +1 exactly at its switching instants.
    """
    theta = np.asarray(theta, dtype=float)
    cycles = theta / math.pi
    on_edge = np.abs(cycles - np.round(cycles)) < _SNAP * np.maximum(1.0, np.abs(cycles))
    return np.where(on_edge | (np.sin(theta) >= 0.0), 1.0, -1.0)


class Signal:
    """Scalar input signal, evaluated elementwise on arrays of times."""

    kind = "signal"

    def __call__(self, t):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Signal):
    kind = "zero"

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def to_dict(self):
        return {"type": "zero"}


@dataclass(frozen=True)
class Impulse(Signal):
    """Rectangular pulse of height ``1 / width`` on ``[0, width)``."""

    width: float
    kind = "impulse"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("impulse width must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0.0) & (t < self.width), 1.0 / self.width, 0.0)

    def to_dict(self):
        return {"type": "impulse", "width": self.width}


@dataclass(frozen=True)
class Square(Signal):
    freq: float
    amplitude: float = 1.0
    phase: float = 0.0
    kind = "square"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * square_wave(2.0 * math.pi * self.freq * t + self.phase)

    def to_dict(self):
        return {"type": "square", "freq": self.freq, "amplitude": self.amplitude, "phase": self.phase}


@dataclass(frozen=True)
class Sine(Signal):
    freq: float
    amplitude: float = 1.0
    phase: float = 0.0
    kind = "sine"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.sin(2.0 * math.pi * self.freq * t + self.phase)

    def to_dict(self):
        return {"type": "sine", "freq": self.freq, "amplitude": self.amplitude, "phase": self.phase}


@dataclass(frozen=True)
class Sum(Signal):
    terms: tuple
    kind = "sum"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for s in self.terms:
            out = out + s(t)
        return out

    def to_dict(self):
        return {"type": "sum", "terms": [s.to_dict() for s in self.terms]}


@dataclass(frozen=True)
class Scaled(Signal):
    signal: Signal
    factor: float
    kind = "scaled"

    def __call__(self, t):
        return self.factor * self.signal(t)

    def to_dict(self):
        return {"type": "scaled", "factor": self.factor, "signal": self.signal.to_dict()}


@dataclass(frozen=True)
class UniformRandom(Signal):
    """Piecewise-constant uniform noise, redrawn every ``hold`` seconds.

    The value on ``[k * hold, (k + 1) * hold)`` is a pure function of
    ``(seed, k)``, so evaluation order never matters.
    """

    lo: float
    hi: float
    hold: float
    seed: int = 0
    kind = "random"

    def __post_init__(self):
        if not self.hold > 0:
            raise ValueError("hold interval must be positive")
        if self.hi < self.lo:
            raise ValueError("random signal needs lo <= hi")

    def _draw(self, k):
        rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), int(k)]))
        return rng.uniform(self.lo, self.hi)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.floor(t / self.hold).astype(np.int64)
        uniq, inv = np.unique(idx, return_inverse=True)
        vals = np.array([self._draw(k) for k in uniq])
        return vals[inv].reshape(t.shape)

    def to_dict(self):
        return {"type": "random", "lo": self.lo, "hi": self.hi, "hold": self.hold, "seed": self.seed}


def eval_signal(u: Signal, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("signals are defined for t >= 0 only")
    out = u(t_arr)
    return float(out) if np.ndim(t) == 0 else out


_SIGNAL_KEYS = {
    "zero": set(),
    "impulse": {"width"},
    "square": {"freq", "amplitude", "phase"},
    "sine": {"freq", "amplitude", "phase"},
    "sum": {"terms"},
    "scaled": {"factor", "signal"},
    "random": {"lo", "hi", "hold", "seed"},
}


def signal_from_dict(d, default_seed=0, where="signal") -> Signal:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(where, "signal must be an object with a 'type' key")
    kind = d["type"]
    if kind not in _SIGNAL_KEYS:
        raise ConfigError(f"{where}.type", f"unknown signal type {kind!r}")
    extra = set(d) - _SIGNAL_KEYS[kind] - {"type"}
    if extra:
        raise ConfigError(where, f"unknown keys {sorted(extra)}")
    try:
        if kind == "zero":
            return Zero()
        if kind == "impulse":
            return Impulse(float(d["width"]))
        if kind in ("square", "sine"):
            cls = Square if kind == "square" else Sine
            return cls(float(d["freq"]), float(d.get("amplitude", 1.0)), float(d.get("phase", 0.0)))
        if kind == "sum":
            return Sum(tuple(signal_from_dict(s, default_seed, f"{where}.terms[{i}]")
                             for i, s in enumerate(d["terms"])))
        if kind == "scaled":
            return Scaled(signal_from_dict(d["signal"], default_seed, f"{where}.signal"), float(d["factor"]))
        return UniformRandom(float(d["lo"]), float(d["hi"]), float(d["hold"]),
                             int(d.get("seed", default_seed)))
    except KeyError as exc:
        raise ConfigError(where, f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None


# ---------------------------------------------------------------------------
# Time grid and trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Regular sampling grid with RK4 substep ``step``.

    ``step`` must divide the sample spacing ``t_final / n_samples``.
    """

    t_final: float
    n_samples: int
    step: float

    def __post_init__(self):
        if not (self.t_final > 0 and math.isfinite(self.t_final)):
            raise ValueError("t_final must be positive and finite")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError("n_samples must be a positive integer")
        if not self.step > 0:
            raise ValueError("step must be positive")
        ratio = self.sample_spacing / self.step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError(
                f"step {self.step!r} does not divide the sample spacing {self.sample_spacing!r}"
            )

    @classmethod
    def with_substeps(cls, t_final, n_samples, substeps=1):
        return cls(float(t_final), int(n_samples), float(t_final) / (int(n_samples) * int(substeps)))

    @property
    def sample_spacing(self):
        return self.t_final / self.n_samples

    @property
    def substeps(self):
        return int(round(self.sample_spacing / self.step))

    @property
    def n_steps(self):
        return self.n_samples * self.substeps

    @property
    def h(self):
        """Exact substep width implied by the grid."""
        return self.t_final / self.n_steps

    def sample_times(self):
        return self.t_final * np.arange(1, self.n_samples + 1) / self.n_samples

    def substep_times(self):
        return self.t_final * np.arange(self.n_steps) / self.n_steps

    def hold_times(self):
        """Substep midpoints, where inputs are sampled and held for the whole substep."""
        return self.t_final * (np.arange(self.n_steps) + 0.5) / self.n_steps

    def to_dict(self):
        return {"t_final": self.t_final, "samples": self.n_samples, "substeps": self.substeps}


@dataclass(frozen=True)
class Trajectory:
    """Sampled run. Rows are samples: ``states[i]`` is ``x(t_i)``."""

    grid: TimeGrid
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlSystem:
    n: int
    m: int
    p: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    name: str = "system"

    def rhs(self, x, u):
        return np.asarray(self.f(np.asarray(x, dtype=float), np.asarray(u, dtype=float)), dtype=float)

    def output(self, x):
        return np.asarray(self.h(np.asarray(x, dtype=float)), dtype=float).reshape(self.p)

    def outputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.output(x) for x in X]).reshape(len(X), self.p)


@dataclass(frozen=True)
class Monomial:
    """``coef * prod(x**state_exps) * prod(u**input_exps)``."""

    coef: float
    state_exps: tuple
    input_exps: tuple = ()


def _terms_to_arrays(equations, n, m):
    coef, target, sexp, uexp = [], [], [], []
    for i, eq in enumerate(equations):
        for term in eq:
            se = tuple(term.state_exps) or (0,) * n
            ue = tuple(term.input_exps) or (0,) * m
            if len(se) != n or len(ue) != m:
                raise DimensionMismatchError(
                    f"monomial exponent lengths ({len(se)}, {len(ue)}) do not match (n={n}, m={m})"
                )
            if any(int(e) != e or e < 0 for e in se + ue):
                raise ValueError("monomial exponents must be nonnegative integers")
            coef.append(float(term.coef))
            target.append(i)
            sexp.append(se)
            uexp.append(ue)
    return (
        np.array(coef, dtype=float),
        np.array(target, dtype=np.intp),
        np.array(sexp, dtype=np.intc).reshape(len(coef), n),
        np.array(uexp, dtype=np.intc).reshape(len(coef), m),
    )


class PolynomialSystem(ControlSystem):
    """System whose ``f`` and ``h`` are sums of monomials.

    ``dynamics[i]`` lists the monomials of ``f_i``; ``output[j]`` those of
    ``h_j`` (input exponents of output terms must be zero). Simulation runs
    through the compiled RK4 kernel when available.
    """

    def __init__(self, n, m, p, dynamics, output, name="polynomial"):
        if len(dynamics) != n:
            raise DimensionMismatchError(f"need {n} dynamics equations, got {len(dynamics)}")
        if len(output) != p:
            raise DimensionMismatchError(f"need {p} output equations, got {len(output)}")
        dyn = _terms_to_arrays(dynamics, n, m)
        out = _terms_to_arrays(output, n, m)
        if np.any(out[3]):
            raise ValueError("output monomials cannot depend on the input")
        object.__setattr__(self, "_dyn", dyn)
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "dynamics", tuple(tuple(eq) for eq in dynamics))
        object.__setattr__(self, "output_terms", tuple(tuple(eq) for eq in output))
        super().__init__(n, m, p, self._f, self._h, name)

    def _f(self, x, u):
        c, t, se, ue = self._dyn
        return _pyk_rhs(np.asarray(x, float), np.asarray(u, float).reshape(self.m), c, t, se, ue, self.n)

    def _h(self, x):
        return self.outputs(np.asarray(x, float)[None, :])[0]

    def outputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c, t, se, _ = self._out
        vals = c[None, :] * np.prod(X[:, None, :] ** se[None, :, :].astype(float), axis=2)
        Y = np.zeros((len(X), self.p))
        for j in range(self.p):
            Y[:, j] = vals[:, t == j].sum(axis=1)
        return Y

    def output(self, x):
        return self.outputs(np.asarray(x, float)[None, :])[0]

    @property
    def term_arrays(self):
        return self._dyn

    def linear_matrices(self):
        """``(F, G, H)`` if every monomial has total degree one, else ``None``."""
        c, t, se, ue = self._dyn
        oc, ot, ose, _ = self._out
        if np.any(se.sum(1) + ue.sum(1) != 1) or np.any(ose.sum(1) != 1):
            return None
        F = np.zeros((self.n, self.n))
        G = np.zeros((self.n, self.m))
        H = np.zeros((self.p, self.n))
        for coef, i, s, u in zip(c, t, se, ue):
            if s.any():
                F[i, int(np.argmax(s))] += coef
            else:
                G[i, int(np.argmax(u))] += coef
        for coef, j, s in zip(oc, ot, ose):
            H[j, int(np.argmax(s))] += coef
        return F, G, H

    def to_dict(self):
        def enc(eqs, with_u):
            return [
                [
                    {"coef": t.coef, "x": list(map(int, t.state_exps or (0,) * self.n)),
                     **({"u": list(map(int, t.input_exps or (0,) * self.m))} if with_u else {})}
                    for t in eq
                ]
                for eq in eqs
            ]

        return {"n": self.n, "m": self.m, "p": self.p,
                "dynamics": enc(self.dynamics, True), "output": enc(self.output_terms, False)}


def _pyk_rhs(x, u, c, t, se, ue, n):
    from ._pykernels import _poly_rhs

    return _poly_rhs(x, u, c, t, se.astype(float), ue.astype(float), n)


def lti_system(F, G, H, name="lti"):
    """``x' = F x + G u``, ``y = H x`` as a :class:`PolynomialSystem`."""
    F, G, H = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (F, G, H))
    n, m, p = F.shape[0], G.shape[1], H.shape[0]
    if F.shape != (n, n) or G.shape[0] != n or H.shape[1] != n:
        raise DimensionMismatchError("inconsistent LTI matrix shapes")
    eye_n, eye_m = np.eye(n, dtype=int), np.eye(m, dtype=int)
    dyn = []
    for i in range(n):
        eq = [Monomial(F[i, j], tuple(eye_n[j]), (0,) * m) for j in range(n) if F[i, j] != 0]
        eq += [Monomial(G[i, j], (0,) * n, tuple(eye_m[j])) for j in range(m) if G[i, j] != 0]
        dyn.append(eq)
    out = [[Monomial(H[j, k], tuple(eye_n[k]), (0,) * m) for k in range(n) if H[j, k] != 0]
           for j in range(p)]
    return PolynomialSystem(n, m, p, dyn, out, name=name)


def _mono(n, m, coef, *states, u=0):
    se = [0] * n
    for s in states:
        se[s - 1] += 1
    ue = [0] * m
    if u:
        ue[0] = u
    return Monomial(float(coef), tuple(se), tuple(ue))


def benchmark_7d() -> PolynomialSystem:
    """Seven-state, single-input single-output cubic benchmark."""
    t = lambda c, *s, u=0: _mono(7, 1, c, *s, u=u)  # noqa: E731
    dynamics = [
        [t(-1, 1, 1, 1), t(1, u=1)],
        [t(-1, 2, 2, 2), t(-1, 1, 1, 2), t(3, 1, 2, 2), t(-1, u=1)],
        [t(-1, 3, 3, 3), t(1, 5), t(1, u=1)],
        [t(-1, 4, 4, 4), t(1, 1), t(-1, 2), t(1, 3), t(2, u=1)],
        [t(1, 1, 2, 3), t(-1, 5, 5, 5), t(1, u=1)],
        [t(1, 5), t(-1, 6, 6, 6), t(-1, 5, 5, 5), t(2, u=1)],
        [t(-2, 6, 6, 6), t(2, 5), t(-1, 7), t(-1, 5, 5, 5), t(4, u=1)],
    ]
    output = [[t(1, 1), t(-1, 2, 2), t(1, 3), t(1, 4, 3), t(1, 5), t(-2, 6), t(2, 7)]]
    return PolynomialSystem(7, 1, 1, dynamics, output, name="benchmark_7d")


_REGISTRY: dict = {}


def register_system(name, factory):
    """Register a benchmark after checking ``f(0, 0) = 0`` and ``h(0) = 0``."""
    sys = factory()
    if np.any(sys.rhs(np.zeros(sys.n), np.zeros(sys.m)) != 0) or np.any(sys.output(np.zeros(sys.n)) != 0):
        raise ValueError(f"system {name!r} does not have an equilibrium at the origin")
    _REGISTRY[name] = factory


def get_system(name) -> ControlSystem:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; registered: {sorted(_REGISTRY)}") from None


def registered_systems():
    return sorted(_REGISTRY)


register_system("benchmark_7d", benchmark_7d)


def system_from_dict(d, where="system") -> ControlSystem:
    """Build a system from its config form.

    Accepts a registered name, ``{"polynomial": {...}}`` with monomial
    lists, or ``{"lti": {"F": ..., "G": ..., "H": ...}}``.
    """
    if isinstance(d, str):
        try:
            return get_system(d)
        except KeyError as exc:
            raise ConfigError(where, str(exc.args[0])) from None
    if not isinstance(d, dict) or len(d) != 1:
        raise ConfigError(where, "expected a registered name or one of {'polynomial', 'lti'}")
    (kind, body), = d.items()
    try:
        if kind == "lti":
            extra = set(body) - {"F", "G", "H"}
            if extra:
                raise ConfigError(f"{where}.lti", f"unknown keys {sorted(extra)}")
            return lti_system(body["F"], body["G"], body["H"])
        if kind == "polynomial":
            extra = set(body) - {"n", "m", "p", "dynamics", "output", "name"}
            if extra:
                raise ConfigError(f"{where}.polynomial", f"unknown keys {sorted(extra)}")
            n, m, p = int(body["n"]), int(body["m"]), int(body["p"])

            def dec(eqs, with_u):
                out = []
                for eq in eqs:
                    row = []
                    for term in eq:
                        unknown = set(term) - {"coef", "x", "u"}
                        if unknown:
                            raise ConfigError(f"{where}.polynomial", f"unknown monomial keys {sorted(unknown)}")
                        u = term.get("u", [0] * m) if with_u else [0] * m
                        if isinstance(u, int):
                            u = [u]
                        row.append(Monomial(float(term["coef"]), tuple(term.get("x", [0] * n)), tuple(u)))
                    out.append(row)
                return out

            return PolynomialSystem(n, m, p, dec(body["dynamics"], True), dec(body["output"], False),
                                    name=body.get("name", "polynomial"))
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"{where}.{kind}", f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{kind}", str(exc)) from None
    raise ConfigError(where, f"unknown system kind {kind!r}")


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _signal_vector(u, m) -> list:
    if u is None:
        signals = [Zero()] * m
    elif isinstance(u, Signal):
        signals = [u]
    else:
        signals = list(u)
    if len(signals) != m:
        raise DimensionMismatchError(f"system has {m} inputs but {len(signals)} signals were given")
    return signals


def _rk4_generic(sys: ControlSystem, x0, U, h, record_every):
    x = x0.copy()
    nsteps = U.shape[0]
    out = np.empty((nsteps // record_every, sys.n))
    half = 0.5 * h
    for k in range(nsteps):
        u = U[k]
        k1 = sys.rhs(x, u)
        k2 = sys.rhs(x + half * k1, u)
        k3 = sys.rhs(x + half * k2, u)
        k4 = sys.rhs(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return out, k
        if (k + 1) % record_every == 0:
            out[(k + 1) // record_every - 1] = x
    return out, -1


def integrate(sys: ControlSystem, x0, u, grid: TimeGrid, run=None) -> Trajectory:
    """Simulate ``sys`` from ``x0`` under input ``u`` and sample on ``grid``.

    ``u`` is a :class:`Signal` for single-input systems, a sequence of
    ``m`` signals, or ``None`` for zero input.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise DimensionMismatchError(f"x0 has {x0.size} entries, system has n={sys.n}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    signals = _signal_vector(u, sys.m)
    tk = grid.hold_times()
    U = np.column_stack([s(tk) for s in signals]) if sys.m else np.zeros((len(tk), 0))
    h = grid.h
    if isinstance(sys, PolynomialSystem):
        c, t, se, ue = sys.term_arrays
        states, fail = backend.rk4_polynomial(c, t, se, ue, x0, U, h, grid.substeps)
    else:
        states, fail = _rk4_generic(sys, x0, U, h, grid.substeps)
    if fail >= 0:
        raise IntegrationDivergedError(grid.t_final * (fail + 1) / grid.n_steps, run=run)
    times = grid.sample_times()
    inputs = np.column_stack([s(times) for s in signals]) if sys.m else np.zeros((len(times), 0))
    return Trajectory(grid, times, np.asarray(states), sys.outputs(states), inputs)


def impulse_response(sys: ControlSystem, channel: int, grid: TimeGrid) -> Trajectory:
    """Response from ``x0 = 0`` to a unit pulse of width ``grid.h`` on input ``channel`` (0-based)."""
    if not 0 <= channel < sys.m:
        raise ValueError(f"channel {channel} out of range for m={sys.m}")
    signals = [Zero()] * sys.m
    signals[channel] = Impulse(grid.h)
    return integrate(sys, np.zeros(sys.n), signals, grid, run=f"impulse[{channel}]")


def observability_response(sys: ControlSystem, coordinate: int, grid: TimeGrid) -> Trajectory:
    """Zero-input response from ``x0 = e_k`` (``coordinate`` is 0-based)."""
    if not 0 <= coordinate < sys.n:
        raise ValueError(f"coordinate {coordinate} out of range for n={sys.n}")
    x0 = np.zeros(sys.n)
    x0[coordinate] = 1.0
    return integrate(sys, x0, None, grid, run=f"initial_condition[{coordinate}]")
