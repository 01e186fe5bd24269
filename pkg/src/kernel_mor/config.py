"""Declarative pipeline configuration (JSON), validated before any computation."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, KernelMORError
from .kernels import KernelSpec
from .numerics import ToleranceConfig
from .reduced import JacobianMode
from .systems import ControlSystem, Signal, TimeGrid, signal_from_dict, system_from_dict

SPEC_VERSION = "1.0"
AUTO_GAP = "auto-gap"
BUNDLED = ("paper_7d", "lti_linear_kernel")

_TOP_KEYS = {"spec_version", "name", "system", "seed", "output_dir", "tolerances", "gramian",
             "reduction", "dynamics", "output_map", "evaluation", "jacobian"}


def _check_keys(d, allowed, where, required=()):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(where, f"unknown keys {sorted(extra)}")
    for k in required:
        if k not in d:
            raise ConfigError(f"{where}.{k}" if where else k, "required key is missing")


def _number(d, key, where, default=None, positive=True, integer=False):
    v = d.get(key, default)
    name = f"{where}.{key}"
    if v is None:
        raise ConfigError(name, "required key is missing")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(name, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(name, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _grid(d, where):
    try:
        return TimeGrid.with_substeps(_number(d, "t_final", where), _number(d, "samples", where, integer=True),
                                      _number(d, "substeps", where, default=1, integer=True))
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def _lambdas(v, where):
    if isinstance(v, dict):
        _check_keys(v, {"log10_min", "log10_max", "count"}, where, required=("log10_min", "log10_max", "count"))
        n = _number(v, "count", where, integer=True)
        lams = np.logspace(float(v["log10_min"]), float(v["log10_max"]), n)
    elif isinstance(v, list) and v:
        lams = np.array([float(x) for x in v])
    else:
        raise ConfigError(where, "expected a nonempty list or a {log10_min, log10_max, count} object")
    if not np.all(np.isfinite(lams)) or np.any(lams <= 0):
        raise ConfigError(where, "all regularization values must be positive")
    return tuple(float(x) for x in lams)


def _kernel(d, where, default=None):
    if "kernel" not in d:
        if default is None:
            raise ConfigError(f"{where}.kernel", "required key is missing")
        return default
    return KernelSpec.from_dict(d["kernel"], f"{where}.kernel")


def _signal(d, where, seed, required=True):
    if "signal" not in d:
        if required:
            raise ConfigError(f"{where}.signal", "required key is missing")
        return None
    try:
        return signal_from_dict(d["signal"], default_seed=seed, where=f"{where}.signal")
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{where}.signal", str(exc)) from None


@dataclass(frozen=True)
class LearnStage:
    grid: TimeGrid
    signal: Signal
    kernel: KernelSpec
    bias: bool
    standardize: bool
    lambdas: tuple
    mode: str = "joint"
    coordinate_kernels: tuple | None = None


@dataclass(frozen=True)
class PipelineConfig:
    raw: dict
    system: ControlSystem
    seed: int
    output_dir: str
    tol: ToleranceConfig
    gramian_grid: TimeGrid
    gramian_kernel: KernelSpec
    workers: int
    order: object
    dynamics: LearnStage
    output_map: LearnStage
    eval_grid: TimeGrid
    eval_signal: Signal
    x0: np.ndarray = field(repr=False)
    jacobian: JacobianMode = JacobianMode()

    @property
    def name(self):
        return self.raw.get("name", "run")

    def digest(self, *sections):
        """SHA-256 of the canonical JSON of the given top-level sections (all if none)."""
        keys = sections or tuple(sorted(self.raw))
        sub = {k: self.raw.get(k) for k in keys}
        blob = json.dumps(sub, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_eval_signal(self, signal_dict):
        raw = copy.deepcopy(self.raw)
        raw["evaluation"]["signal"] = signal_dict
        return parse_config(raw)


def _learn(d, where, seed, m, default_bias):
    allowed = {"t_final", "samples", "substeps", "signal", "kernel", "bias", "standardize", "lambdas",
               "mode", "coordinate_kernels"}
    _check_keys(d, allowed, where, required=("signal", "kernel", "lambdas"))
    mode = d.get("mode", "joint")
    if mode not in ("joint", "separable"):
        raise ConfigError(f"{where}.mode", f"expected 'joint' or 'separable', got {mode!r}")
    ck = d.get("coordinate_kernels")
    if ck is not None:
        if not isinstance(ck, list) or not ck:
            raise ConfigError(f"{where}.coordinate_kernels", "expected a nonempty list of kernels")
        ck = tuple(KernelSpec.from_dict(k, f"{where}.coordinate_kernels[{i}]") for i, k in enumerate(ck))
        if mode == "separable":
            raise ConfigError(f"{where}.coordinate_kernels", "per-coordinate kernels are only available in joint mode")
    for flag in ("bias", "standardize"):
        if flag in d and not isinstance(d[flag], bool):
            raise ConfigError(f"{where}.{flag}", "expected true or false")
    return LearnStage(_grid(d, where), _signal(d, where, seed), _kernel(d, where),
                      d.get("bias", default_bias), d.get("standardize", False),
                      _lambdas(d["lambdas"], f"{where}.lambdas"), mode, ck)


def parse_config(raw: dict) -> PipelineConfig:
    """Validate a configuration dictionary. Raises :class:`ConfigError` naming the field."""
    raw = copy.deepcopy(raw)
    _check_keys(raw, _TOP_KEYS, "", required=("spec_version",))
    if raw["spec_version"] != SPEC_VERSION:
        raise ConfigError("spec_version", f"unsupported schema version {raw['spec_version']!r} (expected {SPEC_VERSION!r})")
    _check_keys(raw, _TOP_KEYS, "", required=("system", "gramian", "reduction", "dynamics", "output_map", "evaluation"))
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "expected an unsigned 64-bit integer")
    try:
        sys = system_from_dict(raw["system"], "system")
    except ConfigError:
        raise
    except (KernelMORError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError("system", str(exc)) from None
    if sys.m != sys.p:
        raise ConfigError("system", f"kernel balancing needs as many inputs as outputs (m={sys.m}, p={sys.p})")

    tol_d = raw.get("tolerances", {})
    _check_keys(tol_d, {"pinv_rtol", "psd_clip", "jitter"}, "tolerances")
    try:
        tol = ToleranceConfig.from_dict(tol_d)
    except (TypeError, ValueError) as exc:
        raise ConfigError("tolerances", str(exc)) from None

    g = raw["gramian"]
    _check_keys(g, {"t_final", "samples", "substeps", "kernel", "workers"}, "gramian", required=("kernel",))
    gramian_grid = _grid(g, "gramian")
    gramian_kernel = _kernel(g, "gramian")
    workers = _number(g, "workers", "gramian", default=1, integer=True)

    r = raw["reduction"]
    _check_keys(r, {"order"}, "reduction", required=("order",))
    order = r["order"]
    if order != AUTO_GAP and (isinstance(order, bool) or not isinstance(order, int) or order < 1):
        raise ConfigError("reduction.order", f"expected a positive integer or {AUTO_GAP!r}, got {order!r}")

    dyn = _learn(raw["dynamics"], "dynamics", seed, sys.m, True)
    if dyn.coordinate_kernels is not None and len(dyn.coordinate_kernels) != sys.n:
        raise ConfigError("dynamics.coordinate_kernels", f"expected {sys.n} kernels, one per state coordinate")
    out = _learn(raw["output_map"], "output_map", seed, sys.m, True)
    if out.mode != "joint":
        raise ConfigError("output_map.mode", "the output map is always learned jointly")
    if out.coordinate_kernels is not None and len(out.coordinate_kernels) != sys.p:
        raise ConfigError("output_map.coordinate_kernels", f"expected {sys.p} kernels, one per output")

    e = raw["evaluation"]
    _check_keys(e, {"t_final", "samples", "substeps", "signal", "x0"}, "evaluation", required=("signal",))
    eval_grid = _grid(e, "evaluation")
    eval_signal = _signal(e, "evaluation", seed)
    x0 = np.zeros(sys.n) if "x0" not in e else np.asarray(e["x0"], dtype=float)
    if x0.shape != (sys.n,) or not np.all(np.isfinite(x0)):
        raise ConfigError("evaluation.x0", f"expected {sys.n} finite numbers")

    j = raw.get("jacobian", {})
    _check_keys(j, {"variant", "expansion_point", "refresh_every"}, "jacobian")
    try:
        point = j.get("expansion_point", "x0")
        if point != "x0":
            point = np.asarray(point, dtype=float)
            if point.shape != (sys.n,):
                raise ValueError(f"expansion_point must be 'x0' or {sys.n} numbers")
        jm = JacobianMode(j.get("variant", "taylor_inverse"), None if isinstance(point, str) else point,
                          j.get("refresh_every", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError("jacobian", str(exc)) from None
    if jm.variant == "kernel_property" and gramian_kernel.family == "gaussian":
        raise ConfigError("jacobian.variant", "kernel_property needs a polynomial or linear gramian kernel")

    return PipelineConfig(raw, sys, seed, raw.get("output_dir", "kernel_mor_out"), tol, gramian_grid,
                          gramian_kernel, workers, order, dyn, out, eval_grid, eval_signal, x0, jm)


def load_config(path) -> PipelineConfig:
    """Load a config file, or a bundled config by name (``paper_7d``, ``lti_linear_kernel``)."""
    text = None
    name = str(path)
    if name in BUNDLED or name.removesuffix(".json") in BUNDLED:
        text = resources.files("kernel_mor.configs").joinpath(name.removesuffix(".json") + ".json").read_text()
    else:
        try:
            with open(name) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {name}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_config(raw)
