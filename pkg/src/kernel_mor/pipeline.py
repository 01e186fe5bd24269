"""Stage orchestration, artifact layout and the run manifest.

Every stage records a digest of the configuration it depends on, chained
with the digest of its upstream stage, plus a SHA-256 of each artifact it
wrote. A downstream stage refuses to run on missing, stale or modified
upstream artifacts.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os

import numpy as np

from . import csvio, svg
from .balancing import (auto_gap, balance_dataset, gap_ratios, load_reduction, save_reduction, truncate,
                        write_hankel_values)
from .config import AUTO_GAP, PipelineConfig
from .errors import ConfigError, DimensionMismatchError, KernelMORError, MissingArtifactError, StaleArtifactError
from .gramians import (collect, empirical_gramians, export_dataset, import_dataset, linear_balance,
                       lyapunov_hankel_values)
from .numerics import ToleranceConfig
from .reduced import KERNEL_PROPERTY, KernelPropertyJacobian, ReducedSystem, compare, simulate_reduced
from .rkhs import (RegressionDataset, SeparableModel, fit_loocv, fit_per_coordinate, load_model, save_model,
                   write_loocv_curve)
from .systems import PolynomialSystem, integrate

MANIFEST = "MANIFEST.json"
STAGES = ("simulate", "gramians", "balance", "learn", "reduce", "evaluate")
UPSTREAM = {"simulate": None, "gramians": None, "balance": "gramians", "learn": "balance",
            "reduce": "learn", "evaluate": "reduce"}
AFFINE_RTOL = 1e-9


def _sha(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _file_sha(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _grid_part(section):
    return {k: section.get(k) for k in ("t_final", "samples", "substeps")}


def stage_inputs(cfg: PipelineConfig, stage):
    """Configuration fragment each stage depends on (upstream digests are chained separately)."""
    r = cfg.raw
    return {
        "simulate": {"system": r["system"], "evaluation": r["evaluation"], "seed": cfg.seed},
        "gramians": {"system": r["system"], "grid": _grid_part(r["gramian"])},
        "balance": {"kernel": r["gramian"]["kernel"], "tolerances": r.get("tolerances", {}),
                    "reduction": r["reduction"]},
        "learn": {"dynamics": r["dynamics"], "output_map": r["output_map"], "seed": cfg.seed},
        "reduce": {"jacobian": r.get("jacobian", {}), "x0": r["evaluation"].get("x0")},
        "evaluate": {"evaluation": r["evaluation"], "seed": cfg.seed},
    }[stage]


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


class Workspace:
    """An output directory with a manifest of completed stages."""

    def __init__(self, cfg: PipelineConfig, out_dir=None):
        self.cfg = cfg
        self.root = out_dir or cfg.output_dir
        os.makedirs(self.root, exist_ok=True)
        self.manifest_path = os.path.join(self.root, MANIFEST)
        self.manifest = _read_json(self.manifest_path) if os.path.exists(self.manifest_path) else {"stages": {}}

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def digest(self, stage):
        up = UPSTREAM[stage]
        return _sha({"inputs": stage_inputs(self.cfg, stage), "upstream": self.digest(up) if up else None})

    def _save_manifest(self):
        self.manifest["config_digest"] = self.cfg.digest()
        _write_json(self.manifest_path, self.manifest)

    def _artifact_files(self, artifacts):
        files = []
        for a in artifacts:
            p = self.path(a)
            if os.path.isdir(p):
                for dirpath, _, names in sorted(os.walk(p)):
                    files += [os.path.relpath(os.path.join(dirpath, n), self.root) for n in sorted(names)]
            else:
                files.append(a)
        return files

    def record(self, stage, artifacts, status="complete", error=None, digest=None):
        entry = {"status": status, "digest": digest or self.digest(stage),
                 "finished_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
        if status == "complete":
            entry["artifacts"] = {f: _file_sha(self.path(f)) for f in self._artifact_files(artifacts)}
        if error:
            entry["error"] = error
        self.manifest["stages"][stage] = entry
        self._save_manifest()

    def require(self, stage):
        """Check that ``stage`` completed for the current configuration and is unmodified."""
        entry = self.manifest["stages"].get(stage)
        if entry is None or entry.get("status") != "complete":
            raise MissingArtifactError(self.path(STAGE_MAIN_ARTIFACT[stage]), stage)
        if entry["digest"] != self.digest(stage):
            raise StaleArtifactError(stage, f"artifacts of stage '{stage}' in {self.root} were produced with a "
                                            f"different configuration; rerun '{stage}'")
        for f, sha in entry["artifacts"].items():
            p = self.path(f)
            if not os.path.exists(p):
                raise MissingArtifactError(p, stage)
            if _file_sha(p) != sha:
                raise StaleArtifactError(stage, f"{p} was modified after stage '{stage}' wrote it; rerun '{stage}'")

    def is_current(self, stage):
        try:
            self.require(stage)
            return True
        except (MissingArtifactError, StaleArtifactError):
            return False


STAGE_MAIN_ARTIFACT = {
    "simulate": "trajectory.csv",
    "gramians": "gramian_dataset.csv",
    "balance": "reduction",
    "learn": "f_model",
    "reduce": "reduced.json",
    "evaluate": "comparison.csv",
}


def _run_stage(ws: Workspace, stage, fn):
    try:
        artifacts = fn()
    except KernelMORError as exc:
        ws.record(stage, [], status="failed", error=str(exc))
        raise
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        ws.record(stage, [], status="failed", error=str(exc))
        raise StageError(stage, exc) from exc
    ws.record(stage, artifacts)
    return artifacts


class StageError(KernelMORError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


# -- trajectories -----------------------------------------------------------


def write_trajectory(path, traj):
    m, n, p = traj.inputs.shape[1], traj.states.shape[1], traj.outputs.shape[1]
    header = (["t"] + [f"u{j + 1}" for j in range(m)] + [f"x{k + 1}" for k in range(n)]
              + [f"y{j + 1}" for j in range(p)])
    rows = np.hstack([traj.times[:, None], traj.inputs, traj.states, traj.outputs])
    csvio.write_rows(path, header, rows.tolist())


# -- stages -----------------------------------------------------------------


def stage_simulate(ws: Workspace):
    cfg = ws.cfg

    def body():
        traj = integrate(cfg.system, cfg.x0, [cfg.eval_signal] * cfg.system.m if cfg.system.m > 1 else cfg.eval_signal,
                         cfg.eval_grid, run="evaluation")
        write_trajectory(ws.path("trajectory.csv"), traj)
        return ["trajectory.csv"]

    return _run_stage(ws, "simulate", body)


def stage_gramians(ws: Workspace, import_path=None, export_path=None):
    cfg = ws.cfg

    def body():
        if import_path:
            ds = import_dataset(import_path)
            sys = cfg.system
            if (ds.n, ds.m, ds.p) != (sys.n, sys.m, sys.p):
                raise DimensionMismatchError(f"imported dataset has (n, m, p) = {(ds.n, ds.m, ds.p)}, "
                                             f"system has {(sys.n, sys.m, sys.p)}")
            if ds.grid != cfg.gramian_grid:
                raise ConfigError("gramian", f"imported dataset grid {ds.grid.to_dict()} differs from the configured grid")
        else:
            ds = collect(cfg.system, cfg.gramian_grid, workers=cfg.workers)
        export_dataset(ds, ws.path("gramian_dataset.csv"))
        if export_path:
            export_dataset(ds, export_path)
        return ["gramian_dataset.csv"]

    return _run_stage(ws, "gramians", body)


def choose_order(cfg: PipelineConfig, sigma):
    if cfg.order == AUTO_GAP:
        return auto_gap(sigma)
    if cfg.order > sigma.size:
        raise ConfigError("reduction.order", f"q={cfg.order} exceeds the numerical rank {sigma.size}")
    return int(cfg.order)


def stage_balance(ws: Workspace):
    cfg = ws.cfg
    ws.require("gramians")

    def body():
        ds = import_dataset(ws.path("gramian_dataset.csv"))
        res, fmap = balance_dataset(ds, cfg.gramian_kernel, cfg.tol)
        q = choose_order(cfg, res.sigma)
        br = truncate(res, fmap, q, ds.ctrl_scale, cfg.tol)
        artifacts = ["hankel_values.csv", "hankel_spectrum.svg", "reduction", "balance.json"]
        write_hankel_values(ws.path("hankel_values.csv"), res.sigma)
        svg.hankel_spectrum(ws.path("hankel_spectrum.svg"), res.sigma)
        save_reduction(br, ws.path("reduction"))
        summary = {"rank": int(res.rank), "q": q, "order_rule": cfg.order if cfg.order == AUTO_GAP else "fixed",
                   "gap_ratios": [float(r) for r in gap_ratios(res.sigma)],
                   "sigma_ratio_1_3": float(res.sigma[0] / res.sigma[2]) if res.rank >= 3 else None}
        mats = cfg.system.linear_matrices() if isinstance(cfg.system, PolynomialSystem) else None
        if mats is not None:
            F, G, H = mats
            _, moore = linear_balance(empirical_gramians(ds), ToleranceConfig(cfg.tol.pinv_rtol, cfg.tol.psd_clip, 0.0))
            write_hankel_values(ws.path("moore_hankel_values.csv"), moore)
            artifacts.append("moore_hankel_values.csv")
            k = min(res.rank, moore.size)
            summary["kernel_vs_moore_max_rel"] = float(np.max(np.abs(res.sigma[:k] - moore[:k]) / moore[:k]))
            if np.all(np.linalg.eigvals(F).real < 0):
                lyap = lyapunov_hankel_values(F, G, H)
                write_hankel_values(ws.path("lyapunov_hankel_values.csv"), lyap)
                artifacts.append("lyapunov_hankel_values.csv")
                summary["moore_vs_lyapunov_max_rel"] = float(np.max(np.abs(moore - lyap) / lyap))
        _write_json(ws.path("balance.json"), summary)
        return artifacts

    return _run_stage(ws, "balance", body)


def _training_run(cfg, stage):
    sig = stage.signal if cfg.system.m == 1 else [stage.signal] * cfg.system.m
    return integrate(cfg.system, np.zeros(cfg.system.n), sig, stage.grid, run="training")


def _affine_targets(sys, states, inputs):
    """Drift ``f(x, 0)`` and gains ``f(x, e_i) - f(x, 0)`` after checking input-affinity."""
    m = sys.m
    F0 = np.array([sys.rhs(x, np.zeros(m)) for x in states])
    gains, scale = [], np.max(np.abs(F0)) + 1.0
    for i in range(m):
        e = np.eye(m)[i]
        F1 = np.array([sys.rhs(x, e) for x in states])
        F2 = np.array([sys.rhs(x, 2 * e) for x in states])
        if np.max(np.abs(F2 - 2 * F1 + F0)) > AFFINE_RTOL * (scale + np.max(np.abs(F2))):
            raise ConfigError("dynamics.mode", "separable mode needs dynamics that are affine in the input")
        gains.append(F1 - F0)
    return F0, np.stack(gains, axis=2).reshape(len(states), -1)


def stage_learn(ws: Workspace):
    cfg = ws.cfg
    ws.require("balance")

    def body():
        br = load_reduction(ws.path("reduction"))
        sys = cfg.system
        dyn, out = cfg.dynamics, cfg.output_map
        artifacts = ["f_model", "h_model", "learn.json"]
        summary = {}

        tr = _training_run(cfg, dyn)
        P = br.reduce(tr.states)
        if dyn.mode == "separable":
            F0, Gm = _affine_targets(sys, tr.states, tr.inputs)
            drift, c0 = fit_loocv(RegressionDataset(P, F0, dyn.bias, dyn.standardize), dyn.kernel, dyn.lambdas)
            gain, c1 = fit_loocv(RegressionDataset(P, Gm, dyn.bias, dyn.standardize), dyn.kernel, dyn.lambdas)
            f_model = SeparableModel(drift, gain, sys.m)
            write_loocv_curve(ws.path("loocv_f_drift.csv"), dyn.lambdas, c0)
            write_loocv_curve(ws.path("loocv_f_gain.csv"), dyn.lambdas, c1)
            artifacts += ["loocv_f_drift.csv", "loocv_f_gain.csv"]
            summary["f_lambda"] = {"drift": drift.lam, "gain": gain.lam}
        else:
            Z = np.hstack([P, tr.inputs])
            F = np.array([sys.rhs(x, u) for x, u in zip(tr.states, tr.inputs)])
            ds = RegressionDataset(Z, F, dyn.bias, dyn.standardize)
            if dyn.coordinate_kernels:
                f_model, curve = fit_per_coordinate(ds, dyn.coordinate_kernels, dyn.lambdas)
                summary["f_lambda"] = [p.lam for p in f_model.parts]
            else:
                f_model, curve = fit_loocv(ds, dyn.kernel, dyn.lambdas)
                summary["f_lambda"] = f_model.lam
            write_loocv_curve(ws.path("loocv_f.csv"), dyn.lambdas, curve)
            artifacts.append("loocv_f.csv")
        save_model(f_model, ws.path("f_model"))

        th = _training_run(cfg, out)
        ds = RegressionDataset(br.reduce(th.states), th.outputs, out.bias, out.standardize)
        if out.coordinate_kernels:
            h_model, curve = fit_per_coordinate(ds, out.coordinate_kernels, out.lambdas)
            summary["h_lambda"] = [p.lam for p in h_model.parts]
        else:
            h_model, curve = fit_loocv(ds, out.kernel, out.lambdas)
            summary["h_lambda"] = h_model.lam
            if h_model.kernel.family == "gaussian":
                summary["h_gamma"] = h_model.kernel.gamma
        write_loocv_curve(ws.path("loocv_h.csv"), out.lambdas, curve)
        artifacts.append("loocv_h.csv")
        save_model(h_model, ws.path("h_model"))
        _write_json(ws.path("learn.json"), summary)
        return artifacts

    return _run_stage(ws, "learn", body)


def load_reduced_system(ws: Workspace) -> ReducedSystem:
    br = load_reduction(ws.path("reduction"))
    return ReducedSystem(br, load_model(ws.path("f_model")), load_model(ws.path("h_model")),
                         ws.cfg.jacobian, ws.cfg.system.m)


def stage_reduce(ws: Workspace):
    cfg = ws.cfg
    ws.require("learn")

    def body():
        rs = load_reduced_system(ws)
        br = rs.br
        x_r0 = br.reduce(cfg.x0)
        info = {"q": br.q, "x_r0": [float(v) for v in x_r0], "jacobian": cfg.jacobian.to_dict()}
        if cfg.jacobian.variant == KERNEL_PROPERTY:
            kp = KernelPropertyJacobian(br)
            info["metric"] = kp.metric.tolist()
        else:
            exp = rs.initial_expansion(cfg.x0)
            info["expansion_point"] = exp.a.tolist()
            info["expansion_image"] = exp.pi_a.tolist()
        info["metric_identity_deviation"] = br.metric_identity_deviation()
        _write_json(ws.path("reduced.json"), info)
        return ["reduced.json"]

    return _run_stage(ws, "reduce", body)


def stage_evaluate(ws: Workspace):
    cfg = ws.cfg
    ws.require("reduce")

    def body():
        rs = load_reduced_system(ws)
        info = _read_json(ws.path("reduced.json"))
        sys = cfg.system
        sig = cfg.eval_signal if sys.m == 1 else [cfg.eval_signal] * sys.m
        full = integrate(sys, cfg.x0, sig, cfg.eval_grid, run="evaluation")
        red = simulate_reduced(rs, np.array(info["x_r0"]), sig, cfg.eval_grid, x0=cfg.x0)
        p = full.outputs.shape[1]
        header = (["t"] + [f"u{j + 1}" for j in range(sys.m)] + [f"y{j + 1}" for j in range(p)]
                  + [f"y_hat{j + 1}" for j in range(p)])
        rows = np.hstack([full.times[:, None], full.inputs, full.outputs, red.outputs])
        csvio.write_rows(ws.path("comparison.csv"), header, rows.tolist())
        metrics = compare(full.outputs, red.outputs)
        metrics["samples"] = int(cfg.eval_grid.n_samples)
        _write_json(ws.path("metrics.json"), metrics)
        series = []
        for j in range(p):
            series += [(f"y{j + 1}", full.outputs[:, j]), (f"y_hat{j + 1}", red.outputs[:, j])]
        svg.line_plot(ws.path("output_comparison.svg"), full.times, series, "Output: full vs reduced", ylabel="y")
        return ["comparison.csv", "metrics.json", "output_comparison.svg"]

    return _run_stage(ws, "evaluate", body)


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> Workspace:
    """Run every stage from data collection to evaluation."""
    ws = Workspace(cfg, out_dir)
    stage_gramians(ws)
    stage_balance(ws)
    stage_learn(ws)
    stage_reduce(ws)
    stage_evaluate(ws)
    return ws
