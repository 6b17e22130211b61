"""Batch experiments: configuration files, Monte Carlo orchestration, outputs.

A configuration is flat ``key = value`` text with dotted section names::

    equation.kind = plaplace
    equation.p = 3
    noise.b1 = 0.5
    ensemble.paths = 128

Per-path work depends only on ``(config, master seed, path index)`` and
results are merged in path-index order, so every output byte is independent
of the worker count.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .field import Grid1D, laplacian_eigs
from .noise import NoiseSpec, derive_seed, refine, sample_increments, standard_normals
from .operators import (
    DiffusionSpec,
    DriftSpec,
    LinearHeat,
    PLaplaceSpec,
    check_hypotheses,
    default_u0,
    rough_u0,
)
from .regularity import (
    ExponentFit,
    fit_exponent,
    ito_identity_check,
    lag_sums,
    mc_aggregate,
    simulate_scalar_sde,
    sobolev_seminorm,
)
from .stepper import SolverDivergence, StepperConfig, Trajectory, simulate_path, write_trajectory_csv

__all__ = [
    "ConfigError",
    "OutputExistsError",
    "ExperimentConfig",
    "RunManifest",
    "parse_config",
    "parse_config_text",
    "validate_config",
    "map_paths",
    "Setup",
    "PathResult",
    "run_paths",
    "run_experiment",
    "emit_outputs",
    "MODES",
]

MODES = ("simulate", "regularity", "hypotheses", "ito", "oracle")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class OutputExistsError(FileExistsError):
    pass


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _words(text):
    return [x.strip() for x in text.split(",") if x.strip()]


# key -> (parser, default)
_SCHEMA = {
    "equation.kind": (str, "heat"),
    "equation.nu": (float, 1.0),
    "equation.p": (float, 2.0),
    "equation.kappa": (float, 0.0),
    "equation.rho": (float, 0.0),
    "equation.u0": (str, "smooth"),
    "noise.modes": (int, 32),
    "noise.gamma": (float, 2.0),
    "noise.b0": (float, 1.0),
    "noise.b1": (float, 0.0),
    "discretization.n_interior": (int, 64),
    "discretization.tau": (float, 2.0**-10),
    "discretization.T": (float, 1.0),
    "solver.method": (str, "kacanov"),
    "solver.tol": (float, 1e-10),
    "solver.max_iter": (int, 200),
    "ensemble.paths": (int, 128),
    "ensemble.seed": (int, 0),
    "analysis.modes": (_words, ["regularity"]),
    "analysis.alphas": (_floats, [0.25, 0.45]),
    "analysis.lags": (_ints, []),
    "analysis.refine": (int, 0),
    "analysis.t0": (float, 0.0),
    "analysis.hypothesis_samples": (int, 10_000),
    "analysis.ito_t": (float, 0.75),
    "analysis.ito_h": (float, 0.25),
    "analysis.ito_levels": (_ints, [8, 9, 10, 11, 12]),
    "output.dir": (str, "results"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def n_steps(self) -> int:
        return int(round(self["discretization.T"] / self["discretization.tau"]))

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        vals = dict(self.values)
        vals.update(dotted)
        return validate_config(vals)

    def to_text(self) -> str:
        lines = []
        for key in _SCHEMA:
            v = self.values[key]
            if isinstance(v, list):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def validate_config(raw: dict) -> ExperimentConfig:
    """Fill defaults and check every rule; all problems are reported at once."""
    problems = []
    vals = {}
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        problems.append("unknown keys: " + ", ".join(unknown))
    for key, (parse, default) in _SCHEMA.items():
        if key not in raw:
            vals[key] = list(default) if isinstance(default, list) else default
            continue
        v = raw[key]
        try:
            vals[key] = parse(v) if isinstance(v, str) else (list(v) if isinstance(default, list) else type(default)(v))
        except (TypeError, ValueError):
            problems.append(f"{key}: cannot parse {v!r}")
            vals[key] = default

    kind = vals["equation.kind"]
    if kind not in ("heat", "plaplace"):
        problems.append(f"equation.kind must be 'heat' or 'plaplace', got {kind!r}")
    if vals["equation.nu"] <= 0:
        problems.append("equation.nu must be positive")
    p, kappa = vals["equation.p"], vals["equation.kappa"]
    if p <= 1:
        problems.append("equation.p must exceed 1")
    if kappa < 0:
        problems.append("equation.kappa must be >= 0")
    if kind == "plaplace" and p < 2 and kappa <= 0:
        problems.append("rule p<2 => kappa>0 violated: equation.p < 2 requires equation.kappa > 0")
    if vals["equation.rho"] < 0:
        problems.append("equation.rho must be >= 0")
    if vals["equation.u0"] not in ("smooth", "rough", "zero"):
        problems.append("equation.u0 must be one of smooth, rough, zero")
    n = vals["discretization.n_interior"]
    if n < 1:
        problems.append("discretization.n_interior must be >= 1")
    if not 1 <= vals["noise.modes"] <= max(n, 1):
        problems.append("noise.modes must lie in [1, n_interior]")
    if vals["noise.gamma"] < 0:
        problems.append("noise.gamma must be >= 0")
    if vals["noise.b0"] < 0 or vals["noise.b1"] < 0:
        problems.append("noise.b0 and noise.b1 must be >= 0")
    tau, T = vals["discretization.tau"], vals["discretization.T"]
    if tau <= 0 or T <= 0:
        problems.append("discretization.tau and discretization.T must be positive")
    else:
        N = T / tau
        if abs(N - round(N)) > 1e-9 * N or round(N) < 1:
            problems.append(f"rule T = N*tau violated: T/tau = {N!r} is not an integer")
    if vals["solver.method"] not in ("kacanov", "newton"):
        problems.append("solver.method must be 'kacanov' or 'newton'")
    if not 0 < vals["solver.tol"] < 1:
        problems.append("solver.tol must lie in (0, 1)")
    if vals["solver.max_iter"] < 1:
        problems.append("solver.max_iter must be >= 1")
    if vals["ensemble.paths"] < 2:
        problems.append("ensemble.paths must be >= 2")
    bad_modes = [m for m in vals["analysis.modes"] if m not in MODES]
    if bad_modes:
        problems.append("unrecognised analysis.modes: " + ", ".join(bad_modes))
    if any(not 0 < a < 1 for a in vals["analysis.alphas"]):
        problems.append("analysis.alphas entries must lie in (0, 1)")
    if any(m < 1 for m in vals["analysis.lags"]):
        problems.append("analysis.lags entries must be >= 1")
    if vals["analysis.refine"] < 0:
        problems.append("analysis.refine must be >= 0")
    if not 0 <= vals["analysis.t0"] < T:
        problems.append("analysis.t0 must lie in [0, T)")
    if vals["analysis.hypothesis_samples"] < 1:
        problems.append("analysis.hypothesis_samples must be >= 1")
    if not 0 < vals["analysis.ito_h"] <= vals["analysis.ito_t"] <= T:
        problems.append("need 0 < analysis.ito_h <= analysis.ito_t <= T")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(vals)


def parse_config_text(text: str) -> ExperimentConfig:
    raw = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key}")
        raw[key] = value
    try:
        cfg = validate_config(raw)
    except ConfigError as exc:
        raise ConfigError(problems + exc.problems) from None
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file {path} does not exist"])
    return parse_config_text(path.read_text())


# -- per-path work -----------------------------------------------------------

class Setup:
    """Objects derived from a config, rebuilt identically in every worker."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = Grid1D(cfg["discretization.n_interior"])
        self.basis = laplacian_eigs(self.grid)
        self.noise = NoiseSpec(cfg["noise.modes"], cfg["noise.gamma"], self.basis)
        if cfg["equation.kind"] == "heat":
            kind = LinearHeat(cfg["equation.nu"])
        else:
            kind = PLaplaceSpec(cfg["equation.p"], cfg["equation.kappa"])
        self.drift = DriftSpec(kind, rho=cfg["equation.rho"])
        b0, b1 = cfg["noise.b0"], cfg["noise.b1"]
        self.diffusion = DiffusionSpec(b0, b1, self.noise, deterministic=(b0 + b1 == 0))
        self.tau = cfg["discretization.tau"]
        self.n_steps = cfg.n_steps
        self.seed = cfg["ensemble.seed"]

    def stepper(self, level: int = 0) -> StepperConfig:
        return StepperConfig(
            tau=self.tau / 2**level,
            n_steps=self.n_steps * 2**level,
            solver=self.cfg["solver.method"],
            tol=self.cfg["solver.tol"],
            max_iter=self.cfg["solver.max_iter"],
        )

    def u0(self, index: int):
        mode = self.cfg["equation.u0"]
        if mode == "smooth":
            return default_u0(self.grid, self.basis)
        if mode == "rough":
            return rough_u0(self.grid, derive_seed(self.seed, index, 0, 1), self.basis)
        from .field import NodeField

        return NodeField.zeros(self.grid)

    def increments(self, index: int, level: int = 0):
        inc = sample_increments(self.noise, self.n_steps, self.tau, derive_seed(self.seed, index))
        for j in range(1, level + 1):
            inc = refine(inc, derive_seed(self.seed, index, j))
        return inc

    def lags(self, level: int = 0) -> list[int]:
        lags = self.cfg["analysis.lags"]
        if not lags:
            from .regularity import default_lags

            lags = default_lags(self.n_steps, self.tau)
        return [m * 2**level for m in lags]


@dataclass
class PathResult:
    index: int
    error: str | None = None
    dq: dict = field(default_factory=dict)  # (level, lag) -> per-path D value
    seminorm: dict = field(default_factory=dict)  # (level, alpha) -> value
    trajectory: Trajectory | None = None


def _trim(traj: Trajectory, t0: float) -> Trajectory:
    if t0 <= 0:
        return traj
    k = int(math.ceil(t0 / traj.tau - 1e-9))
    return Trajectory(
        traj.times[k:] - traj.times[k], traj.g[k:], traj.g_weight, traj.u_norms[k:], {},
        traj.iterations[k:], traj.residuals[k:],
    )


def _path_statistics(traj: Trajectory, lags, alphas, level, res: PathResult):
    tau = traj.tau
    N = traj.n_steps
    g = traj.g
    for m in lags:
        if m >= N:
            continue
        d = g[m:N] - g[: N - m]
        res.dq[(level, m // 2**level)] = tau * traj.g_weight * float(np.sum(d * d)) / (m * tau)
    if alphas:
        s = lag_sums(traj)
        mm = np.arange(1, s.size)
        for a in alphas:
            res.seminorm[(level, a)] = float(2.0 * tau**2 * np.sum(s[1:] / (mm * tau) ** (1.0 + 2.0 * a)))


def run_paths(cfg: ExperimentConfig, indices, keep_trajectories: bool = False, levels=None) -> list[PathResult]:
    """Simulate the given path indices (at each refinement level) and reduce them."""
    setup = Setup(cfg)
    levels = range(cfg["analysis.refine"] + 1) if levels is None else levels
    alphas = cfg["analysis.alphas"]
    t0 = cfg["analysis.t0"]
    out = []
    for j in indices:
        res = PathResult(int(j))
        try:
            u0 = setup.u0(j)
            for level in levels:
                inc = setup.increments(j, level)
                traj = simulate_path(u0, setup.drift, setup.diffusion, inc, setup.stepper(level), setup.basis)
                if keep_trajectories and level == 0:
                    res.trajectory = traj
                _path_statistics(_trim(traj, t0), setup.lags(level), alphas, level, res)
        except SolverDivergence as exc:
            res.error = str(exc)
            res.dq.clear()
            res.seminorm.clear()
        out.append(res)
    return out


def _chunks(n, workers):
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [list(range(bounds[i], bounds[i + 1])) for i in range(workers)]


def _run_chunk(args):
    cfg_values, indices, keep = args
    return run_paths(ExperimentConfig(cfg_values), indices, keep)


def map_paths(cfg: ExperimentConfig, workers: int = 1, keep_trajectories: bool = False) -> list[PathResult]:
    n = cfg["ensemble.paths"]
    chunks = _chunks(n, workers)
    if len(chunks) == 1:
        return run_paths(cfg, chunks[0], keep_trajectories)
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = pool.map(_run_chunk, [(cfg.values, c, keep_trajectories) for c in chunks])
        return [r for part in parts for r in part]


# -- outputs -----------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")
    return buf.getvalue().encode()


def _plot(xname, yname, xs, ys) -> bytes:
    lines = [f"# {xname} {yname}"] + [f"{_num(x)} {_num(y)}" for x, y in zip(xs, ys)]
    return ("\n".join(lines) + "\n").encode()


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    version: str
    files: list
    failures: list = field(default_factory=list)
    timestamp: str | None = None
    status: int = 0

    def to_json(self) -> bytes:
        return _json(
            {
                "config": self.config,
                "config_hash": self.config_hash,
                "version": self.version,
                "timestamp": self.timestamp,
                "files": self.files,
                "failures": self.failures,
            }
        )


def regularity_outputs(cfg: ExperimentConfig, results: list[PathResult]) -> dict:
    ok = [r for r in results if r.error is None]
    setup = Setup(cfg)
    files = {}
    M = len(ok)
    if M < 2:
        return files
    tau = setup.tau
    rows = []
    lag_list = [m for m in setup.lags(0) if m < setup.n_steps]
    for m in lag_list:
        mean, ci = mc_aggregate([r.dq[(0, m)] for r in ok])
        rows.append((m * tau, mean, ci, M, tau))
    files["diff_quotient.csv"] = _csv(["h", "D", "ci_half", "M", "tau"], rows)
    files["plot_diff_quotient.dat"] = _plot("h", "D", [r[0] for r in rows], [r[1] for r in rows])
    fit = None
    if len(rows) >= 3:
        h = np.array([r[0] for r in rows])
        D = np.array([r[1] for r in rows])
        fit = fit_exponent(h, h * D)
        files["exponent_fit.csv"] = _csv(
            ["beta", "intercept", "r2", "h_min", "h_max"], [(fit.beta, fit.intercept, fit.r2, fit.h_min, fit.h_max)]
        )
    srows = []
    for level in range(cfg["analysis.refine"] + 1):
        for a in cfg["analysis.alphas"]:
            mean, ci = mc_aggregate([r.seminorm[(level, a)] for r in ok])
            srows.append((a, mean, ci, M, tau / 2**level, setup.n_steps * 2**level))
    files["seminorm.csv"] = _csv(["alpha", "value", "ci_half", "M", "tau", "N"], srows)
    base = [r for r in srows if r[4] == tau]
    files["plot_seminorm.dat"] = _plot("alpha", "seminorm", [r[0] for r in base], [r[1] for r in base])
    return files


def hypothesis_outputs(cfg: ExperimentConfig) -> dict:
    setup = Setup(cfg)
    u0 = setup.u0(0)
    rep = check_hypotheses(
        setup.drift, setup.diffusion, cfg["analysis.hypothesis_samples"], derive_seed(setup.seed, 0, 0, 2),
        u0=u0, T=cfg["discretization.T"],
    )
    payload = json.loads(rep.to_json())
    payload["passed"] = rep.passed
    payload["dual_norm"] = "exact spectral" if setup.drift.is_linear else "flux L^{p'} upper bound"
    return {"hypotheses.json": _json(payload)}


def ito_paths(cfg: ExperimentConfig, index: int):
    """Mean-|residual| contributions of one OU path at every refinement level."""
    setup = Setup(cfg)
    levels = sorted(cfg["analysis.ito_levels"])
    T = cfg["discretization.T"]
    coarse = 2 ** levels[0]
    n0 = int(round(T * coarse))
    inc = sample_increments(1, n0, 1.0 / coarse, derive_seed(setup.seed, index, 0, 3))
    out = []
    for k, lev in enumerate(levels):
        if k:
            for j in range(levels[k - 1], lev):
                inc = refine(inc, derive_seed(setup.seed, index, j + 1, 3))
        path = simulate_scalar_sde(inc.increments[:, 0], inc.tau, u0=0.0, theta=1.0)
        led = ito_identity_check(path, cfg["analysis.ito_t"], cfg["analysis.ito_h"])
        out.append(abs(led.residual))
    return out


def _ito_chunk(args):
    cfg_values, indices = args
    cfg = ExperimentConfig(cfg_values)
    return [ito_paths(cfg, j) for j in indices]


def ito_outputs(cfg: ExperimentConfig, workers: int = 1) -> dict:
    M = cfg["ensemble.paths"]
    chunks = _chunks(M, workers)
    if len(chunks) == 1:
        per_path = _ito_chunk((cfg.values, chunks[0]))
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            per_path = [r for part in pool.map(_ito_chunk, [(cfg.values, c) for c in chunks]) for r in part]
    levels = sorted(cfg["analysis.ito_levels"])
    rows = []
    for k, lev in enumerate(levels):
        mean, _ = mc_aggregate([p[k] for p in per_path])
        rows.append((2.0**-lev, cfg["analysis.ito_t"], cfg["analysis.ito_h"], mean, M))
    files = {"ito.csv": _csv(["tau", "t", "h", "mean_abs_residual", "paths"], rows)}
    files["plot_ito.dat"] = _plot("tau", "mean_abs_residual", [r[0] for r in rows], [r[3] for r in rows])
    return files


def oracle_outputs(cfg: ExperimentConfig) -> dict:
    """Brownian and linear-path self-tests of the estimators against closed forms."""
    M = cfg["ensemble.paths"]
    tau = cfg["discretization.tau"]
    N = cfg.n_steps
    T = N * tau
    seed = cfg["ensemble.seed"]
    alpha = 0.25
    trajs = []
    for j in range(M):
        dW = np.sqrt(tau) * standard_normals(derive_seed(seed, j, 0, 4), N)
        trajs.append(Trajectory.from_samples(np.concatenate(([0.0], np.cumsum(dW))), tau))
    checks = []

    def record(name, value, expected, rtol):
        rel = abs(value - expected) / abs(expected)
        checks.append({"name": name, "value": value, "expected": expected, "rtol": rtol,
                       "rel_error": rel, "passed": bool(rel <= rtol)})

    sem = mc_aggregate([sobolev_seminorm(tr, alpha) for tr in trajs])[0]
    record("brownian_seminorm_alpha_0.25", sem, 2 * T ** (2 - 2 * alpha) / ((1 - 2 * alpha) * (2 - 2 * alpha)), 0.10)
    for m in [m for m in (N // 64, N // 32, N // 16) if m >= 1]:
        h = m * tau
        d = mc_aggregate([tau * float(np.sum((tr.g[m:N] - tr.g[: N - m]) ** 2)) / h for tr in trajs])[0]
        record(f"brownian_diff_quotient_h_{h!r}", d, T - h, 0.05)
    line = Trajectory.from_samples(np.arange(N + 1) * tau, tau)
    record("linear_path_seminorm_alpha_0.25", sobolev_seminorm(line, alpha),
           2 * T ** (3 - 2 * alpha) / ((2 - 2 * alpha) * (3 - 2 * alpha)), 0.03)
    return {"oracle.json": _json({"checks": checks, "passed": all(c["passed"] for c in checks), "paths": M})}


def simulate_outputs(cfg: ExperimentConfig, results: list[PathResult]) -> dict:
    files = {}
    for r in results:
        if r.trajectory is None:
            continue
        buf = io.StringIO()
        write_trajectory_csv(r.trajectory, buf)
        files[f"trajectory_{r.index:05d}.csv"] = buf.getvalue().encode()
    return files


def emit_outputs(files: dict, out_dir, overwrite: bool = False, manifest: RunManifest | None = None) -> list[str]:
    """Write ``files`` (name -> bytes) and then the manifest; refuse to clobber."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    names = sorted(files) + ["manifest.json"]
    clash = [n for n in names if (out / n).exists()]
    if clash and not overwrite:
        raise OutputExistsError(f"refusing to overwrite {', '.join(clash)} in {out} (use --overwrite)")
    entries = []
    for name in sorted(files):
        data = files[name]
        (out / name).write_bytes(data)
        entries.append({"name": name, "sha256": hashlib.sha256(data).hexdigest()})
    if manifest is not None:
        manifest.files = entries
        (out / "manifest.json").write_bytes(manifest.to_json())
    return names


def run_experiment(cfg: ExperimentConfig, worker_count: int = 1, modes=None, overwrite: bool = False,
                   out_dir=None) -> RunManifest:
    """Run the requested modes and write outputs plus ``manifest.json`` (last)."""
    modes = list(cfg["analysis.modes"] if modes is None else modes)
    out_dir = cfg["output.dir"] if out_dir is None else out_dir
    files = {}
    failures = []
    status = 0
    if "simulate" in modes or "regularity" in modes:
        results = map_paths(cfg, worker_count, keep_trajectories="simulate" in modes)
        failures = [{"path": r.index, "error": r.error} for r in results if r.error]
        if len(failures) > 0.01 * len(results):
            status = 2
        if "simulate" in modes:
            files.update(simulate_outputs(cfg, results))
        if "regularity" in modes:
            files.update(regularity_outputs(cfg, results))
    if "hypotheses" in modes:
        files.update(hypothesis_outputs(cfg))
    if "ito" in modes:
        files.update(ito_outputs(cfg, worker_count))
    if "oracle" in modes:
        files.update(oracle_outputs(cfg))
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    manifest = RunManifest(
        config=cfg.values, config_hash=cfg.digest(), version=__version__, files=[], failures=failures,
        timestamp=stamp, status=status,
    )
    emit_outputs(files, out_dir, overwrite, manifest)
    return manifest
