"""Semi-implicit Euler-Maruyama time stepping.

One step solves

    u_{n+1} - tau * A(t_{n+1}, u_{n+1}) = u_n + B(t_n, u_n) dW_n,

which for the p-Laplace family is the stationarity condition of the strictly
convex energy ``J`` below; it is solved by Kacanov (frozen-weight) sweeps or
by a damped Newton method, each iteration being one tridiagonal solve.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .field import Grid1D, NodeField, SpectralBasis, grad_values, laplacian_eigs, solve_weighted
from .noise import WienerIncrements, assemble_noise_fields
from .operators import (
    DiffusionSpec,
    DriftSpec,
    LinearHeat,
    PLaplaceSpec,
    apply_A_values,
    g_values,
    potential,
    s_flux,
    s_flux_derivative,
)

__all__ = [
    "StepperConfig",
    "SolveStats",
    "Trajectory",
    "SolverDivergence",
    "DegenerateWeightError",
    "energy_J",
    "energy_gradient",
    "energy_decrement",
    "solve_implicit",
    "implicit_step",
    "simulate_path",
    "write_trajectory_csv",
]


class SolverDivergence(RuntimeError):
    def __init__(self, message, step=None, stats=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.stats = stats


class DegenerateWeightError(SolverDivergence):
    pass


@dataclass(frozen=True)
class StepperConfig:
    tau: float
    n_steps: int
    solver: str = "kacanov"
    tol: float = 1e-10
    max_iter: int = 200
    u_stride: int = 0  # 0 keeps no u-snapshots beyond u0 and u(T)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.solver not in ("kacanov", "newton"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @property
    def T(self) -> float:
        return self.n_steps * self.tau


@dataclass
class SolveStats:
    iterations: int
    residual: float
    energies: list = field(default_factory=list)
    converged: bool = True
    # J(v^{m+1}) - J(v^m) per iterate, evaluated without cancellation
    decrements: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated path: dense G-snapshots, thinned u-snapshots, solver stats.

    ``g[n]`` holds G(u(t_n)); its squared norm is ``g_weight * sum(g[n]**2)``.
    """

    times: np.ndarray
    g: np.ndarray
    g_weight: float
    u_norms: np.ndarray
    u_snapshots: dict
    iterations: np.ndarray
    residuals: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def g_norms(self) -> np.ndarray:
        return np.sqrt(self.g_weight * np.sum(self.g**2, axis=-1))

    @classmethod
    def from_samples(cls, values, tau: float, weight: float = 1.0):
        """Wrap precomputed snapshots (scalar or vector per time) as a trajectory."""
        g = np.asarray(values, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
        n = g.shape[0]
        norms = np.sqrt(weight * np.sum(g**2, axis=-1))
        return cls(
            times=np.arange(n) * tau,
            g=g,
            g_weight=weight,
            u_norms=norms,
            u_snapshots={},
            iterations=np.zeros(n - 1, dtype=int),
            residuals=np.zeros(n - 1),
        )


# -- energy ------------------------------------------------------------------

def _plaplace(drift: DriftSpec) -> PLaplaceSpec:
    if not isinstance(drift.kind, PLaplaceSpec) or drift.sign != 1:
        raise TypeError("energy_J needs a (monotone) p-Laplace drift")
    return drift.kind


def _energy_values(v, rhs, spec, coef, dx):
    d = v - rhs
    return 0.5 * dx * float(d @ d) + coef * dx * float(np.sum(potential(np.abs(grad_values(v, dx)), spec)))


def energy_J(v: NodeField, rhs: NodeField, drift: DriftSpec, tau: float, t_next: float) -> float:
    """``1/2 ||v - rhs||_H^2 + tau a(t) dx sum_e phi(|grad v|_e)``."""
    spec = _plaplace(drift)
    coef = tau * drift.time_factor(t_next)
    return _energy_values(v.values, rhs.values, spec, coef, v.grid.dx)


def energy_gradient(v: NodeField, rhs: NodeField, drift: DriftSpec, tau: float, t_next: float) -> NodeField:
    """H-Riesz representative of dJ: ``v - rhs - tau A(t, v)``."""
    _plaplace(drift)
    dx = v.grid.dx
    r = v.values - rhs.values - tau * apply_A_values(drift, t_next, v.values, dx)
    return NodeField(v.grid, r)


# -- solvers -----------------------------------------------------------------

def _hnorm(x, dx):
    return math.sqrt(dx * float(x @ x))


def _residual(drift, v, rhs, tau, t, dx):
    return v - rhs - tau * apply_A_values(drift, t, v, dx)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def energy_decrement(v, step, s, rhs, spec: PLaplaceSpec, coef: float, dx: float) -> float:
    """``J(v + s*step) - J(v)`` without forming either energy.

    The quadratic part is expanded algebraically and each narrow edge term
    ``phi(b) - phi(a)`` is the integral of ``phi'`` over ``[a, b]`` (8-point
    Gauss-Legendre, exact for integer ``p`` up to 16). Near convergence the
    decrement is many orders below ``eps * J``, where differencing two
    energies returns noise.
    """
    d = v - rhs
    quad = dx * (s * float(d @ step) + 0.5 * s * s * float(step @ step))
    g = grad_values(v, dx)
    gd = s * grad_values(step, dx)
    a = np.abs(g)
    b = np.abs(g + gd)
    den = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        width = np.where(den > 0, gd * (2.0 * g + gd) / den, 0.0)
    if spec.p == 2:
        pot = width * (a + 0.5 * width)
    else:
        # quadrature on narrow intervals, where the closed form cancels;
        # the closed form on wide ones, where the quadrature loses accuracy
        wide = np.abs(width) > 0.1 * (spec.kappa + np.minimum(a, b))
        r = a + width * _GL_X[:, None]
        pot = width * (_GL_W @ ((spec.kappa + r) ** (spec.p - 2) * r))
        if np.any(wide):
            pot[wide] = potential(b[wide], spec) - potential(a[wide], spec)
    return quad + coef * dx * float(np.sum(pot))


def _solve_values(rhs, drift, tau, t_next, cfg, dx):
    if drift.sign != 1:
        raise ValueError("implicit step needs a monotone (sign = +1) drift")
    coef = tau * drift.time_factor(t_next)
    rhs_norm = _hnorm(rhs, dx)
    res_tol = cfg.tol * (1.0 + rhs_norm)
    kind = drift.kind

    if isinstance(kind, LinearHeat):
        v = solve_weighted(np.full(rhs.size + 1, kind.nu), rhs, coef, dx)
        res = _hnorm(_residual(drift, v, rhs, tau, t_next, dx), dx)
        return v, SolveStats(1, res, [], res <= res_tol)

    v = rhs.copy()
    energies = [_energy_values(v, rhs, kind, coef, dx)]
    decrements = []
    res = _hnorm(_residual(drift, v, rhs, tau, t_next, dx), dx)
    it = 0
    while it < cfg.max_iter and res != 0:
        g = grad_values(v, dx)
        if cfg.solver == "kacanov":
            r = np.abs(g)
            with np.errstate(divide="ignore"):
                w = (kind.kappa + r) ** (kind.p - 2) if kind.p != 2 else np.ones_like(r)
            if not np.all(np.isfinite(w)):
                raise DegenerateWeightError("infinite Kacanov weight (p < 2, kappa = 0, zero gradient)")
            step = solve_weighted(w, rhs, coef, dx) - v
        else:
            grad_J = _residual(drift, v, rhs, tau, t_next, dx)
            hess_w = s_flux_derivative(g, kind)
            if not np.all(np.isfinite(hess_w)):
                raise DegenerateWeightError("infinite Newton weight (p < 2, kappa = 0, zero gradient)")
            step = -solve_weighted(hess_w, grad_J, coef, dx)
        # Both directions are SPD-preconditioned descent directions of J. The
        # Kacanov map has linearised spectrum in [-(p-2), 0] for p > 2, so its
        # step starts relaxed at 2/p; halve until J strictly decreases.
        s = 2.0 / kind.p if (cfg.solver == "kacanov" and kind.p > 2) else 1.0
        while True:
            dJ = energy_decrement(v, step, s, rhs, kind, coef, dx)
            if dJ < 0 or s < 2.0**-30:
                break
            s *= 0.5
        if not dJ < 0:
            break  # no descent left at working precision
        it += 1
        change = s * _hnorm(step, dx)
        v = v + s * step
        decrements.append(dJ)
        energies.append(_energy_values(v, rhs, kind, coef, dx))
        res = _hnorm(_residual(drift, v, rhs, tau, t_next, dx), dx)
        if res <= res_tol and (kind.p == 2 or change <= cfg.tol * (1.0 + _hnorm(v, dx))):
            break
    return v, SolveStats(it, res, energies, res <= res_tol, decrements)


def solve_implicit(rhs: NodeField, drift: DriftSpec, tau: float, t_next: float, cfg: StepperConfig):
    """Solve ``v - tau A(t_next, v) = rhs``; returns ``(v, SolveStats)``.

    Raises :class:`SolverDivergence` if the residual test fails after
    ``cfg.max_iter`` iterations.
    """
    v, stats = _solve_values(rhs.values, drift, tau, t_next, cfg, rhs.grid.dx)
    if not stats.converged:
        raise SolverDivergence(f"residual {stats.residual:.3e} above tolerance after {stats.iterations} iterations", stats=stats)
    return NodeField(rhs.grid, v), stats


def implicit_step(u_n: NodeField, t_next: float, drift: DriftSpec, diffusion: DiffusionSpec,
                  noise_field: NodeField, cfg: StepperConfig) -> NodeField:
    """One semi-implicit step; the noise coefficient is evaluated at ``u_n``."""
    rhs = u_n.values + (diffusion.b0 + diffusion.b1 * u_n.values) * noise_field.values
    v, _ = solve_implicit(NodeField(u_n.grid, rhs), drift, cfg.tau, t_next, cfg)
    return v


def simulate_path(u0: NodeField, drift: DriftSpec, diffusion: DiffusionSpec, inc: WienerIncrements,
                  cfg: StepperConfig, basis: SpectralBasis | None = None) -> Trajectory:
    if inc.n_steps != cfg.n_steps or not math.isclose(inc.tau, cfg.tau, rel_tol=1e-12):
        raise ValueError(
            f"increments (N={inc.n_steps}, tau={inc.tau}) do not match config (N={cfg.n_steps}, tau={cfg.tau})"
        )
    grid: Grid1D = u0.grid
    dx = grid.dx
    basis = basis if basis is not None else diffusion.noise.basis
    N, tau = cfg.n_steps, cfg.tau
    if diffusion.deterministic:
        noise = np.zeros((N, grid.n_interior))
    else:
        noise = assemble_noise_fields(inc, diffusion.noise)

    u = u0.values.copy()
    g0 = g_values(drift, u, dx, basis)
    g = np.empty((N + 1, g0.shape[-1]))
    g[0] = g0
    u_norms = np.empty(N + 1)
    u_norms[0] = _hnorm(u, dx)
    iters = np.empty(N, dtype=int)
    resid = np.empty(N)
    snaps = {0: u.copy()}
    for n in range(N):
        rhs = u + (diffusion.b0 + diffusion.b1 * u) * noise[n]
        t_next = (n + 1) * tau
        u, stats = _solve_values(rhs, drift, tau, t_next, cfg, dx)
        if not stats.converged:
            raise SolverDivergence(
                f"residual {stats.residual:.3e} above tolerance after {stats.iterations} iterations",
                step=n + 1, stats=stats,
            )
        g[n + 1] = g_values(drift, u, dx, basis)
        u_norms[n + 1] = _hnorm(u, dx)
        iters[n] = stats.iterations
        resid[n] = stats.residual
        if cfg.u_stride and (n + 1) % cfg.u_stride == 0:
            snaps[n + 1] = u.copy()
    snaps[N] = u.copy()
    return Trajectory(
        times=np.arange(N + 1) * tau,
        g=g,
        g_weight=dx,
        u_norms=u_norms,
        u_snapshots=snaps,
        iterations=iters,
        residuals=resid,
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns: n, t, ||u||_H, ||G(u)||, solver_iters, residual (step 0 has 0, 0).

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(traj, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(traj, fh)


def _write_rows(traj: Trajectory, fh) -> None:
    gn = traj.g_norms
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "t", "u_norm", "g_norm", "solver_iters", "residual"])
    for n in range(traj.n_steps + 1):
        it = int(traj.iterations[n - 1]) if n else 0
        res = float(traj.residuals[n - 1]) if n else 0.0
        w.writerow([n, repr(float(traj.times[n])), repr(float(traj.u_norms[n])), repr(float(gn[n])), it, repr(res)])
