"""Time-regularity estimators for G(u) along simulated trajectories.

* :func:`diff_quotient` -- ``D(h) = (1/h) E int_0^{T-h} ||G(s+h) - G(s)||^2 ds``;
  boundedness of D as h -> 0 is what yields W^{alpha,2} regularity for every
  alpha < 1/2.
* :func:`sobolev_seminorm` -- the Sobolev-Slobodeckij double sum.
* :func:`fit_exponent` -- log-log slope of mean squared increments.
* :func:`ito_identity_check` -- discrete ledger of the time-difference Ito
  formula for scalar paths (forward integral, backward integral, quadratic
  variation).
* :func:`mc_aggregate` -- Monte Carlo mean with a normal 95% half-width.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .stepper import Trajectory

__all__ = [
    "DiffQuotientCurve",
    "SeminormEstimate",
    "ExponentFit",
    "ItoLedger",
    "ScalarPath",
    "lag_sums",
    "diff_quotient",
    "diff_quotient_curve",
    "sobolev_seminorm",
    "seminorm_estimate",
    "fit_exponent",
    "implied_alpha",
    "theorem_consistent",
    "default_lags",
    "mc_aggregate",
    "simulate_scalar_sde",
    "ito_identity_check",
]

Z95 = 1.96


@dataclass(frozen=True)
class DiffQuotientCurve:
    lags: np.ndarray
    h: np.ndarray
    D: np.ndarray
    ci: np.ndarray
    paths: int
    tau: float

    def mean_squared_increments(self) -> np.ndarray:
        """``h * D(h)``, i.e. ``E int ||G(s+h) - G(s)||^2 ds``."""
        return self.h * self.D


@dataclass(frozen=True)
class SeminormEstimate:
    alpha: float
    value: float
    ci: float
    paths: int
    tau: float
    n_steps: int


@dataclass(frozen=True)
class ExponentFit:
    beta: float
    intercept: float
    r2: float
    h_min: float
    h_max: float
    n_points: int


@dataclass(frozen=True)
class ItoLedger:
    lhs: float
    initial: float
    forward: float
    backward: float
    quadratic_variation: float
    residual: float

    @property
    def rhs(self) -> float:
        return self.initial + self.forward - self.backward + self.quadratic_variation


# -- aggregation -------------------------------------------------------------

def mc_aggregate(values, index=None):
    """Mean and ``1.96 * sd / sqrt(M)`` of per-path scalars.

    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    the order of ``values``; ``index`` (path indices) is only used to sort.
    """
    vals = np.asarray(values, dtype=float).ravel()
    if index is not None:
        vals = vals[np.argsort(np.asarray(index), kind="stable")]
    m = vals.size
    if m < 2:
        raise ValueError("need at least 2 values for a confidence interval")
    mean = math.fsum(vals) / m
    var = math.fsum((vals - mean) ** 2) / (m - 1)
    return mean, Z95 * math.sqrt(var) / math.sqrt(m)


# -- increments --------------------------------------------------------------

def _increment_sum(traj: Trajectory, m: int) -> float:
    """``sum_{n=0}^{N-m-1} ||G_{n+m} - G_n||^2`` (norm weights included)."""
    g = traj.g
    N = g.shape[0] - 1
    d = g[m:N] - g[: N - m]
    return traj.g_weight * float(np.sum(d * d))


def lag_sums(traj: Trajectory) -> np.ndarray:
    """``S[m] = sum_{n=0}^{N-m} ||G_{n+m} - G_n||^2`` for m = 0..N (all pairs).

    Uses FFT autocorrelation of the snapshots shifted by G_0, which keeps the
    result exactly zero for constant paths.
    """
    x = traj.g - traj.g[0]
    n = x.shape[0]
    sq = np.sum(x * x, axis=1)
    csum = np.concatenate(([0.0], np.cumsum(sq)))
    m = np.arange(n)
    # sum_{i=m}^{n-1} sq[i] + sum_{i=0}^{n-1-m} sq[i]
    energy = (csum[n] - csum[m]) + csum[n - m]
    nfft = sp_fft.next_fast_len(2 * n)
    f = sp_fft.rfft(x, nfft, axis=0)
    corr = sp_fft.irfft(np.sum(f * np.conj(f), axis=1).real, nfft)[:n]
    s = energy - 2.0 * corr
    s[0] = 0.0
    np.maximum(s, 0.0, out=s)
    return traj.g_weight * s


def diff_quotient(trajs, m: int):
    """``(h, D(h), CI half-width)`` at lag ``h = m * tau`` across paths."""
    trajs = list(trajs)
    if len(trajs) < 2:
        raise ValueError("need at least 2 paths for a confidence interval")
    N = trajs[0].n_steps
    tau = trajs[0].tau
    if not 1 <= m < N:
        raise ValueError(f"lag must satisfy 1 <= m < N={N}, got {m}")
    h = m * tau
    per_path = [tau * _increment_sum(tr, m) / h for tr in trajs]
    mean, ci = mc_aggregate(per_path)
    return h, mean, ci


def default_lags(n_steps: int, tau: float, T: float | None = None) -> list[int]:
    """Dyadic lags with ``4 tau <= h <= T/4``."""
    T = n_steps * tau if T is None else T
    lags = []
    m = 4
    while m * tau <= T / 4 * (1 + 1e-12) and m < n_steps:
        lags.append(m)
        m *= 2
    return lags


def diff_quotient_curve(trajs, lags=None) -> DiffQuotientCurve:
    trajs = list(trajs)
    tau = trajs[0].tau
    if lags is None:
        lags = default_lags(trajs[0].n_steps, tau)
    lags = sorted(int(m) for m in lags)
    rows = [diff_quotient(trajs, m) for m in lags]
    h, D, ci = (np.array(c) for c in zip(*rows))
    return DiffQuotientCurve(np.array(lags), h, D, ci, len(trajs), tau)


# -- fractional seminorm -----------------------------------------------------

def sobolev_seminorm(traj: Trajectory, alpha: float) -> float:
    """``tau^2 sum_{i != j} ||G_i - G_j||^2 / |t_i - t_j|^(1 + 2 alpha)``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    s = lag_sums(traj)
    tau = traj.tau
    m = np.arange(1, s.size)
    return float(2.0 * tau**2 * np.sum(s[1:] / (m * tau) ** (1.0 + 2.0 * alpha)))


def seminorm_estimate(trajs, alpha: float, stress: bool = False) -> SeminormEstimate:
    """Monte Carlo mean of the seminorm; ``alpha >= 1/2`` needs ``stress=True``."""
    if alpha >= 0.5 and not stress:
        raise ValueError("alpha >= 1/2 lies outside the regularity range; pass stress=True")
    trajs = list(trajs)
    vals = [sobolev_seminorm(tr, alpha) for tr in trajs]
    mean, ci = mc_aggregate(vals)
    return SeminormEstimate(alpha, mean, ci, len(trajs), trajs[0].tau, trajs[0].n_steps)


# -- exponent fit ------------------------------------------------------------

def fit_exponent(h, y) -> ExponentFit:
    """Least-squares line through ``(log h, log y)``; nonpositive y are dropped."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (y > 0) & (h > 0)
    if not np.all(keep):
        warnings.warn(f"dropping {np.count_nonzero(~keep)} nonpositive points from the fit", RuntimeWarning, stacklevel=2)
    h, y = h[keep], y[keep]
    if h.size < 3:
        raise ValueError(f"need at least 3 positive points, got {h.size}")
    x, z = np.log(h), np.log(y)
    beta, intercept = np.polyfit(x, z, 1)
    pred = beta * x + intercept
    ss_res = float(np.sum((z - pred) ** 2))
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(beta), float(intercept), r2, float(h.min()), float(h.max()), int(h.size))


def implied_alpha(fit: ExponentFit) -> float:
    """Squared increments of order h^beta give W^{alpha,2} for alpha < beta/2."""
    return fit.beta / 2.0


def theorem_consistent(fit: ExponentFit, alphas) -> dict:
    a_star = implied_alpha(fit)
    return {float(a): a_star >= a for a in alphas}


# -- time-difference Ito identity ---------------------------------------------

@dataclass(frozen=True)
class ScalarPath:
    """Scalar path with its increments split into drift and martingale parts."""

    tau: float
    u: np.ndarray
    drift_incr: np.ndarray
    mart_incr: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.u.shape[0] - 1


def simulate_scalar_sde(dW, tau: float, u0: float = 0.0, theta: float = 1.0, sigma: float = 1.0) -> ScalarPath:
    """Euler-Maruyama for ``du = -theta u dt + sigma dW`` (theta = 0: Brownian)."""
    dW = np.asarray(dW, dtype=float).ravel()
    n = dW.size
    u = np.empty(n + 1)
    drift = np.empty(n)
    u[0] = u0
    mart = sigma * dW
    x = float(u0)
    for i in range(n):
        a = -theta * x * tau
        drift[i] = a
        x = x + a + mart[i]
        u[i + 1] = x
    return ScalarPath(tau, u, drift, mart)


def ito_identity_check(path: ScalarPath, t: float, h: float) -> ItoLedger:
    """Evaluate both sides of the time-difference Ito formula on the grid.

    With ``t = j tau`` and ``h = m tau``: the forward integral uses
    left-endpoint integrands over steps in ``[h, t]``, the backward integral
    right-endpoint integrands over steps in ``[0, t - h]``, and the quadratic
    variation up to ``s`` sums squared martingale increments of the steps
    ending at or before ``s``.
    """
    tau = path.tau
    j = t / tau
    m = h / tau
    if abs(j - round(j)) > 1e-9 * max(1.0, j) or abs(m - round(m)) > 1e-9 * max(1.0, m):
        raise ValueError("t and h must be multiples of tau")
    j, m = int(round(j)), int(round(m))
    if not 0 < m <= j <= path.n_steps:
        raise ValueError("need 0 < h <= t <= T")
    u = path.u
    du = np.diff(u)
    lhs = (u[j] - u[j - m]) ** 2
    initial = (u[m] - u[0]) ** 2
    n_f = np.arange(m, j)
    forward = 2.0 * math.fsum((u[n_f] - u[n_f - m]) * du[n_f])
    n_b = np.arange(0, j - m)
    backward = 2.0 * math.fsum((u[n_b + 1 + m] - u[n_b + 1]) * du[n_b])
    qv = np.concatenate(([0.0], np.cumsum(path.mart_incr**2)))
    qv_term = qv[j] - qv[m] - qv[j - m]
    residual = lhs - (initial + forward - backward + qv_term)
    return ItoLedger(lhs, initial, forward, backward, qv_term, residual)
