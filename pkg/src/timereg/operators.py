"""Drift, diffusion and G for the linear heat and p-Laplace families, plus an
empirical auditor for the structural hypotheses (H1)-(H8).

The duality pairing between V' and V is realised as the discrete H inner
product. Dual norms in the auditor are exact for the Hilbert case (spectral)
and, for the p-Laplace family, an upper bound by the flux norm
``||a S(grad u)||_{L^{p'}}`` (``<div s, v> = -<s, grad v> <= ||s||_{p'} ||grad v||_p``).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .field import (
    EdgeField,
    Grid1D,
    GridMismatchError,
    NodeField,
    SpectralBasis,
    div_values,
    grad_values,
    laplacian_eigs,
)
from .noise import NoiseSpec, standard_normals

__all__ = [
    "PLaplaceSpec",
    "LinearHeat",
    "DriftSpec",
    "DiffusionSpec",
    "HypothesisRecord",
    "HypothesisReport",
    "s_flux",
    "s_flux_derivative",
    "f_map",
    "potential",
    "apply_A",
    "apply_B",
    "apply_G",
    "check_f_equivalence",
    "check_hypotheses",
    "default_u0",
    "rough_u0",
]


@dataclass(frozen=True)
class PLaplaceSpec:
    p: float
    kappa: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.p < 2 and self.kappa == 0:
            raise ValueError("p < 2 requires kappa > 0 (flux weight is singular at zero gradient)")

    @property
    def q(self) -> float:
        return self.p


@dataclass(frozen=True)
class LinearHeat:
    nu: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    @property
    def q(self) -> float:
        return 2.0


@dataclass(frozen=True)
class DriftSpec:
    """``A(t, u) = sign * a(t) * div(flux(grad u))`` with ``a(t) = 1 + rho*t``.

    ``sign = -1`` gives the anti-monotone drift used to exercise the auditor.
    """

    kind: Union[LinearHeat, PLaplaceSpec]
    rho: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def time_factor(self, t: float) -> float:
        return 1.0 + self.rho * t

    @property
    def is_linear(self) -> bool:
        return isinstance(self.kind, LinearHeat)

    @property
    def q(self) -> float:
        return self.kind.q


@dataclass(frozen=True)
class DiffusionSpec:
    """``B(t, u) w = (b0 + b1*u) * w`` pointwise, ``w`` an assembled noise field."""

    b0: float
    b1: float
    noise: NoiseSpec
    deterministic: bool = False

    def __post_init__(self):
        if self.b0 < 0 or self.b1 < 0:
            raise ValueError("b0 and b1 must be >= 0")
        if self.b0 + self.b1 == 0 and not self.deterministic:
            raise ValueError("b0 + b1 = 0 needs deterministic=True")

    @property
    def grid(self) -> Grid1D:
        return self.noise.grid


# -- scalar maps -------------------------------------------------------------

def s_flux(xi, spec: PLaplaceSpec):
    """``(kappa + |xi|)^(p-2) xi``."""
    xi = np.asarray(xi, dtype=float)
    if spec.p == 2:
        return xi * 1.0
    return (spec.kappa + np.abs(xi)) ** (spec.p - 2) * xi


def s_flux_derivative(xi, spec: PLaplaceSpec):
    """``(kappa + r)^(p-3) (kappa + (p-1) r)`` with ``r = |xi|``."""
    r = np.abs(np.asarray(xi, dtype=float))
    if spec.p == 2:
        return np.ones_like(r)
    base = spec.kappa + r
    with np.errstate(divide="ignore", invalid="ignore"):
        out = base ** (spec.p - 3) * (spec.kappa + (spec.p - 1) * r)
    if spec.p > 2:
        out = np.where(base == 0, 0.0, out)
    return out


def f_map(xi, spec: PLaplaceSpec):
    """``(kappa + |xi|)^((p-2)/2) xi``; the identity for p = 2."""
    xi = np.asarray(xi, dtype=float)
    if spec.p == 2:
        return xi * 1.0
    return (spec.kappa + np.abs(xi)) ** ((spec.p - 2) / 2) * xi


def potential(r, spec: PLaplaceSpec):
    """Antiderivative of ``(kappa + s)^(p-2) s`` on ``[0, r]``, ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    p, k = spec.p, spec.kappa
    if p == 2:
        return 0.5 * r**2
    if k == 0:
        return r**p / p
    b = k + r
    return (b**p - k**p) / p - k * (b ** (p - 1) - k ** (p - 1)) / (p - 1)


# -- operators on fields -----------------------------------------------------

def flux_values(drift: DriftSpec, grad: np.ndarray) -> np.ndarray:
    kind = drift.kind
    if isinstance(kind, LinearHeat):
        return kind.nu * grad
    return s_flux(grad, kind)


def apply_A_values(drift: DriftSpec, t: float, u: np.ndarray, dx: float) -> np.ndarray:
    a = drift.sign * drift.time_factor(t)
    return a * div_values(flux_values(drift, grad_values(u, dx)), dx)


def apply_A(drift: DriftSpec, t: float, u: NodeField) -> NodeField:
    return NodeField(u.grid, apply_A_values(drift, t, u.values, u.grid.dx))


def apply_B(diff: DiffusionSpec, t: float, u: NodeField, w: NodeField) -> NodeField:
    if u.grid != w.grid:
        raise GridMismatchError("u and noise field live on different grids")
    return NodeField(u.grid, (diff.b0 + diff.b1 * u.values) * w.values)


def g_values(drift: DriftSpec, u: np.ndarray, dx: float, basis: SpectralBasis | None = None) -> np.ndarray:
    """Values of G(u): node values for the heat family, edge values for p-Laplace.

    The heat-family G is frozen at a(0) = 1, i.e. ``sqrt(nu) (-A_h)^(1/2) u``.
    """
    kind = drift.kind
    if isinstance(kind, LinearHeat):
        if basis is None:
            basis = laplacian_eigs(Grid1D(u.shape[-1]))
        c = basis.coefficients(u)
        return math.sqrt(kind.nu) * basis.synthesize(basis.sqrt_eigenvalues * c)
    return f_map(grad_values(u, dx), kind)


def apply_G(drift: DriftSpec, u: NodeField, basis: SpectralBasis | None = None):
    vals = g_values(drift, u.values, u.grid.dx, basis)
    if drift.is_linear:
        return NodeField(u.grid, vals)
    return EdgeField(u.grid, vals)


def default_u0(grid: Grid1D, basis: SpectralBasis | None = None) -> NodeField:
    """Smooth initial datum ``e_1 + 0.5 e_2``."""
    basis = basis or laplacian_eigs(grid)
    coefs = np.zeros(min(2, len(basis)))
    coefs[0] = 1.0
    if coefs.size > 1:
        coefs[1] = 0.5
    return NodeField(grid, basis.synthesize(coefs))


def rough_u0(grid: Grid1D, seed: int, basis: SpectralBasis | None = None) -> NodeField:
    """Random initial datum with eigen-coefficients ``k^-1/2 xi_k``."""
    basis = basis or laplacian_eigs(grid)
    n = len(basis)
    xi = standard_normals(seed, n)
    return NodeField(grid, basis.synthesize(np.arange(1, n + 1) ** -0.5 * xi))


# -- equivalence of S and F --------------------------------------------------

def check_f_equivalence(spec: PLaplaceSpec, n_samples: int, seed=0, scale: float = 2.0):
    """Extremal ratios ``(S(x)-S(y))(x-y) / |F(x)-F(y)|^2`` over sampled pairs.

    Pairs are drawn from N(0, scale^2); pairs with coinciding F-values are
    dropped. Returns ``(lambda_hat, Lambda_hat)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal(n_samples)
    y = scale * rng.standard_normal(n_samples)
    ratio = f_ratio(x, y, spec)
    ratio = ratio[np.isfinite(ratio)]
    if ratio.size == 0:
        raise ValueError("degenerate sample set: every pair coincides")
    return float(ratio.min()), float(ratio.max())


def f_ratio(x, y, spec: PLaplaceSpec) -> np.ndarray:
    """Pointwise ratio; NaN where ``x == y`` or ``F(x) == F(y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    num = (s_flux(x, spec) - s_flux(y, spec)) * (x - y)
    den = (f_map(x, spec) - f_map(y, spec)) ** 2
    out = np.full(np.broadcast(x, y).shape, np.nan)
    ok = (x != y) & (den > 0)
    out[ok] = num[ok] / den[ok]
    return out


# -- hypothesis auditor ------------------------------------------------------

@dataclass
class HypothesisRecord:
    id: str
    constant: float
    samples: int
    margin: float
    violations: list = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


@dataclass
class HypothesisReport:
    records: dict
    lambda_hat: float | None = None
    Lambda_hat: float | None = None

    def __getitem__(self, key) -> HypothesisRecord:
        return self.records[key]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records.values())

    def failed(self) -> list[str]:
        return [k for k, r in self.records.items() if not r.passed]

    def to_json(self, **kw) -> str:
        payload = {
            "hypotheses": [r.to_dict() for r in self.records.values()],
            "lambda_hat": self.lambda_hat,
            "Lambda_hat": self.Lambda_hat,
        }
        return json.dumps(payload, **kw)


_MAX_RECORDED = 20
# relative slack for round-off when comparing both sides of an inequality
_RTOL = 1e-10


class _Audit:
    def __init__(self, hid, note=""):
        self.hid = hid
        self.note = note
        self.ratios = []
        self.margins = []
        self.violations = []
        self.count = 0

    def add(self, lhs, bound, ratio, inputs):
        """Check ``lhs <= bound`` sample-wise (arrays)."""
        lhs = np.atleast_1d(lhs)
        bound = np.atleast_1d(bound)
        ok = lhs <= bound + _RTOL * (np.abs(bound) + np.abs(lhs)) + 1e-300
        self.count += lhs.size
        self.margins.append(np.min(bound - lhs))
        self.ratios.append(np.atleast_1d(ratio))
        for i in np.flatnonzero(~ok)[: _MAX_RECORDED - len(self.violations)]:
            self.violations.append({**inputs(i), "lhs": float(lhs[i]), "bound": float(bound[i])})

    def record(self, constant):
        margin = float(min(self.margins)) if self.margins else 0.0
        return HypothesisRecord(self.hid, float(constant), self.count, margin, self.violations, self.note)


def _sample_fields(rng_seed, count, basis):
    n = len(basis)
    z = standard_normals(rng_seed, count * n).reshape(count, n)
    return basis.synthesize(z / np.arange(1, n + 1))


def _edge_pnorm_pow(x, p, dx):
    return dx * np.sum(np.abs(x) ** p, axis=-1)


def _dual_norm_pow(drift, a_vals, u, dx, basis):
    """Upper bound (exact for the heat family) of ``||A(t,u)||_{V'}^{q'}``."""
    grad = grad_values(u, dx)
    if drift.is_linear:
        # ||nu a div grad u||_{H^-1} = nu a ||grad u||
        nu = drift.kind.nu
        return (nu * a_vals) ** 2 * _edge_pnorm_pow(grad, 2.0, dx)
    p = drift.kind.p
    pp = p / (p - 1)
    return np.abs(a_vals) ** pp * _edge_pnorm_pow(s_flux(grad, drift.kind), pp, dx)


def _structural_constants(drift: DriftSpec, diff: DiffusionSpec, T: float):
    """Constants implied by the structure of the two families (mesh independent)."""
    basis = diff.noise.basis
    q_w = diff.noise.weights
    sup2 = float(np.sum(q_w * basis.sup_norms[: q_w.size] ** 2))
    amax = 1.0 + drift.rho * T
    kind = drift.kind
    if isinstance(kind, LinearHeat):
        q = 2.0
        c2, c3 = kind.nu, 0.0
        c4 = (kind.nu * amax) ** 2
        c4_unit = kind.nu**2
    else:
        p, k = kind.p, kind.kappa
        q = p
        if p >= 2:
            c2, c3 = 1.0, 0.0
        else:
            c2, c3 = 2.0 ** (p - 2), 2.0 ** (p - 2) * k**p
        c4_unit = max(1.0, 2.0 ** (p - 1)) * (1.0 + k**p)
        c4 = amax ** (p / (p - 1)) * c4_unit
    qp = q / (q - 1)
    c7 = drift.rho**qp * T ** (qp - 1) * c4_unit
    return {
        "q": q,
        "c1": diff.b1**2 * sup2,
        "c2": c2,
        "c3": c3,
        "c4": c4,
        "c5": max(1.0, diff.b1) * math.sqrt(sup2),
        "c7": c7,
    }


def check_hypotheses(
    drift: DriftSpec,
    diff: DiffusionSpec,
    n_samples: int,
    seed: int = 0,
    *,
    u0: NodeField | None = None,
    T: float = 1.0,
    n_hemi: int = 50,
    n_times: int = 11,
) -> HypothesisReport:
    """Evaluate (H1)-(H8) on sampled fields and times.

    Each inequality is tested against the constant implied by the structure
    of the family (``_structural_constants``); the reported ``constant`` is
    the tightest value the samples themselves support. Violations are data.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    grid = diff.grid
    dx = grid.dx
    basis = diff.noise.basis
    cs = _structural_constants(drift, diff, T)
    q = cs["q"]
    qp = q / (q - 1)
    sign = drift.sign

    seeds = np.random.SeedSequence(seed).generate_state(6, dtype=np.uint64)
    u = _sample_fields(int(seeds[0]), n_samples, basis)
    v = _sample_fields(int(seeds[1]), n_samples, basis)
    rng = np.random.default_rng(int(seeds[2]))
    t = rng.uniform(0.0, T, n_samples)
    s = rng.uniform(0.0, T, n_samples)
    a_t = sign * drift.time_factor(t)[:, None]

    def A(vals, a):
        return a * div_values(flux_values(drift, grad_values(vals, dx)), dx)

    def inner(x, y):
        return dx * np.sum(x * y, axis=-1)

    def vnorm_q(x):
        return _edge_pnorm_pow(grad_values(x, dx), q, dx)

    def where(i):
        return {"sample": int(i), "t": float(t[i]), "s": float(s[i])}

    Au, Av = A(u, a_t), A(v, a_t)
    d = u - v
    dnorm2 = inner(d, d)
    records = {}

    # (H1) 2<A(u)-A(v), u-v> + ||B(u)-B(v)||_{L2(U;H)}^2 <= c1 ||u-v||^2
    qw = diff.noise.weights
    E = basis.vectors[: qw.size]
    hs_diff = diff.b1**2 * np.einsum("k,kn,mn->m", qw, E**2, d**2) * dx
    lhs1 = 2 * inner(Au - Av, d) + hs_diff
    h1 = _Audit("H1", "pairing realised as the discrete H inner product")
    h1.add(lhs1, cs["c1"] * dnorm2, lhs1 / dnorm2, where)
    records["H1"] = h1.record(np.max(lhs1 / dnorm2))

    # (H2) continuity of lambda -> <A(u + lambda v), w> on [-1, 1]
    h2 = _Audit("H2", "101-point scan on [-1, 1], jump threshold 10x median step")
    lam = np.linspace(-1.0, 1.0, 101)
    worst = 0.0
    for i in range(min(n_hemi, n_samples)):
        w = u[(i + 1) % n_samples]
        curve = inner(A(u[i][None, :] + lam[:, None] * v[i][None, :], a_t[i]), w)
        steps = np.abs(np.diff(curve))
        med = np.median(steps)
        jump = steps.max() / med if med > 0 else (0.0 if steps.max() == 0 else np.inf)
        worst = max(worst, jump)
        h2.count += 1
        h2.margins.append(10.0 - jump)
        if jump > 10.0 and len(h2.violations) < _MAX_RECORDED:
            h2.violations.append({"sample": i, "t": float(t[i]), "jump_over_median": float(jump)})
    records["H2"] = h2.record(worst)

    # (H3) <A(t,u), u> <= -c2 ||u||_V^q + c3
    Vq = vnorm_q(u)
    pair = inner(Au, u)
    h3 = _Audit("H3", f"q = {q:g}, c3 = {cs['c3']:.6g}")
    h3.add(pair, -cs["c2"] * Vq + cs["c3"], (cs["c3"] - pair) / Vq, where)
    records["H3"] = h3.record(np.min((cs["c3"] - pair) / Vq))

    # (H4) ||A(t,u)||_{V'}^{q'} <= c4 (1 + ||u||_V^q)
    dual = _dual_norm_pow(drift, a_t[:, 0], u, dx, basis)
    h4 = _Audit(
        "H4",
        "exact spectral dual norm" if drift.is_linear else "dual norm bounded above by flux L^{p'} norm",
    )
    h4.add(dual, cs["c4"] * (1 + Vq), dual / (1 + Vq), where)
    records["H4"] = h4.record(np.max(dual / (1 + Vq)))

    # (H5) ||B(t,u)||_{L2(U;H)} <= c5 (f + ||u||_H), f = b0 ||1||_H
    f_const = diff.b0 * math.sqrt(dx * grid.n_interior)
    hs = np.sqrt(dx * np.einsum("k,kn,mn->m", qw, E**2, (diff.b0 + diff.b1 * u) ** 2))
    rhs5 = f_const + np.sqrt(inner(u, u))
    h5 = _Audit("H5", f"f = b0 ||1||_H = {f_const:.6g} (deterministic constant)")
    h5.add(hs, cs["c5"] * rhs5, hs / rhs5, where)
    records["H5"] = h5.record(np.max(hs / rhs5))

    # (H6) -<A(t,u)-A(t,v), u-v> >= c6 ||G(u)-G(v)||^2
    gu, gv = g_values(drift, u, dx, basis), g_values(drift, v, dx, basis)
    gdiff2 = dx * np.sum((gu - gv) ** 2, axis=-1)
    mono = -inner(Au - Av, d)
    lam_hat = Lam_hat = None
    if drift.is_linear:
        c6 = 1.0
    else:
        lam_hat, Lam_hat = check_f_equivalence(drift.kind, max(n_samples, 10_000), int(seeds[3]))
        c6 = lam_hat
    h6 = _Audit("H6", f"tested against c6 = {c6:.6g}" + ("" if drift.is_linear else " (lambda_hat of F-equivalence)"))
    h6.add(c6 * gdiff2, mono, mono / gdiff2, where)
    records["H6"] = h6.record(np.min(mono / gdiff2))

    # (H7) ||A(t,u)-A(s,u)||_{V'}^{q'} <= c7 (||u||_V^q + 1) |t-s|
    diff_a = sign * (drift.time_factor(t) - drift.time_factor(s))
    dual7 = _dual_norm_pow(drift, diff_a, u, dx, basis)
    rhs7 = (Vq + 1) * np.abs(t - s)
    h7 = _Audit("H7", f"rho = {drift.rho:g}")
    h7.add(dual7, cs["c7"] * rhs7, dual7 / rhs7, where)
    records["H7"] = h7.record(np.max(dual7 / rhs7))

    # (H8) sup_t ||A(t,u0)||_H^2 finite
    if u0 is None:
        u0 = default_u0(grid, basis)
    tg = np.linspace(0.0, T, n_times)
    norms = np.array([dx * np.sum(A(u0.values, sign * drift.time_factor(tt)) ** 2) for tt in tg])
    h8 = _Audit("H8", f"checked on a {n_times}-point time grid")
    h8.count = n_times
    h8.margins.append(0.0)
    if not np.all(np.isfinite(norms)):
        h8.violations.append({"t": [float(x) for x in tg[~np.isfinite(norms)]]})
    records["H8"] = h8.record(np.max(norms))

    return HypothesisReport(records, lam_hat, Lam_hat)
