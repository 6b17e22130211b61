import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timereg.field import Grid1D, laplacian_eigs
from timereg.noise import NoiseSpec, assemble_noise_fields, refine, sample_increments, standard_normals
from timereg.operators import DiffusionSpec, DriftSpec, LinearHeat, default_u0
from timereg.regularity import (
    default_lags,
    diff_quotient,
    diff_quotient_curve,
    fit_exponent,
    implied_alpha,
    ito_identity_check,
    lag_sums,
    mc_aggregate,
    seminorm_estimate,
    simulate_scalar_sde,
    sobolev_seminorm,
    theorem_consistent,
)
from timereg.stepper import StepperConfig, Trajectory, simulate_path


def brownian_paths(n_paths, n_steps, seed=0):
    tau = 1.0 / n_steps
    out = []
    for j in range(n_paths):
        dW = np.sqrt(tau) * standard_normals(seed * 100_003 + j, n_steps)
        out.append(Trajectory.from_samples(np.concatenate(([0.0], np.cumsum(dW))), tau))
    return out


def brute_seminorm(traj, alpha):
    g, tau = traj.g, traj.tau
    total = 0.0
    n = g.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j:
                total += traj.g_weight * np.sum((g[i] - g[j]) ** 2) / (abs(i - j) * tau) ** (1 + 2 * alpha)
    return tau**2 * total


@pytest.fixture(scope="module")
def bm():
    return brownian_paths(2000, 2048)


def test_mc_aggregate():
    assert mc_aggregate([3.0, 3.0, 3.0]) == (3.0, 0.0)
    mean, ci = mc_aggregate([0.0, 2.0])
    assert mean == 1.0 and ci == pytest.approx(1.96)
    with pytest.raises(ValueError):
        mc_aggregate([1.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50), st.randoms(use_true_random=False))
def test_mc_aggregate_is_order_independent(values, rnd):
    perm = list(range(len(values)))
    rnd.shuffle(perm)
    a = mc_aggregate(values)
    b = mc_aggregate([values[i] for i in perm], index=perm)
    c = mc_aggregate([values[i] for i in perm])
    assert a == b == c


def test_lag_sums_match_direct_sums():
    rng = np.random.default_rng(0)
    tr = Trajectory.from_samples(rng.standard_normal((40, 3)), 0.1, weight=0.5)
    s = lag_sums(tr)
    for m in range(40):
        d = tr.g[m:] - tr.g[: 40 - m]
        assert s[m] == pytest.approx(0.5 * np.sum(d * d), rel=1e-10, abs=1e-10)


def test_constant_trajectories_give_zero():
    tr = [Trajectory.from_samples(np.full((33, 2), c), 1 / 32) for c in (1.0, -4.0)]
    for m in (1, 4, 8):
        assert diff_quotient(tr, m)[1] == 0.0
    assert sobolev_seminorm(tr[0], 0.3) == 0.0


def test_diff_quotient_linear_path():
    N = 256
    tr = Trajectory.from_samples(np.linspace(0, 1, N + 1), 1 / N)
    for m in (4, 16, 64):
        h, D, _ = diff_quotient([tr, tr], m)
        # tau * sum over N - m windows of h^2, divided by h
        assert D == pytest.approx(h * (1 - h), rel=1e-12)


def test_diff_quotient_errors():
    tr = Trajectory.from_samples(np.arange(9.0), 0.125)
    with pytest.raises(ValueError):
        diff_quotient([tr], 2)
    with pytest.raises(ValueError):
        diff_quotient([tr, tr], 8)


def test_seminorm_matches_brute_force():
    rng = np.random.default_rng(1)
    tr = Trajectory.from_samples(rng.standard_normal((30, 2)), 1 / 29)
    for alpha in (0.1, 0.25, 0.45, 0.7):
        assert sobolev_seminorm(tr, alpha) == pytest.approx(brute_seminorm(tr, alpha), rel=1e-10)


def test_seminorm_linear_path():
    N = 2048
    tr = Trajectory.from_samples(np.linspace(0, 1, N + 1), 1 / N)
    assert sobolev_seminorm(tr, 0.25) == pytest.approx(8 / 15, rel=0.03)


def test_seminorm_monotone_in_alpha_and_shift_invariant():
    rng = np.random.default_rng(2)
    tr = Trajectory.from_samples(np.cumsum(rng.standard_normal(129)), 1 / 128)
    shifted = Trajectory.from_samples(tr.g + 7.5, tr.tau)
    vals = [sobolev_seminorm(tr, a) for a in (0.1, 0.2, 0.3, 0.4, 0.49)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert sobolev_seminorm(shifted, 0.3) == pytest.approx(vals[2], rel=1e-12)
    assert diff_quotient([shifted, tr], 4)[1] == pytest.approx(diff_quotient([tr, tr], 4)[1], rel=1e-12)
    with pytest.raises(ValueError):
        sobolev_seminorm(tr, 1.0)


def test_seminorm_estimate_guards_alpha():
    trs = brownian_paths(4, 64)
    with pytest.raises(ValueError):
        seminorm_estimate(trs, 0.5)
    assert seminorm_estimate(trs, 0.6, stress=True).value > 0


def test_brownian_oracles(bm):
    est = seminorm_estimate(bm, 0.25)
    assert est.value == pytest.approx(8 / 3, rel=0.10)
    for h in (2.0**-6, 2.0**-5, 2.0**-4):
        _, D, _ = diff_quotient(bm, int(round(h * 2048)))
        assert D == pytest.approx(1 - h, rel=0.05)


def test_brownian_increment_exponent(bm):
    curve = diff_quotient_curve(bm[:500], [4, 8, 16, 32, 64, 128])
    fit = fit_exponent(curve.h, curve.mean_squared_increments() / (1 - curve.h))
    assert 0.95 <= fit.beta <= 1.05


def test_fit_exponent():
    h = 2.0 ** -np.arange(4, 9)
    f = fit_exponent(h, 3 * h)
    assert f.beta == pytest.approx(1.0) and f.r2 == pytest.approx(1.0)
    assert fit_exponent(h, 2 * np.sqrt(h)).beta == pytest.approx(0.5)
    with pytest.warns(RuntimeWarning):
        f = fit_exponent(h, np.array([0.0, 1, 2, 3, 4]))
    assert f.n_points == 4
    with pytest.raises(ValueError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit_exponent(h, np.array([0.0, 0.0, 0.0, 1.0, 2.0]))


def test_implied_alpha_consistency():
    f = fit_exponent(2.0 ** -np.arange(4, 9), 2.0 ** -np.arange(4, 9))
    assert implied_alpha(f) == pytest.approx(0.5)
    assert theorem_consistent(f, [0.25, 0.45]) == {0.25: True, 0.45: True}


def test_default_lags():
    lags = default_lags(1024, 2.0**-10)
    assert lags == [4, 8, 16, 32, 64, 128, 256]
    assert np.all(np.diff(diff_quotient_curve(brownian_paths(3, 1024), lags).h) > 0)


def test_heat_diff_quotient_is_modewise_sum():
    basis = laplacian_eigs(Grid1D(16))
    noise = NoiseSpec(6, 2.0, basis)
    diff = DiffusionSpec(1.0, 0.0, noise)
    N, tau = 128, 2.0**-7
    u0 = default_u0(basis.grid, basis)
    trajs, modal = [], []
    for j in range(3):
        inc = sample_increments(noise, N, tau, seed=j)
        trajs.append(simulate_path(u0, DriftSpec(LinearHeat()), diff, inc, StepperConfig(tau, N)))
        fields = assemble_noise_fields(inc, noise)
        c = np.empty((N + 1, 16))
        c[0] = basis.coefficients(u0)
        for n in range(N):
            c[n + 1] = (c[n] + basis.coefficients(fields[n])) / (1 + tau * basis.eigenvalues)
        modal.append(c)
    for m in (4, 16):
        D = diff_quotient(trajs, m)[1]
        per_mode = [
            np.mean([tau * np.sum((c[m:N, k] - c[: N - m, k]) ** 2) / (m * tau) for c in modal]) for k in range(16)
        ]
        assert D == pytest.approx(float(np.dot(basis.eigenvalues, per_mode)), rel=1e-8)


# -- Ito identity -------------------------------------------------------------

def test_ito_trivial_window():
    dW = np.sqrt(1 / 64) * standard_normals(3, 64)
    path = simulate_scalar_sde(dW, 1 / 64, theta=1.0)
    led = ito_identity_check(path, 0.5, 0.5)
    assert abs(led.residual) <= 1e-12 * (1 + abs(led.lhs))
    assert led.forward == 0 and led.backward == 0 and led.quadratic_variation == 0


def test_ito_check_validates_grid():
    path = simulate_scalar_sde(np.zeros(16), 1 / 16)
    with pytest.raises(ValueError):
        ito_identity_check(path, 0.5, 0.1)
    with pytest.raises(ValueError):
        ito_identity_check(path, 0.25, 0.5)


def test_ito_deterministic_path_order():
    # du = -u dt from u0 = 1: no martingale part, residual is pure Riemann error
    res = []
    taus = 2.0 ** -np.arange(6, 11)
    for tau in taus:
        n = int(round(1 / tau))
        path = simulate_scalar_sde(np.zeros(n), tau, u0=1.0, theta=1.0)
        assert np.all(path.mart_incr == 0)
        res.append(abs(ito_identity_check(path, 0.75, 0.25).residual))
    order = np.polyfit(np.log(taus), np.log(res), 1)[0]
    assert order >= 0.9
    assert all(b < a for a, b in zip(res, res[1:]))


def test_ito_terms_finite_and_rhs():
    dW = np.sqrt(1 / 256) * standard_normals(5, 256)
    led = ito_identity_check(simulate_scalar_sde(dW, 1 / 256), 0.75, 0.25)
    vals = [led.lhs, led.initial, led.forward, led.backward, led.quadratic_variation, led.residual]
    assert np.all(np.isfinite(vals))
    assert led.residual == pytest.approx(led.lhs - led.rhs, abs=1e-15)


def test_ito_residual_shrinks_under_refinement():
    n0, tau0 = 256, 2.0**-8
    means = np.zeros(4)
    n_paths = 64
    for j in range(n_paths):
        inc = sample_increments(1, n0, tau0, seed=j)
        for lev in range(4):
            path = simulate_scalar_sde(inc.increments[:, 0], inc.tau, theta=1.0)
            means[lev] += abs(ito_identity_check(path, 0.75, 0.25).residual) / n_paths
            inc = refine(inc, seed=10_000 + 4 * j + lev)
    assert all(b < a for a, b in zip(means, means[1:]))


# -- exact expectation of D(h) for the linear scheme --------------------------

def exact_heat_D(n, K, gamma, tau, N, lags, u0_coefs):
    """E D(h) from the per-mode variance recursion of u_{k,n+1} = r_k (u_{k,n} + sqrt(q_k) dW)."""
    dx = 1.0 / (n + 1)
    k = np.arange(1, K + 1)
    lam = 4 / dx**2 * np.sin(k * np.pi * dx / 2) ** 2
    q = k ** -float(gamma)
    r = 1 / (1 + tau * lam)
    var = np.zeros((N + 1, K))
    for i in range(N):
        var[i + 1] = r**2 * (var[i] + q * tau)
    mean = r[None, :] ** np.arange(N + 1)[:, None] * u0_coefs[:K]
    # modes above K carry only the deterministic datum (zero here)
    out = []
    for m in lags:
        e = var[m:N] + var[: N - m] - 2 * r**m * var[: N - m] + (mean[m:N] - mean[: N - m]) ** 2
        out.append(tau * np.sum(e @ lam) / (m * tau))
    return np.array(out)


def test_exact_heat_expectation_frozen():
    # full acceptance configuration: n=64, K=32, gamma=2, tau=2^-10, u0 = e1 + e2/2
    c0 = np.zeros(32)
    c0[:2] = [1.0, 0.5]
    lags = [4, 8, 16, 32, 64]
    D = exact_heat_D(64, 32, 2.0, 2.0**-10, 1024, lags, c0)
    np.testing.assert_allclose(D, [59.4990, 46.0914, 34.7351, 25.5656, 17.9950], rtol=1e-5)
    h = np.array(lags) * 2.0**-10
    fit = fit_exponent(h, h * D)
    assert fit.beta == pytest.approx(0.56992, abs=1e-4)
    assert D.max() / D.min() == pytest.approx(3.3064, abs=1e-3)


def test_monte_carlo_heat_D_matches_exact_expectation():
    n, K, N, tau = 16, 8, 256, 2.0**-8
    basis = laplacian_eigs(Grid1D(n))
    noise = NoiseSpec(K, 2.0, basis)
    diff = DiffusionSpec(1.0, 0.0, noise)
    u0 = default_u0(basis.grid, basis)
    trajs = [simulate_path(u0, DriftSpec(LinearHeat()), diff, sample_increments(noise, N, tau, seed=500 + j),
                           StepperConfig(tau, N)) for j in range(200)]
    lags = [4, 8, 16, 32]
    c0 = np.zeros(K)
    c0[:2] = [1.0, 0.5]
    exact = exact_heat_D(n, K, 2.0, tau, N, lags, c0)
    curve = diff_quotient_curve(trajs, lags)
    # 1.96 sigma half-widths; allow 2.5 of them for four simultaneous points
    assert np.all(np.abs(curve.D - exact) <= 2.5 * curve.ci)
