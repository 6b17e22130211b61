import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timereg.field import (
    EdgeField,
    Grid1D,
    GridMismatchError,
    NodeField,
    divergence,
    dual_norm_estimate,
    dual_norm_exact,
    edge_inner,
    gradient,
    h_inner,
    h_norm,
    laplacian_eigs,
    solve_weighted,
    sqrt_minus_A,
    v_norm,
)


def random_node(grid, rng):
    return NodeField(grid, rng.standard_normal(grid.n_interior))


def random_edge(grid, rng):
    return EdgeField(grid, rng.standard_normal(grid.n_interior + 1))


def test_grid_spacing():
    g = Grid1D(7)
    assert g.dx * (g.n_interior + 1) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        Grid1D(0)


def test_fields_validate_length_and_finiteness():
    g = Grid1D(3)
    with pytest.raises(ValueError):
        NodeField(g, [1.0, 2.0])
    with pytest.raises(ValueError):
        EdgeField(g, [1.0, 2.0, np.nan, 0.0])
    u = NodeField(g, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        u.values[0] = 5.0


def test_gradient_zero():
    g = Grid1D(5)
    assert np.all(gradient(NodeField.zeros(g)).values == 0)


def test_gradient_small_grid():
    g = Grid1D(3)
    q = gradient(NodeField(g, [1.0, 2.0, 3.0]))
    np.testing.assert_allclose(q.values, [4.0, 4.0, 4.0, -12.0])


def test_gradient_of_first_eigenvector_matches_cosine_profile():
    g = Grid1D(20)
    e1 = laplacian_eigs(g).eigenvector(1)
    # sin(a) - sin(b) = 2 cos((a+b)/2) sin((a-b)/2)
    expected = np.sqrt(2.0) * 2 * np.cos(np.pi * g.midpoints) * np.sin(np.pi * g.dx / 2) / g.dx
    np.testing.assert_allclose(gradient(e1).values, expected, atol=1e-10)


def test_divergence_of_constant_is_zero():
    g = Grid1D(6)
    assert np.allclose(divergence(EdgeField(g, np.full(7, 3.5))).values, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_summation_by_parts(n, seed):
    rng = np.random.default_rng(seed)
    g = Grid1D(n)
    q, u = random_edge(g, rng), random_node(g, rng)
    lhs = h_inner(divergence(q), u)
    rhs = -edge_inner(q, gradient(u))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (abs(lhs) + 1))


def test_inner_products():
    g = Grid1D(3)
    u = NodeField(g, [1.0, 1.0, 1.0])
    assert h_inner(u, u) == pytest.approx(0.75)
    basis = laplacian_eigs(g)
    assert abs(h_inner(basis.eigenvector(1), basis.eigenvector(2))) < 1e-10
    q = EdgeField(g, [0.0, 1.0, -2.0, 0.5])
    assert edge_inner(q, q) > 0
    assert edge_inner(EdgeField.zeros(g), EdgeField.zeros(g)) == 0
    with pytest.raises(GridMismatchError):
        h_inner(u, NodeField(Grid1D(4), np.ones(4)))


def test_v_norm_basic_properties():
    rng = np.random.default_rng(0)
    g = Grid1D(12)
    u = random_node(g, rng)
    assert v_norm(NodeField.zeros(g), 3.0) == 0
    energy = -h_inner(u, divergence(gradient(u)))
    assert v_norm(u, 2.0) ** 2 == pytest.approx(energy, rel=1e-10)
    assert v_norm(-2.5 * u, 3.0) == pytest.approx(2.5 * v_norm(u, 3.0), rel=1e-12)
    with pytest.raises(ValueError):
        v_norm(u, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1.5, 2.0, 3.0, 4.0]), st.integers(0, 2**32 - 1))
def test_v_norm_triangle_inequality(p, seed):
    rng = np.random.default_rng(seed)
    g = Grid1D(10)
    u, v = random_node(g, rng), random_node(g, rng)
    assert v_norm(u + v, p) <= v_norm(u, p) + v_norm(v, p) + 1e-12


def test_single_node_eigenvalue():
    basis = laplacian_eigs(Grid1D(1))
    assert basis.eigenvalues[0] == pytest.approx(8.0)
    assert basis.eigenvalues[0] == pytest.approx(2 / 0.5**2)


@pytest.mark.parametrize("n", [1, 2, 7, 32])
def test_eigenpairs(n):
    g = Grid1D(n)
    basis = laplacian_eigs(g)
    assert np.all(np.diff(basis.eigenvalues) > 0)
    assert basis.eigenvalues[-1] < 4 / g.dx**2
    for k in range(1, n + 1):
        e = basis.eigenvector(k)
        res = divergence(gradient(e)) + basis.eigenvalues[k - 1] * e
        assert h_norm(res) <= 1e-10 * basis.eigenvalues[k - 1]
    gram = g.dx * basis.vectors @ basis.vectors.T
    np.testing.assert_allclose(gram, np.eye(n), atol=1e-10)


def test_sqrt_minus_A():
    g = Grid1D(16)
    basis = laplacian_eigs(g)
    e1 = basis.eigenvector(1)
    np.testing.assert_allclose(sqrt_minus_A(e1, basis).values, np.sqrt(basis.eigenvalues[0]) * e1.values, atol=1e-10)
    assert np.allclose(sqrt_minus_A(NodeField.zeros(g), basis).values, 0.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = random_node(g, rng)
        r = sqrt_minus_A(u, basis)
        energy = -h_inner(u, divergence(gradient(u)))
        assert h_inner(r, r) == pytest.approx(energy, rel=1e-10)
    with pytest.raises(GridMismatchError):
        sqrt_minus_A(NodeField(Grid1D(3), np.ones(3)), basis)


def test_dual_norm_estimate_bounds_exact_hilbert_value():
    g = Grid1D(16)
    basis = laplacian_eigs(g)
    rng = np.random.default_rng(5)
    assert dual_norm_estimate(NodeField.zeros(g), 2.0, 10, seed=0) == 0.0
    for _ in range(5):
        w = random_node(g, rng)
        exact = dual_norm_exact(w, basis)
        est = dual_norm_estimate(w, 2.0, 1000, seed=11)
        assert est <= exact * (1 + 1e-12)
        assert est / exact >= 0.5


def test_dual_norm_estimate_monotone_in_directions():
    g = Grid1D(16)
    w = random_node(g, np.random.default_rng(8))
    values = [dual_norm_estimate(w, 1.5, n, seed=2) for n in (1, 2, 4, 8, 16, 32, 64)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_solve_weighted_inverts_operator():
    rng = np.random.default_rng(1)
    g = Grid1D(9)
    w = rng.uniform(0.1, 2.0, 10)
    rhs = rng.standard_normal(9)
    v = solve_weighted(w, rhs, 0.3, g.dx)
    from timereg.field import weighted_laplace_values

    np.testing.assert_allclose(v - 0.3 * weighted_laplace_values(w, v, g.dx), rhs, atol=1e-12)
