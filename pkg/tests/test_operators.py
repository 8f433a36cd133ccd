import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from autoclock.operators import (
    DensityMatrix,
    Operator,
    SubsystemLayout,
    evolve,
    free_energy,
    partial_trace,
    random_density_matrix,
    random_hermitian,
    tensor,
    thermal_state,
    trace_norm_distance,
    von_neumann_entropy,
)

X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
LN2 = 0.6931471805599453
# Gibbs populations of diag(0, 1) at T = 1: e^{-E}/Z
P0 = 0.7310585786300049
P1 = 0.2689414213699951


def bell_state():
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1.0 / np.sqrt(2.0)
    return np.outer(v, v.conj())


# --- tensor -------------------------------------------------------------------

def test_tensor_identity():
    out = tensor(np.eye(2), np.eye(2))
    np.testing.assert_allclose(out, np.eye(4))


def test_tensor_diagonal():
    out = tensor(np.diag([0.0, 1.0]), np.eye(2))
    np.testing.assert_allclose(out, np.diag([0.0, 0.0, 1.0, 1.0]))


def test_tensor_flip_pair_on_00():
    # oracle: assemble the 4x4 entrywise from a[i,j] b[k,l]
    xx = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    xx[2 * i + k, 2 * j + l] = X[i, j] * X[k, l]
    np.testing.assert_allclose(tensor(X, X), xx)
    ket00 = np.array([1, 0, 0, 0], dtype=complex)
    ket11 = np.array([0, 0, 0, 1], dtype=complex)
    np.testing.assert_allclose(tensor(X, X) @ ket00, ket11)


def test_tensor_combines_flags():
    a = Operator(np.diag([1.0, -1.0]), hermitian=True, unitary=True, diagonal=True)
    out = tensor(a, a)
    assert out.hermitian and out.unitary and out.diagonal


# --- partial trace ------------------------------------------------------------

def test_partial_trace_product_state(rng):
    rho = random_density_matrix(2, rng)
    sigma = random_density_matrix(3, rng)
    layout = SubsystemLayout((("a", 2), ("b", 3)))
    np.testing.assert_allclose(partial_trace(np.kron(rho, sigma), layout, "a"), rho, atol=1e-12)
    np.testing.assert_allclose(partial_trace(np.kron(rho, sigma), layout, "b"), sigma, atol=1e-12)


def test_partial_trace_bell():
    # oracle: rho_A[i, j] = sum_k psi[i, k] conj(psi[j, k]) summed explicitly
    rho = bell_state()
    expect = np.zeros((2, 2), dtype=complex)
    psi = np.zeros((2, 2), dtype=complex)
    psi[0, 0] = psi[1, 1] = 1.0 / np.sqrt(2.0)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                expect[i, j] += psi[i, k] * np.conj(psi[j, k])
    layout = SubsystemLayout((("a", 2), ("b", 2)))
    np.testing.assert_allclose(partial_trace(rho, layout, "a"), expect, atol=1e-14)
    np.testing.assert_allclose(expect, np.eye(2) / 2.0, atol=1e-14)


def test_partial_trace_keep_all(rng):
    rho = random_density_matrix(4, rng)
    layout = SubsystemLayout((("a", 2), ("b", 2)))
    np.testing.assert_allclose(partial_trace(rho, layout, ("a", "b")), rho, atol=1e-14)


def test_partial_trace_unknown_label():
    layout = SubsystemLayout((("a", 2), ("b", 2)))
    with pytest.raises(ValueError, match="unknown subsystem"):
        partial_trace(np.eye(4) / 4, layout, "c")
    with pytest.raises(ValueError):
        partial_trace(np.eye(4) / 4, layout, ())


def test_partial_trace_preserves_trace_and_positivity(rng):
    layout = SubsystemLayout((("a", 2), ("b", 3), ("c", 2)))
    for _ in range(20):
        rho = random_density_matrix(12, rng)
        red = partial_trace(rho, layout, ("a", "c"))
        assert abs(np.trace(red) - 1.0) < 1e-12
        assert np.min(np.linalg.eigvalsh(red)) > -1e-12


def test_trace_distance_contracts_under_partial_trace(rng):
    layout = SubsystemLayout((("a", 2), ("b", 4)))
    for _ in range(20):
        rho, sigma = random_density_matrix(8, rng), random_density_matrix(8, rng)
        d_full = trace_norm_distance(rho, sigma)
        d_red = trace_norm_distance(
            partial_trace(rho, layout, "a"), partial_trace(sigma, layout, "a")
        )
        assert d_red <= d_full + 1e-12


# --- evolve -------------------------------------------------------------------

def test_evolve_zero_time(rng):
    rho = random_density_matrix(3, rng)
    h = random_hermitian(3, rng)
    np.testing.assert_allclose(evolve(rho, h, 0.0), rho, atol=1e-14)


def test_evolve_plus_to_minus():
    plus = 0.5 * np.array([[1, 1], [1, 1]], dtype=complex)
    minus = 0.5 * np.array([[1, -1], [-1, 1]], dtype=complex)
    # relative phase e^{-i pi} = -1 after unit time under diag(0, pi)
    np.testing.assert_allclose(evolve(plus, np.diag([0.0, np.pi]), 1.0), minus, atol=1e-12)


def test_evolve_gibbs_stationary(rng):
    h = random_hermitian(3, rng)
    gibbs = thermal_state(h, 0.8)
    out = evolve(gibbs, h, 2.7)
    np.testing.assert_allclose(out.entries, gibbs.entries, atol=1e-12)


def test_evolve_requires_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        evolve(np.eye(2) / 2, np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


def test_evolve_preserves_spectrum_and_entropy(rng):
    for _ in range(10):
        rho = random_density_matrix(4, rng)
        h = random_hermitian(4, rng)
        out = evolve(rho, h, 1.3)
        np.testing.assert_allclose(
            np.linalg.eigvalsh(out), np.linalg.eigvalsh(rho), atol=1e-10
        )
        assert abs(von_neumann_entropy(out) - von_neumann_entropy(rho)) < 1e-10


# --- trace norm distance ------------------------------------------------------

def test_distance_identical(rng):
    rho = random_density_matrix(3, rng)
    assert trace_norm_distance(rho, rho) == 0.0


def test_distance_orthogonal_pure_states():
    # difference has eigenvalues +1 and -1, so the unhalved norm is 2
    assert abs(trace_norm_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) - 2.0) < 1e-14


def test_distance_pure_vs_maximally_mixed():
    # eigenvalues +-1/2
    assert abs(trace_norm_distance(np.diag([1.0, 0.0]), np.eye(2) / 2) - 1.0) < 1e-14


def test_distance_symmetry_and_triangle(rng):
    for _ in range(10):
        a, b, c = (random_density_matrix(3, rng) for _ in range(3))
        assert abs(trace_norm_distance(a, b) - trace_norm_distance(b, a)) < 1e-12
        assert trace_norm_distance(a, c) <= (
            trace_norm_distance(a, b) + trace_norm_distance(b, c) + 1e-12
        )


def test_distance_matches_singular_values(rng):
    # second route: direct SVD of the difference
    for _ in range(10):
        a, b = random_density_matrix(4, rng), random_density_matrix(4, rng)
        svd_sum = np.sum(np.linalg.svd(a - b, compute_uv=False))
        assert abs(trace_norm_distance(a, b) - svd_sum) < 1e-10


def test_distance_dim_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        trace_norm_distance(np.eye(2) / 2, np.eye(3) / 3)


# --- entropy ------------------------------------------------------------------

def test_entropy_pure_state():
    assert von_neumann_entropy(np.diag([1.0, 0.0])) == 0.0


def test_entropy_maximally_mixed():
    assert abs(von_neumann_entropy(np.eye(2) / 2) - LN2) < 1e-12


def test_entropy_gibbs_populations():
    # direct -sum(lam ln lam) evaluation of the stated spectrum
    lam = np.array([0.7311, 0.2689])
    expected = float(-np.sum(lam * np.log(lam)))
    assert abs(expected - 0.5821616831548417) < 1e-12
    assert abs(von_neumann_entropy(np.diag(lam)) - expected) < 1e-12


def test_entropy_clamps_psd_noise():
    rho = np.diag([1.0 + 5e-13, -5e-13])
    assert von_neumann_entropy(rho) >= 0.0
    with pytest.raises(ValueError):
        von_neumann_entropy(np.diag([1.1, -0.1]))


@given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=2**31))
def test_entropy_bounds(dim, seed):
    rho = random_density_matrix(dim, np.random.default_rng(seed))
    s = von_neumann_entropy(rho)
    assert -1e-12 <= s <= np.log(dim) + 1e-10


# --- thermal state and free energy ---------------------------------------------

def test_thermal_qubit_populations():
    rho = thermal_state(np.diag([0.0, 1.0]), 1.0)
    np.testing.assert_allclose(np.diag(rho.entries), [P0, P1], atol=1e-12)


def test_thermal_degenerate_is_maximally_mixed():
    rho = thermal_state(3.0 * np.eye(4), 0.7)
    np.testing.assert_allclose(rho.entries, np.eye(4) / 4, atol=1e-12)


def test_thermal_low_temperature_limit():
    rho = thermal_state(np.diag([0.0, 1.0]), 1e-3)
    assert trace_norm_distance(rho, np.diag([1.0, 0.0])) < 1e-6


def test_thermal_rejects_nonpositive_temperature():
    with pytest.raises(ValueError, match="positive"):
        thermal_state(np.diag([0.0, 1.0]), 0.0)
    with pytest.raises(ValueError, match="positive"):
        thermal_state(np.diag([0.0, 1.0]), -1.0)


def test_thermal_commutes_with_hamiltonian(rng):
    h = random_hermitian(4, rng)
    rho = thermal_state(h, 1.3).entries
    assert np.max(np.abs(h @ rho - rho @ h)) < 1e-12


def test_free_energy_gibbs_value():
    h = np.diag([0.0, 1.0])
    f = free_energy(thermal_state(h, 1.0), h, 1.0)
    assert abs(f - (-np.log(1.0 + np.exp(-1.0)))) < 1e-12
    assert abs(f - (-0.3132616875182228)) < 1e-12


def test_free_energy_pure_eigenstate():
    h = np.diag([0.0, 1.0])
    assert abs(free_energy(np.diag([0.0, 1.0]), h, 2.3) - 1.0) < 1e-12


def test_free_energy_maximally_mixed():
    h = np.diag([0.0, 1.0])
    assert abs(free_energy(np.eye(2) / 2, h, 1.0) - (0.5 - LN2)) < 1e-12


def test_free_energy_dim_mismatch():
    with pytest.raises(ValueError):
        free_energy(np.eye(2) / 2, np.diag([0.0, 1.0, 2.0]), 1.0)


@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=2**31))
def test_gibbs_minimises_free_energy(dim, seed):
    gen = np.random.default_rng(seed)
    h = random_hermitian(dim, gen)
    temperature = float(gen.uniform(0.3, 3.0))
    rho = random_density_matrix(dim, gen)
    f_state = free_energy(rho, h, temperature)
    f_gibbs = free_energy(thermal_state(h, temperature), h, temperature)
    assert f_state - f_gibbs >= -1e-10


# --- type invariants ------------------------------------------------------------

def test_operator_flag_validation():
    with pytest.raises(ValueError, match="hermitian"):
        Operator(np.array([[0.0, 1.0], [0.0, 0.0]]), hermitian=True)
    with pytest.raises(ValueError, match="unitary"):
        Operator(2.0 * np.eye(2), unitary=True)
    with pytest.raises(ValueError, match="diagonal"):
        Operator(np.array([[1.0, 0.5], [0.5, 1.0]]), diagonal=True)
    op = Operator(X, hermitian=True, unitary=True)
    assert op.dim == 2


def test_density_matrix_validation():
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(np.eye(2))
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))
    with pytest.raises(ValueError, match="negative eigenvalue"):
        DensityMatrix(np.diag([1.5, -0.5]))
    dm = DensityMatrix(np.eye(3) / 3)
    assert dm.dim == 3


def test_layout_validation():
    with pytest.raises(ValueError, match="duplicate"):
        SubsystemLayout((("a", 2), ("a", 3)))
    with pytest.raises(ValueError, match="positive"):
        SubsystemLayout((("a", 0),))
    layout = SubsystemLayout((("u", 2), ("b", 3)))
    assert layout.dim == 6
    assert layout.dim_of("b") == 3
    with pytest.raises(ValueError):
        layout.dim_of("w")
