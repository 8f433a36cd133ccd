import numpy as np
import pytest
import scipy.linalg

from autoclock.clock import (
    BranchCutWarning,
    ClockGrid,
    ClockState,
    EngineSpec,
    InteractionWindow,
    build_total_hamiltonian,
    clock_momentum,
    crossing_mixture_kernel,
    crossing_report,
    crossing_span,
    engine_energy,
    gaussian_clock_state,
    interaction_energy,
    interaction_generator,
    momentum_operator,
    point_clock_state,
    propagate,
    reduced_states_after,
    sequential_hamiltonian,
    two_bump_clock_mixture,
)
from autoclock.operators import evolve, trace_norm_distance

SWAP2 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def default_grid(n=512):
    return ClockGrid(n_points=n, period=64.0, origin=-16.0)


def phase_spec(angle=np.pi / 4):
    return EngineSpec(h=np.diag([0.0, 1.0]), u=np.diag([1.0, np.exp(-1j * angle)]))


def plus_state():
    return 0.5 * np.array([[1, 1], [1, 1]], dtype=complex)


# --- grid and clock states ------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError, match="power of two"):
        ClockGrid(n_points=100, period=64.0)
    with pytest.raises(ValueError, match="power of two"):
        ClockGrid(n_points=32, period=64.0)
    with pytest.raises(ValueError, match="period"):
        ClockGrid(n_points=64, period=-1.0)


def test_clock_state_validation():
    grid = default_grid(64)
    amp = np.ones(64, dtype=complex)
    with pytest.raises(ValueError, match="normalised"):
        ClockState(grid, amp, (-16.0, 48.0))
    amp = np.zeros(64, dtype=complex)
    amp[0] = 1.0  # position -16, outside the declared support
    with pytest.raises(ValueError, match="support"):
        ClockState(grid, amp, (0.0, 8.0))


def test_gaussian_clock_state_truncation():
    grid = default_grid()
    state = gaussian_clock_state(grid, (-8.0, 0.0))
    x = grid.positions()
    outside = (x < -8.0) | (x > 0.0)
    assert np.max(np.abs(state.amplitudes[outside])) == 0.0
    assert abs(np.linalg.norm(state.amplitudes) - 1.0) < 1e-12


# --- momentum operator ----------------------------------------------------------

def test_momentum_eigenvalues_are_fourier_wavenumbers():
    grid = ClockGrid(n_points=64, period=64.0)
    p = momentum_operator(grid)
    assert p.hermitian
    expected = np.sort(2.0 * np.pi * np.arange(-32, 32) / 64.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(p.entries), expected, atol=1e-10)


def test_momentum_generates_lattice_translation():
    grid = ClockGrid(n_points=64, period=64.0)
    p = momentum_operator(grid).entries
    shift = scipy.linalg.expm(-1j * p * grid.dx)
    delta = np.zeros(64)
    delta[5] = 1.0
    np.testing.assert_allclose(shift @ delta, np.roll(delta, 1), atol=1e-10)
    # cyclic wrap at the edge
    delta_end = np.zeros(64)
    delta_end[63] = 1.0
    np.testing.assert_allclose(shift @ delta_end, np.roll(delta_end, 1), atol=1e-10)


def test_momentum_vanishes_for_real_symmetric_state():
    grid = default_grid()
    state = gaussian_clock_state(grid, (-8.0, 0.0))
    expect = np.real(state.amplitudes.conj() @ momentum_operator(grid).entries @ state.amplitudes)
    assert abs(expect) < 1e-10


# --- interaction generator -------------------------------------------------------

def test_generator_identity_target():
    spec = EngineSpec(h=np.diag([0.0, 1.0]), u=np.eye(2))
    np.testing.assert_allclose(interaction_generator(spec), np.zeros((2, 2)), atol=1e-12)


def test_generator_diagonal_phases():
    spec = EngineSpec(h=np.diag([0.0, 1.0]), u=np.diag([1.0, np.exp(-1j * np.pi / 2)]))
    np.testing.assert_allclose(interaction_generator(spec), np.diag([0.0, np.pi / 2]), atol=1e-12)


def test_generator_swap_of_degenerate_levels():
    # oracle: the 2x2 swap has eigenvectors (1,1)/sqrt2 at +1 and (1,-1)/sqrt2
    # at -1, so the generator is pi times the antisymmetric projector
    spec = EngineSpec(h=np.zeros((2, 2)), u=SWAP2)
    with pytest.warns(BranchCutWarning):
        g = interaction_generator(spec)
    expected = (np.pi / 2.0) * (np.eye(2) - SWAP2)
    np.testing.assert_allclose(g, expected, atol=1e-10)
    np.testing.assert_allclose(scipy.linalg.expm(-1j * g), SWAP2, atol=1e-10)


def test_generator_branch_resolves_upward():
    spec = EngineSpec(h=np.diag([0.0, 1.0]), u=np.diag([1.0, -1.0]))
    with pytest.warns(BranchCutWarning):
        g = interaction_generator(spec)
    np.testing.assert_allclose(g, np.diag([0.0, np.pi]), atol=1e-12)


def test_engine_spec_rejects_noncommuting_target():
    with pytest.raises(ValueError, match="commute"):
        EngineSpec(h=np.diag([0.0, 1.0]), u=SWAP2)


# --- total Hamiltonian -----------------------------------------------------------

def test_identity_target_gives_separable_hamiltonian():
    grid = default_grid(64)
    window = InteractionWindow(start=0.0, length=8.0)
    ham = build_total_hamiltonian(
        EngineSpec(h=np.diag([0.0, 1.0]), u=np.eye(2)), window, grid
    )
    assert np.max(np.abs(ham.interaction_dense())) == 0.0


def test_window_weights_normalised_and_supported():
    grid = default_grid()
    for profile in ("gaussian", "rectangular"):
        window = InteractionWindow(start=0.0, length=8.0, profile=profile)
        w = window.weights(grid)
        assert abs(w.sum() - 1.0) < 1e-12
        x = grid.positions()
        assert np.max(np.abs(w[(x < 0.0) | (x > 8.0)])) == 0.0
        # trapezoid integral of f = w/dx over the grid equals 1
        assert abs(np.sum(w / grid.dx) * grid.dx - 1.0) < 1e-10


def test_quadrature_recovers_generator_exactly():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    spec = phase_spec()
    ham = build_total_hamiltonian(spec, window, grid)
    g, w = ham.terms[0]
    np.testing.assert_allclose(
        sum((w[j] / grid.dx) * g * grid.dx for j in range(grid.n_points)),
        g,
        atol=1e-10,
    )


def test_window_overlap_rejected():
    grid = default_grid()
    window = InteractionWindow(start=-2.0, length=8.0)
    with pytest.raises(ValueError, match="overlaps"):
        build_total_hamiltonian(phase_spec(), window, grid, clock_support=(-8.0, 0.0))


# --- propagation -----------------------------------------------------------------

def test_free_clock_translates_by_t():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    ham = build_total_hamiltonian(
        EngineSpec(h=np.zeros((1, 1)), u=np.eye(1)), window, grid
    )
    state = gaussian_clock_state(grid, (-8.0, 0.0))
    psi = state.amplitudes[None, :].copy()
    out = propagate(psi, ham, 12.0, 2.0**-6)
    x = grid.positions()
    mean0 = float(np.sum(x * np.abs(psi[0]) ** 2))
    mean1 = float(np.sum(x * np.abs(out[0]) ** 2))
    assert abs(mean1 - (mean0 + 12.0)) < grid.dx
    assert abs(np.linalg.norm(out) - 1.0) < 1e-10


def test_identity_interaction_reduces_to_free_engine_evolution():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    h_e = np.diag([0.0, 1.0])
    ham = build_total_hamiltonian(EngineSpec(h=h_e, u=np.eye(2)), window, grid)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    vec = np.array([0.6, 0.8], dtype=complex)
    psi = np.outer(vec, clock.amplitudes)
    out = propagate(psi, ham, 4.0, 2.0**-6)
    rho_e = out @ out.conj().T
    expected = evolve(np.outer(vec, vec.conj()), h_e, 4.0)
    assert trace_norm_distance(rho_e, expected) < 1e-10


def test_propagate_rejects_fractional_steps():
    grid = default_grid(64)
    ham = build_total_hamiltonian(
        phase_spec(), InteractionWindow(start=0.0, length=8.0), grid
    )
    psi = np.zeros((2, 64), dtype=complex)
    psi[0, 3] = 1.0
    with pytest.raises(ValueError, match="integer"):
        propagate(psi, ham, 1.0, 0.3)


def test_second_order_convergence_in_dt():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    spec = phase_spec()
    ham = build_total_hamiltonian(spec, window, grid)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    vec = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    psi0 = np.outer(vec, clock.amplitudes)
    t = 8.0

    def deviation(dt):
        coarse = propagate(psi0, ham, t, dt)
        fine = propagate(psi0, ham, t, dt / 8.0)
        return np.linalg.norm(coarse - fine)

    errs = [deviation(2.0**-k) for k in (4, 5, 6)]
    for a, b in zip(errs, errs[1:]):
        assert 2.0 < a / b < 8.0  # dt^2 within a factor of two


# --- crossing report --------------------------------------------------------------

def test_crossing_identity_target():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    spec = EngineSpec(h=np.diag([0.0, 1.0]), u=np.eye(2))
    report = crossing_report(
        spec, window, grid, gaussian_clock_state(grid, (-8.0, 0.0)), plus_state(), 24.0, 2.0**-6
    )
    assert report.engine_error <= 1e-3
    assert report.clock_error <= 1e-3
    assert report.product_error <= 1e-3


def test_crossing_phase_gate():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    report = crossing_report(
        phase_spec(), window, grid, gaussian_clock_state(grid, (-8.0, 0.0)), plus_state(), 24.0, 2.0**-6
    )
    assert report.engine_error <= 1e-3
    assert report.tau == pytest.approx(16.0)


def test_crossing_rejects_incomplete_crossing():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    with pytest.raises(ValueError, match="crossing span"):
        crossing_report(phase_spec(), window, grid, clock, plus_state(), 10.0, 2.0**-6)


def test_crossing_mixed_two_point_clock():
    # a classical mixture of two lattice deltas satisfies the same bounds
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    mixture = [(0.5, point_clock_state(grid, -6.0)), (0.5, point_clock_state(grid, -2.0))]
    report = crossing_report(phase_spec(), window, grid, mixture, plus_state(), 24.0, 2.0**-6)
    assert report.engine_error <= 1e-3
    assert report.clock_error <= 1e-3
    assert report.product_error <= 1e-3


def test_crossing_state_independence():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    spec = phase_spec()
    narrow = gaussian_clock_state(grid, (-8.0, 0.0), sigma=0.3)
    wide = gaussian_clock_state(grid, (-8.0, 0.0), sigma=0.8)
    rho_n, _ = reduced_states_after(spec, window, grid, narrow, plus_state(), 24.0, 2.0**-6)
    rho_w, _ = reduced_states_after(spec, window, grid, wide, plus_state(), 24.0, 2.0**-6)
    assert trace_norm_distance(rho_n, rho_w) <= 2e-3


def test_clock_spectrum_not_degraded():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    mixture = two_bump_clock_mixture(grid, (-8.0, 0.0))
    _, rho_c = reduced_states_after(phase_spec(), window, grid, mixture, plus_state(), 24.0, 2.0**-6)
    spectrum = np.sort(np.linalg.eigvalsh(rho_c))[::-1]
    initial = np.zeros_like(spectrum)
    initial[:2] = 0.5  # two equally weighted orthogonal bumps
    assert np.max(np.abs(spectrum - initial)) <= 1e-3


def test_clock_error_improves_with_finer_dt():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    errs = [
        crossing_report(phase_spec(), window, grid, clock, plus_state(), 24.0, dt).clock_error
        for dt in (2.0**-4, 2.0**-6)
    ]
    assert errs[1] < errs[0]


def test_two_sequential_windows_compose():
    # non-commuting pair so the crossing order matters
    grid = default_grid()
    h_e = np.zeros((2, 2))
    g1 = 0.7 * np.array([[0.0, 1.0], [1.0, 0.0]])
    g2 = 1.1 * np.array([[0.0, -1.0j], [1.0j, 0.0]])
    w1 = InteractionWindow(start=0.0, length=6.0)
    w2 = InteractionWindow(start=6.0, length=6.0)
    ham = sequential_hamiltonian(h_e, [(g1, w1), (g2, w2)], grid)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    vec = np.array([1.0, 0.0], dtype=complex)
    psi = np.outer(vec, clock.amplitudes)
    t = 30.0
    out = propagate(psi, ham, t, 2.0**-6)
    rho_e = out @ out.conj().T
    u1 = scipy.linalg.expm(-1j * g1)
    u2 = scipy.linalg.expm(-1j * g2)
    rho0 = np.outer(vec, vec.conj())
    target = u2 @ u1 @ rho0 @ u1.conj().T @ u2.conj().T  # h_e = 0, no free part
    assert trace_norm_distance(rho_e, target) <= 2e-3
    assert np.max(np.abs(u2 @ u1 - u1 @ u2)) > 0.1  # ordering genuinely matters


def test_energy_bookkeeping_along_trajectory():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    spec = phase_spec()
    ham = build_total_hamiltonian(spec, window, grid)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    vec = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    psi0 = np.outer(vec, clock.amplitudes)

    samples = []

    def observer(t, psi):
        samples.append(
            (
                t,
                engine_energy(psi, ham),
                clock_momentum(psi, grid),
                interaction_energy(psi, ham),
            )
        )

    propagate(psi0, ham, 24.0, 2.0**-5, observer=observer)
    e_engine = np.array([s[1] for s in samples])
    p_clock = np.array([s[2] for s in samples])
    h_int = np.array([s[3] for s in samples])

    # the engine energy is conserved exactly by every split sub-step
    assert np.max(np.abs(e_engine - e_engine[0])) < 1e-8
    # mid-crossing the clock momentum compensates the interaction energy,
    # so only the total is conserved along the trajectory
    total = e_engine + p_clock + h_int
    assert np.max(np.abs(total - total[0])) < 1e-3
    assert np.max(np.abs(h_int)) > 1e-2  # the interaction term really lights up
    # after the crossing the clock momentum is restored
    assert abs(p_clock[-1] - p_clock[0]) < 1e-3


def test_crossing_span_helper():
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    assert crossing_span(clock, window) == pytest.approx(16.0)


def test_crossing_mixture_kernel_matches_full_simulation():
    # engine = two resonant qubits with a partial swap inside the degenerate
    # block; compare the position-mixture reduction against the simulation
    from autoclock.thermo import mixture_reduced_dynamics

    h_ub = np.kron(np.diag([0.0, 1.0]), np.eye(2)) + np.kron(np.eye(2), np.diag([0.0, 1.0]))
    swap4 = np.eye(4)[[0, 2, 1, 3]]
    gen = 0.6 * (np.pi / 2.0) * (np.eye(4) - swap4)
    u = scipy.linalg.expm(-1j * gen)
    spec = EngineSpec(h=h_ub, u=u)
    grid = default_grid()
    window = InteractionWindow(start=0.0, length=8.0)
    clock = gaussian_clock_state(grid, (-8.0, 0.0))
    vec = np.kron([1.0, 0.0], [0.0, 1.0]).astype(complex)  # pure |01>
    rho0 = np.outer(vec, vec.conj())
    kernel = crossing_mixture_kernel(spec, window, grid, clock)
    for t in (12.0, 24.0):  # mid-crossing and completed
        rho_sim, _ = reduced_states_after(spec, window, grid, clock, rho0, t, 2.0**-6)
        rho_mix = mixture_reduced_dynamics(rho0, kernel, t)
        assert trace_norm_distance(rho_sim, rho_mix) <= 1e-3
