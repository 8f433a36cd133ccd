"""Clock-driven engine dynamics on a periodic position grid.

The clock is a continuous pointer with Hamiltonian P_c (velocity 1), so
its wavefunction translates rigidly to the right.  A static interaction

    H_int = sum_j  f_j * G (x) |x_j><x_j|

couples a Hermitian generator G on the engine to the clock position; as
the clock crosses the interaction window it deposits exactly the unitary
exp(-iG) on the engine, provided [G, H_e] = 0.

Discretisation: periodic lattice of n points (no wrap-around allowed
through the clock support), momentum diagonal in the discrete Fourier
basis, and second-order Strang splitting per time step:

    half step of the position-diagonal part  exp(-i (H_e + f_j G) dt/2)
    full spectral step of P_c                FFT, phase, inverse FFT
    half step of the position-diagonal part

The window profile is sampled at the nodes and renormalised so that
sum_j f(x_j) dx = 1 exactly; the generator accumulated over a full
crossing is then G itself, independent of the grid.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .operators import (
    COMMUTATOR_ATOL,
    DensityMatrix,
    Operator,
    is_hermitian,
    is_unitary,
    trace_norm_distance,
)
from .util import cluster_indices, ordered_map


class BranchCutWarning(UserWarning):
    """A unitary eigenvalue sits on the logarithm branch cut (phase pi)."""


@dataclass(frozen=True)
class ClockGrid:
    """Periodic 1-D position lattice for the clock."""

    n_points: int
    period: float
    origin: float = 0.0

    def __post_init__(self):
        n = self.n_points
        if n < 64 or (n & (n - 1)) != 0:
            raise ValueError("n_points must be a power of two and at least 64")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def dx(self) -> float:
        return self.period / self.n_points

    def positions(self) -> np.ndarray:
        return self.origin + self.dx * np.arange(self.n_points)

    def wavenumbers(self) -> np.ndarray:
        """Momentum eigenvalues 2 pi k / period in FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)


@dataclass(frozen=True)
class ClockState:
    """Normalised clock wavefunction with declared position support."""

    grid: ClockGrid
    amplitudes: np.ndarray
    support: tuple

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).copy()
        if amp.shape != (self.grid.n_points,):
            raise ValueError("amplitude vector does not match the grid")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("clock amplitudes must be normalised to 1 within 1e-12")
        a, b = float(self.support[0]), float(self.support[1])
        if b < a:
            raise ValueError("support interval is reversed")
        x = self.grid.positions()
        outside = (x < a - 1e-9) | (x > b + 1e-9)
        if np.any(np.abs(amp[outside]) > 1e-12):
            raise ValueError("clock amplitude leaks outside the declared support")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "support", (a, b))


def gaussian_clock_state(grid: ClockGrid, support, sigma=None, center=None) -> ClockState:
    """Gaussian wavepacket truncated at 5 sigma (and at the support edges)."""
    a, b = float(support[0]), float(support[1])
    if center is None:
        center = 0.5 * (a + b)
    if sigma is None:
        sigma = (b - a) / 10.0
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = grid.positions()
    amp = np.exp(-((x - center) ** 2) / (4.0 * sigma**2)).astype(complex)
    amp[(x < a) | (x > b)] = 0.0
    amp[np.abs(x - center) > 5.0 * sigma] = 0.0
    norm = np.linalg.norm(amp)
    if norm == 0:
        raise ValueError("support does not contain any grid point")
    return ClockState(grid, amp / norm, (a, b))


def point_clock_state(grid: ClockGrid, x: float) -> ClockState:
    """Lattice delta at the grid point nearest to x."""
    positions = grid.positions()
    j = int(np.argmin(np.abs(positions - x)))
    amp = np.zeros(grid.n_points, dtype=complex)
    amp[j] = 1.0
    return ClockState(grid, amp, (positions[j], positions[j]))


def two_bump_clock_mixture(grid: ClockGrid, support, sigma=None):
    """Equal mixture of two displaced Gaussians inside the same support."""
    a, b = float(support[0]), float(support[1])
    width = b - a
    if sigma is None:
        sigma = width / 20.0
    left = gaussian_clock_state(grid, support, sigma=sigma, center=a + 0.25 * width)
    right = gaussian_clock_state(grid, support, sigma=sigma, center=a + 0.75 * width)
    return [(0.5, left), (0.5, right)]


@dataclass(frozen=True)
class InteractionWindow:
    """Position interval of length L carrying the normalised profile f."""

    start: float
    length: float
    profile: str = "gaussian"

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("window length must be positive")
        if self.profile not in ("gaussian", "rectangular"):
            raise ValueError(f"unknown window profile {self.profile!r}")

    @property
    def end(self) -> float:
        return self.start + self.length

    def weights(self, grid: ClockGrid) -> np.ndarray:
        """Nodal quadrature weights w_j = f(x_j) dx, renormalised to sum 1."""
        x = grid.positions()
        inside = (x >= self.start) & (x <= self.end)
        w = np.zeros(grid.n_points)
        if self.profile == "rectangular":
            w[inside] = 1.0
        else:
            center = self.start + 0.5 * self.length
            sigma = self.length / 10.0
            w[inside] = np.exp(-((x[inside] - center) ** 2) / (2.0 * sigma**2))
            w[np.abs(x - center) > 5.0 * sigma] = 0.0
        total = w.sum()
        if total <= 0:
            raise ValueError("window does not contain any grid point")
        return w / total

    def cumulative_profile(self, grid: ClockGrid):
        """Callable F with F(x) = integral of the profile up to x.

        For the Gaussian profile this is the (truncated, renormalised)
        error-function antiderivative; the rectangular profile is a ramp.
        Used to extract the per-position partial generators of a crossing.
        """
        if self.profile == "rectangular":
            start, end = self.start, self.end

            def ramp(x):
                return np.clip((np.asarray(x, dtype=float) - start) / (end - start), 0.0, 1.0)

            return ramp
        center = self.start + 0.5 * self.length
        sigma = self.length / 10.0
        lo = max(self.start, center - 5.0 * sigma)
        hi = min(self.end, center + 5.0 * sigma)

        def phi(x):
            return 0.5 * (1.0 + scipy.special.erf((np.asarray(x, dtype=float) - center) / (sigma * np.sqrt(2.0))))

        span = phi(hi) - phi(lo)

        def cumulative(x):
            return np.clip((phi(np.clip(x, lo, hi)) - phi(lo)) / span, 0.0, 1.0)

        return cumulative


@dataclass(frozen=True)
class EngineSpec:
    """Engine Hamiltonian and the energy-conserving target unitary."""

    h: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        u = np.asarray(self.u, dtype=complex)
        if h.shape != u.shape or h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("engine Hamiltonian and unitary must be square and equal-sized")
        if not is_hermitian(h):
            raise ValueError("engine Hamiltonian must be Hermitian within 1e-12")
        if not is_unitary(u):
            raise ValueError("engine target must be unitary within 1e-10")
        if np.max(np.abs(h @ u - u @ h)) > COMMUTATOR_ATOL:
            raise ValueError("engine target does not commute with the Hamiltonian within 1e-10")
        h = h.copy()
        u = u.copy()
        h.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.h.shape[0]


def momentum_operator(grid: ClockGrid) -> Operator:
    """Dense momentum matrix, diagonal in the discrete Fourier basis.

    exp(-i P dx) translates a lattice delta by exactly one site (cyclic).
    """
    n = grid.n_points
    f = np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)
    p = f.conj().T @ (grid.wavenumbers()[:, None] * f)
    return Operator(0.5 * (p + p.conj().T), hermitian=True)


def interaction_generator(spec: EngineSpec, atol: float = COMMUTATOR_ATOL) -> np.ndarray:
    """Hermitian G with exp(-iG) = U and [G, H_e] = 0.

    G is assembled blockwise in the eigenspaces of H_e: within each
    near-degenerate energy cluster the unitary block is diagonalised and
    its eigenphases are mapped into (-pi, pi].  An eigenvalue at exactly
    -1 is branch-ambiguous; it resolves upward to phase +pi and a
    BranchCutWarning is emitted.
    """
    h, u = spec.h, spec.u
    dim = spec.dim
    evals, evecs = np.linalg.eigh(h)
    g = np.zeros((dim, dim), dtype=complex)
    ambiguous = False
    for idx in cluster_indices(evals, tol=1e-8):
        q = evecs[:, idx]
        block = q.conj().T @ u @ q
        t, z = scipy.linalg.schur(block, output="complex")
        lam = np.diag(t)
        if np.any(np.abs(lam + 1.0) <= 1e-10):
            ambiguous = True
        theta = -np.angle(lam)
        theta = np.where(theta <= -np.pi + 1e-12, theta + 2.0 * np.pi, theta)
        g_block = (z * theta) @ z.conj().T
        g += q @ g_block @ q.conj().T
    g = 0.5 * (g + g.conj().T)
    if ambiguous:
        warnings.warn(
            "target unitary has an eigenvalue at -1; branch resolved to phase +pi",
            BranchCutWarning,
            stacklevel=2,
        )
    gvals, gvecs = np.linalg.eigh(g)
    reconstructed = (gvecs * np.exp(-1j * gvals)) @ gvecs.conj().T
    if np.max(np.abs(reconstructed - u)) > atol:
        raise ValueError("generator reconstruction failed: exp(-iG) deviates from the target")
    if np.max(np.abs(g @ h - h @ g)) > atol:
        raise ValueError("generator does not commute with the engine Hamiltonian")
    return g


@dataclass(frozen=True)
class TotalHamiltonian:
    """H = H_e (x) 1 + 1 (x) P_c + sum_terms G (x) diag(f_j).

    `terms` holds (generator, nodal weights) pairs; the weights of each
    term sum to one, and the site coupling used by the propagator is
    w_j / dx so a full crossing accumulates exactly the generator.
    """

    engine_h: np.ndarray
    grid: ClockGrid
    terms: tuple

    @property
    def engine_dim(self) -> int:
        return self.engine_h.shape[0]

    def site_potentials(self) -> np.ndarray:
        """Stack of per-site engine Hamiltonians H_e + sum w_j/dx * G."""
        n = self.grid.n_points
        out = np.broadcast_to(self.engine_h, (n, self.engine_dim, self.engine_dim)).copy()
        for g, w in self.terms:
            out += (w / self.grid.dx)[:, None, None] * g
        return out

    def interaction_dense(self) -> np.ndarray:
        n = self.grid.n_points
        de = self.engine_dim
        h_int = np.zeros((de * n, de * n), dtype=complex)
        for g, w in self.terms:
            h_int += np.kron(g, np.diag(w / self.grid.dx))
        return h_int

    def dense(self) -> np.ndarray:
        """Explicit matrix on engine (x) clock; for small diagnostics only."""
        n = self.grid.n_points
        p = momentum_operator(self.grid).entries
        out = np.kron(self.engine_h, np.eye(n)) + np.kron(np.eye(self.engine_dim), p)
        return out + self.interaction_dense()


def build_total_hamiltonian(
    spec: EngineSpec,
    window: InteractionWindow,
    grid: ClockGrid,
    clock_support=None,
) -> TotalHamiltonian:
    """Assemble the static total Hamiltonian for one interaction window."""
    if window.start < grid.origin or window.end > grid.origin + grid.period:
        raise ValueError("interaction window does not fit inside the grid")
    if clock_support is not None and window.start < clock_support[1] - 1e-12:
        raise ValueError("interaction window overlaps the clock support")
    g = interaction_generator(spec)
    return TotalHamiltonian(
        engine_h=np.asarray(spec.h, dtype=complex),
        grid=grid,
        terms=((g, window.weights(grid)),),
    )


def sequential_hamiltonian(engine_h, pairs, grid: ClockGrid) -> TotalHamiltonian:
    """Total Hamiltonian with several (generator, window) terms in a row."""
    engine_h = np.asarray(engine_h, dtype=complex)
    terms = []
    for g, window in pairs:
        g = np.asarray(g, dtype=complex)
        if np.max(np.abs(g @ engine_h - engine_h @ g)) > COMMUTATOR_ATOL:
            raise ValueError("every generator must commute with the engine Hamiltonian")
        terms.append((g, window.weights(grid)))
    return TotalHamiltonian(engine_h=engine_h, grid=grid, terms=tuple(terms))


def _half_step_blocks(ham: TotalHamiltonian, dt: float) -> np.ndarray:
    h_sites = ham.site_potentials()
    vals, vecs = np.linalg.eigh(h_sites)
    phases = np.exp(-0.5j * dt * vals)
    return np.einsum("jab,jb,jcb->jac", vecs, phases, vecs.conj())


def propagate(psi, ham: TotalHamiltonian, t: float, dt: float, observer=None):
    """Strang-split propagation of a pure engine (x) clock vector.

    `psi` has shape (engine_dim, n_points) or is the flattened vector;
    the return value matches the input shape.  t/dt must be integral.
    The optional observer is called as observer(time, psi) after every
    step (and once at time 0) with the working (dim, n) array.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    steps_f = t / dt
    steps = int(round(steps_f))
    if abs(steps_f - steps) > 1e-9:
        raise ValueError(f"t/dt = {steps_f} is not an integer step count")
    de, n = ham.engine_dim, ham.grid.n_points
    psi_in = np.asarray(psi, dtype=complex)
    flat_input = psi_in.ndim == 1
    work = psi_in.reshape(de, n).copy()
    half = _half_step_blocks(ham, dt)
    kick = np.exp(-1j * ham.grid.wavenumbers() * dt)
    if observer is not None:
        observer(0.0, work)
    for k in range(steps):
        work = np.einsum("jab,bj->aj", half, work)
        work = np.fft.ifft(np.fft.fft(work, axis=1) * kick[None, :], axis=1)
        work = np.einsum("jab,bj->aj", half, work)
        if observer is not None:
            observer((k + 1) * dt, work)
    return work.reshape(-1) if flat_input else work


def propagate_components(components, ham: TotalHamiltonian, t: float, dt: float):
    """Propagate weighted pure runs independently (threaded when allowed)."""
    weights = [w for w, _ in components]
    states = ordered_map(lambda psi: propagate(psi, ham, t, dt), [s for _, s in components])
    return list(zip(weights, states))


# --- simple expectation diagnostics ---------------------------------------

def engine_energy(psi, ham: TotalHamiltonian) -> float:
    work = np.asarray(psi).reshape(ham.engine_dim, ham.grid.n_points)
    return float(np.real(np.einsum("aj,ab,bj->", work.conj(), ham.engine_h, work)))


def clock_momentum(psi, grid: ClockGrid) -> float:
    work = np.asarray(psi).reshape(-1, grid.n_points)
    tilde = np.fft.fft(work, axis=1) / np.sqrt(grid.n_points)
    return float(np.sum(grid.wavenumbers()[None, :] * np.abs(tilde) ** 2))


def interaction_energy(psi, ham: TotalHamiltonian) -> float:
    de, n = ham.engine_dim, ham.grid.n_points
    work = np.asarray(psi).reshape(de, n)
    total = 0.0
    for g, w in ham.terms:
        coup = w / ham.grid.dx
        total += float(np.real(np.einsum("aj,ab,j,bj->", work.conj(), g, coup, work)))
    return total


def total_energy(psi, ham: TotalHamiltonian) -> float:
    return engine_energy(psi, ham) + clock_momentum(psi, ham.grid) + interaction_energy(psi, ham)


# --- crossing verification --------------------------------------------------

@dataclass(frozen=True)
class CrossingReport:
    """Deviations from the ideal crossing at time t."""

    engine_error: float
    clock_error: float
    product_error: float
    t: float
    tau: float
    dt: float
    n_points: int

    def as_dict(self) -> dict:
        return {
            "engine_error": self.engine_error,
            "clock_error": self.clock_error,
            "product_error": self.product_error,
            "t": self.t,
            "tau": self.tau,
            "dt": self.dt,
            "n_points": self.n_points,
        }


def _clock_components(clock):
    if isinstance(clock, ClockState):
        return [(1.0, clock)]
    comps = list(clock)
    total = sum(w for w, _ in comps)
    if abs(total - 1.0) > 1e-10:
        raise ValueError("clock mixture weights must sum to 1")
    return comps


def _engine_components(engine_state, dim):
    state = np.asarray(engine_state.entries if isinstance(engine_state, DensityMatrix) else engine_state)
    if state.ndim == 1:
        if state.shape != (dim,):
            raise ValueError("engine state vector has the wrong dimension")
        vec = state.astype(complex)
        return [(1.0, vec / np.linalg.norm(vec))], np.outer(vec, vec.conj())
    if state.shape != (dim, dim):
        raise ValueError("engine state has the wrong dimension")
    vals, vecs = np.linalg.eigh(state.astype(complex))
    comps = [(float(v), vecs[:, i].copy()) for i, v in enumerate(vals) if v > 1e-14]
    return comps, state.astype(complex)


def translation_matrix(grid: ClockGrid, t: float) -> np.ndarray:
    """Exact free-clock propagator exp(-i P t) on the lattice."""
    phase = np.exp(-1j * grid.wavenumbers() * t)
    return np.fft.ifft(phase[:, None] * np.fft.fft(np.eye(grid.n_points), axis=0), axis=0)


def crossing_span(clock, window: InteractionWindow) -> float:
    """Time for the slowest clock point to clear the window (K + L when adjacent)."""
    comps = _clock_components(clock)
    support_min = min(state.support[0] for _, state in comps)
    return window.end - support_min


def crossing_report(
    spec: EngineSpec,
    window: InteractionWindow,
    grid: ClockGrid,
    clock,
    engine_state,
    t: float,
    dt: float,
    require_crossed: bool = True,
) -> CrossingReport:
    """Propagate engine (x) clock and compare against the ideal crossing.

    engine_error:  reduced engine state vs exp(-i H_e t) U rho U^dag ...
    clock_error:   reduced clock state vs the translated initial state
    product_error: joint state vs the product of its reductions

    For t <= tau the crossing is incomplete and the call is rejected
    unless require_crossed=False (used for negative controls).
    """
    comps_c = _clock_components(clock)
    support_lo = min(s.support[0] for _, s in comps_c)
    support_hi = max(s.support[1] for _, s in comps_c)
    if window.start < support_hi - 1e-12:
        raise ValueError("interaction window overlaps the clock support")
    tau = window.end - support_lo
    if require_crossed:
        if t <= tau:
            raise ValueError(f"t = {t} does not exceed the crossing span tau = {tau}")
        if support_hi + t >= grid.origin + grid.period:
            raise ValueError("evolution would wrap the clock around the periodic grid")
    ham = build_total_hamiltonian(spec, window, grid, clock_support=(support_lo, support_hi))

    comps_e, rho_e0 = _engine_components(engine_state, spec.dim)
    de, n = spec.dim, grid.n_points
    runs = [
        (we * wc, np.outer(ve, cs.amplitudes))
        for we, ve in comps_e
        for wc, cs in comps_c
    ]
    evolved = propagate_components(runs, ham, t, dt)

    rho_e = np.zeros((de, de), dtype=complex)
    rho_c = np.zeros((n, n), dtype=complex)
    rho_joint = np.zeros((de * n, de * n), dtype=complex)
    for w, psi in evolved:
        rho_e += w * (psi @ psi.conj().T)
        rho_c += w * (psi.T @ psi.conj())
        flat = psi.reshape(-1)
        rho_joint += w * np.outer(flat, flat.conj())

    evals, evecs = np.linalg.eigh(spec.h)
    u_free = (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T
    target_e = u_free @ spec.u @ rho_e0 @ spec.u.conj().T @ u_free.conj().T

    rho_c0 = np.zeros((n, n), dtype=complex)
    for wc, cs in comps_c:
        rho_c0 += wc * np.outer(cs.amplitudes, cs.amplitudes.conj())
    shift = translation_matrix(grid, t)
    target_c = shift @ rho_c0 @ shift.conj().T

    return CrossingReport(
        engine_error=trace_norm_distance(rho_e, target_e),
        clock_error=trace_norm_distance(rho_c, target_c),
        product_error=trace_norm_distance(rho_joint, np.kron(rho_e, rho_c)),
        t=t,
        tau=tau,
        dt=dt,
        n_points=n,
    )


def reduced_states_after(spec, window, grid, clock, engine_state, t, dt):
    """Reduced (engine, clock) pair after the run; shares the crossing setup."""
    comps_c = _clock_components(clock)
    support = (min(s.support[0] for _, s in comps_c), max(s.support[1] for _, s in comps_c))
    ham = build_total_hamiltonian(spec, window, grid, clock_support=support)
    comps_e, _ = _engine_components(engine_state, spec.dim)
    runs = [
        (we * wc, np.outer(ve, cs.amplitudes))
        for we, ve in comps_e
        for wc, cs in comps_c
    ]
    evolved = propagate_components(runs, ham, t, dt)
    de, n = spec.dim, grid.n_points
    rho_e = np.zeros((de, de), dtype=complex)
    rho_c = np.zeros((n, n), dtype=complex)
    for w, psi in evolved:
        rho_e += w * (psi @ psi.conj().T)
        rho_c += w * (psi.T @ psi.conj())
    return rho_e, rho_c


def crossing_mixture_kernel(
    spec: EngineSpec,
    window: InteractionWindow,
    grid: ClockGrid,
    clock,
    weight_floor: float = 1e-14,
):
    """Reduced engine dynamics of a crossing as a mixture of unitaries.

    A clock component at position x has swept the window fraction
    theta(x, t) = F(x + t) - F(x) after time t (F is the cumulative
    window profile), so the engine piece conditioned on x is
    exp(-i H_e t) exp(-i theta G).  Mixing those over the clock position
    distribution reproduces the engine reduction of the full simulation
    up to discretisation error; the mixture is what makes the reduced
    entropy non-decreasing.
    """
    from .thermo import MixtureKernel

    g = interaction_generator(spec)
    cumulative = window.cumulative_profile(grid)
    h_vals, h_vecs = np.linalg.eigh(spec.h)
    g_vals, g_vecs = np.linalg.eigh(g)
    prob = np.zeros(grid.n_points)
    for w, state in _clock_components(clock):
        prob += w * np.abs(state.amplitudes) ** 2
    keep = prob > weight_floor
    positions = grid.positions()[keep]
    weights = prob[keep]
    weights = weights / weights.sum()

    def family(x, p, t):
        theta = float(cumulative(x + t) - cumulative(x))
        free = (h_vecs * np.exp(-1j * h_vals * t)) @ h_vecs.conj().T
        kick = (g_vecs * np.exp(-1j * g_vals * theta)) @ g_vecs.conj().T
        return free @ kick

    nodes = tuple((float(x), 0.0, float(w)) for x, w in zip(positions, weights))
    return MixtureKernel(nodes=nodes, family=family)
