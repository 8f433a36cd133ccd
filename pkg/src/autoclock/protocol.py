"""Three-stage optimal state transformations with swap staircases.

Stage 1 rotates the initial subsystem state to be diagonal in the energy
basis (largest population on the lowest level).  Stage 2 walks the
diagonal populations from p to q through m ~ 1/delta_p full swaps with
freshly synthesised thermal qudits whose Gibbs distributions follow a
linear interpolation path; each step costs O(delta_p^2) in bath free
energy, so the cumulative energy change approaches the subsystem free
energy change as delta_p -> 0.  Stage 3 rotates into the target
eigenbasis.

Bath qudits are synthesised by choosing level energies E_n = -T ln r_n
(offset so min E = 0), which realises any strictly positive distribution
r as a Gibbs state at temperature T.  Each qudit is used once, so bath
bookkeeping is classical and no joint bath state is materialised.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .clock import (
    BranchCutWarning,
    ClockGrid,
    ClockState,
    EngineSpec,
    InteractionWindow,
    build_total_hamiltonian,
    gaussian_clock_state,
    propagate,
    translation_matrix,
)
from .operators import (
    DensityMatrix,
    SubsystemLayout,
    is_hermitian,
    partial_trace,
    trace_norm_distance,
    von_neumann_entropy,
)
from .thermo import ThermoLedger, audit_first_law, audit_second_law
from .weight import (
    SystemSpec,
    WeightCoupledState,
    WeightDistribution,
    discrete_weight_unitary,
    momentum_unitary_family,
)


def _as_state(rho) -> np.ndarray:
    m = np.asarray(rho.entries if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square density matrix")
    return m


def _phase_fixed(vec: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(vec)))
    phase = vec[j] / abs(vec[j])
    return vec / phase


def sorted_spectral_pairs(rho, h=None):
    """Spectral pairs of rho sorted by descending eigenvalue.

    Ties (within 1e-12) are broken by ascending energy expectation when a
    Hamiltonian is supplied, and each eigenvector's global phase is fixed
    by making its largest-magnitude component real positive.
    """
    m = _as_state(rho)
    vals, vecs = np.linalg.eigh(m)
    order = list(np.argsort(-vals, kind="stable"))
    if h is not None:
        hm = np.asarray(h, dtype=complex)
        energy = [float(np.real(vecs[:, i].conj() @ hm @ vecs[:, i])) for i in range(len(vals))]
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and vals[order[i]] - vals[order[j + 1]] <= 1e-12:
                j += 1
            order[i : j + 1] = sorted(order[i : j + 1], key=lambda k: energy[k])
            i = j + 1
    populations = np.array([max(float(vals[k]), 0.0) for k in order])
    vectors = np.column_stack([_phase_fixed(vecs[:, k]) for k in order])
    return populations, vectors


def floor_distribution(p: np.ndarray, floor: float) -> np.ndarray:
    """Floor the entries at `floor` and renormalise to unit sum."""
    q = np.maximum(np.asarray(p, dtype=float), floor)
    return q / q.sum()


def regularize_target(sigma_u, floor: float):
    """Full-rank version of a target state: eigenvalues floored at `floor`
    and renormalised, eigenvectors untouched.  The trace distance to the
    input is at most 2 * dim * floor."""
    m = _as_state(sigma_u)
    dim = m.shape[0]
    if not (0.0 < floor < 1.0 / dim):
        raise ValueError("rank floor must lie in (0, 1/dim)")
    vals, vecs = np.linalg.eigh(m)
    fixed = floor_distribution(np.maximum(vals, 0.0), floor)
    out = (vecs * fixed) @ vecs.conj().T
    if isinstance(sigma_u, DensityMatrix):
        return DensityMatrix(out)
    return out


@dataclass(frozen=True)
class TransformTask:
    """Subsystem transformation request rho_u0 -> sigma_u at temperature T."""

    h_u: np.ndarray
    rho_u0: np.ndarray
    sigma_u: np.ndarray
    temperature: float
    delta_p: float
    rank_floor: float = 1e-8

    def __post_init__(self):
        h = np.asarray(self.h_u, dtype=complex)
        rho = _as_state(self.rho_u0)
        sigma = _as_state(self.sigma_u)
        if not is_hermitian(h):
            raise ValueError("subsystem Hamiltonian must be Hermitian")
        if h.shape != rho.shape or h.shape != sigma.shape:
            raise ValueError("task matrices must share one dimension")
        if not (0.0 < self.delta_p < 1.0):
            raise ValueError("delta_p must lie in (0, 1)")
        if not (0.0 < self.rank_floor < 1.0 / h.shape[0]):
            raise ValueError("rank_floor must lie in (0, 1/dim)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "h_u", h)
        object.__setattr__(self, "rho_u0", rho)
        object.__setattr__(self, "sigma_u", sigma)

    @property
    def dim(self) -> int:
        return self.h_u.shape[0]

    def energy_basis(self):
        vals, vecs = np.linalg.eigh(self.h_u)
        return vals, np.column_stack([_phase_fixed(vecs[:, i]) for i in range(self.dim)])

    def initial_pairs(self):
        return sorted_spectral_pairs(self.rho_u0, self.h_u)

    def target_pairs(self):
        sigma_reg = regularize_target(self.sigma_u, self.rank_floor)
        return sorted_spectral_pairs(sigma_reg, self.h_u)


def stage1(task: TransformTask) -> np.ndarray:
    """Unitary sending the n-th most populated eigenvector of rho_u0 to
    the n-th energy level; the subsystem becomes energy-diagonal with its
    entropy unchanged."""
    _, psi = task.initial_pairs()
    _, e_vecs = task.energy_basis()
    return e_vecs @ psi.conj().T


def stage3(task: TransformTask) -> np.ndarray:
    """Unitary rotating the energy levels into the (regularised) target
    eigenbasis; mirrors stage 1 with the roles reversed."""
    _, phi = task.target_pairs()
    _, e_vecs = task.energy_basis()
    return phi @ e_vecs.conj().T


@dataclass(frozen=True)
class StaircaseStep:
    """One swap step: the bath qudit distribution and its level energies."""

    index: int
    distribution: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.distribution, dtype=float)
        if np.any(r <= 0):
            raise ValueError("staircase distributions must be strictly positive")
        object.__setattr__(self, "distribution", r)
        object.__setattr__(self, "energies", np.asarray(self.energies, dtype=float))


def build_staircase(p, q, delta_p: float, temperature: float):
    """Steps along the straight line from p to q, each within delta_p.

    The knots are uniform with m = ceil(max|p-q| / delta_p) wherever the
    populations stay of order one, which reproduces the plain linear
    interpolation r_j = (1 - j/m) p + (j/m) q.  A component shrinking
    toward the rank floor is never more than halved per step: without
    that refinement a single swap against a near-floor level costs
    O(delta_p ln(delta_p / floor)) in bath free energy and the cumulative
    energy overhead stops being O(delta_p).  The refinement adds only
    O(ln(delta_p / min q)) extra steps.

    Step j carries bath level energies -T ln r_j, offset so min E = 0.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must have equal length")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("distributions must be strictly positive (regularise first)")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("distributions must be normalised")
    direction = q - p
    gap = float(np.max(np.abs(direction)))
    if gap == 0.0:
        return []
    uniform = delta_p / gap
    steps = []
    lam = 0.0
    j = 0
    while lam < 1.0:
        r_here = p + lam * direction
        allowed = uniform
        for n in range(p.size):
            if direction[n] < 0.0:
                allowed = min(allowed, 0.5 * r_here[n] / -direction[n])
        lam_next = 1.0 if lam + allowed >= 1.0 - 1e-12 else lam + allowed
        r = q.copy() if lam_next == 1.0 else p + lam_next * direction
        energies = -temperature * np.log(r)
        energies = energies - energies.min()
        j += 1
        steps.append(StaircaseStep(index=j, distribution=r, energies=energies))
        lam = lam_next
    return steps


@dataclass(frozen=True)
class StepLedger:
    """Classical bookkeeping for one swap against a fresh thermal qudit."""

    delta_E_u: float
    delta_E_b: float
    delta_S_u: float
    delta_S_b: float
    delta_F_u: float
    delta_F_b: float


def _shannon(r: np.ndarray) -> float:
    r = r[r > 0]
    return float(-np.sum(r * np.log(r)))


def stage2_execute(task: TransformTask, staircase, subsystem_state=None):
    """Run the swap staircase on the energy-diagonal subsystem.

    Returns the final diagonal populations and the per-step ledgers.  If
    a subsystem matrix is supplied it must already be energy-diagonal
    (stage order violation otherwise); its diagonal seeds the walk.
    """
    e_vals, e_vecs = task.energy_basis()
    if subsystem_state is not None:
        m = e_vecs.conj().T @ _as_state(subsystem_state) @ e_vecs
        if np.max(np.abs(m - np.diag(np.diag(m)))) > 1e-10:
            raise ValueError("subsystem is not energy-diagonal; run stage 1 first")
        current = np.real(np.diag(m)).astype(float)
    else:
        current, _ = task.initial_pairs()
    ledgers = []
    T = task.temperature
    for step in staircase:
        r = step.distribution
        e_b = step.energies
        # full swap: u takes the qudit's thermal distribution, the qudit
        # keeps whatever u held, so the entropy transfer is exact
        de_u = float(np.sum(task_energy_levels(task) * (r - current)))
        de_b = float(np.sum(e_b * (current - r)))
        ds_u = _shannon(r) - _shannon(current)
        ds_b = -ds_u
        ledgers.append(
            StepLedger(
                delta_E_u=de_u,
                delta_E_b=de_b,
                delta_S_u=ds_u,
                delta_S_b=ds_b,
                delta_F_u=de_u - T * ds_u,
                delta_F_b=de_b - T * ds_b,
            )
        )
        current = r.copy()
    return current, ledgers


def task_energy_levels(task: TransformTask) -> np.ndarray:
    vals, _ = np.linalg.eigh(task.h_u)
    return vals


@dataclass(frozen=True)
class ProtocolReport:
    """Outcome of one protocol run."""

    final_state: np.ndarray
    target_error: float
    ledger: ThermoLedger
    steps: int
    work: float
    work_gap: float
    first_law_residual: float
    second_law_margin: float
    weight_marginal: np.ndarray = None
    step_ledgers: tuple = field(default_factory=tuple)


def run_protocol(task: TransformTask, mu: WeightDistribution = None, free_offset: float = 0.0) -> ProtocolReport:
    """Execute the three stages and account for the work balance.

    With mu = None the engine unitary is applied exactly (ideal weight);
    otherwise every stage goes through the weight channel with the
    per-node blocks carried along, so the report includes the weight
    momentum marginal for catalysis checks.  Stage 2 is a permutation of
    energy levels acting on diagonal states and is exact either way.
    """
    p_raw, _ = task.initial_pairs()
    q_reg, _ = task.target_pairs()
    p_hat = floor_distribution(p_raw, task.rank_floor)
    staircase = build_staircase(p_hat, q_reg, task.delta_p, task.temperature)

    v1 = stage1(task)
    v3 = stage3(task)
    e_vals, e_vecs = task.energy_basis()
    rho0 = task.rho_u0

    weight_marginal = None
    if mu is None:
        rho_diag = v1 @ rho0 @ v1.conj().T
        final_pops, ledgers = stage2_execute(task, staircase, subsystem_state=rho_diag)
        rho_after2 = (e_vecs * final_pops) @ e_vecs.conj().T
        final = v3 @ rho_after2 @ v3.conj().T
    else:
        system_u = SystemSpec(h=task.h_u)
        state = WeightCoupledState.from_product(rho0, mu)
        state.apply(system_u, v1)
        # stage 2 swap against each fresh qudit, tracked per momentum node
        ledgers = _stage2_with_weight(task, staircase, state)
        state.apply(system_u, v3)
        final = state.system_state()
        weight_marginal = state.weight_marginal()

    if free_offset:
        drift = (e_vecs * np.exp(1j * e_vals * free_offset)) @ e_vecs.conj().T
        final = drift @ final @ drift.conj().T

    delta_u = float(np.real(np.trace(task.h_u @ (final - rho0))))
    heat = float(sum(step.delta_E_b for step in ledgers))
    work = -delta_u - heat
    ds_u = von_neumann_entropy(final) - von_neumann_entropy(rho0)
    ds_b = float(sum(step.delta_S_b for step in ledgers))
    ledger = ThermoLedger(
        delta_U=delta_u,
        W=work,
        Q=heat,
        delta_F_u=delta_u - task.temperature * ds_u,
        delta_S_u=ds_u,
        delta_S_b=ds_b,
        temperature=task.temperature,
        weight_mode="conservation",
    )
    target_error = trace_norm_distance(final, task.sigma_u)
    return ProtocolReport(
        final_state=final,
        target_error=target_error,
        ledger=ledger,
        steps=len(staircase),
        work=work,
        work_gap=work + ledger.delta_F_u,
        first_law_residual=audit_first_law(ledger),
        second_law_margin=audit_second_law(ledger),
        weight_marginal=weight_marginal,
        step_ledgers=tuple(ledgers),
    )


def _stage2_with_weight(task: TransformTask, staircase, state: WeightCoupledState):
    """Swap staircase through the weight channel, block by block.

    Each step embeds the per-node subsystem block with the fresh thermal
    qudit, applies the momentum-deformed swap, and traces the qudit out
    again; bath energy bookkeeping is accumulated over nodes.  Swaps
    permute energy-basis states, so diagonal blocks stay exact.
    """
    d = task.dim
    T = task.temperature
    e_vals = task_energy_levels(task)
    swap = np.zeros((d * d, d * d))
    for a in range(d):
        for b in range(d):
            swap[b * d + a, a * d + b] = 1.0
    layout = SubsystemLayout((("u", d), ("b", d)))
    ledgers = []
    for step in staircase:
        r = step.distribution
        e_b = step.energies
        h_joint = np.kron(np.diag(e_vals), np.eye(d)) + np.kron(np.eye(d), np.diag(e_b))
        system_ub = SystemSpec(h=h_joint)
        qudit = np.diag(r).astype(complex)
        u_of_p = momentum_unitary_family(system_ub, swap, state.mu.p0)
        de_u = 0.0
        de_b = 0.0
        ds_u = 0.0
        ds_b = 0.0
        new_blocks = []
        for p, w, block in zip(state.mu.momenta, state.mu.weights, state.blocks):
            joint = np.kron(block, qudit)
            u = u_of_p(p)
            joint = u @ joint @ u.conj().T
            block_after = np.asarray(partial_trace(joint, layout, "u"))
            bath_after = np.asarray(partial_trace(joint, layout, "b"))
            de_u += w * float(np.real(np.trace(np.diag(e_vals) @ (block_after - block))))
            de_b += w * float(np.real(np.trace(np.diag(e_b) @ (bath_after - qudit))))
            ds_u += w * (von_neumann_entropy(block_after) - von_neumann_entropy(block))
            ds_b += w * (von_neumann_entropy(bath_after) - von_neumann_entropy(qudit))
            new_blocks.append(block_after)
        state.blocks = new_blocks
        ledgers.append(
            StepLedger(
                delta_E_u=de_u,
                delta_E_b=de_b,
                delta_S_u=ds_u,
                delta_S_b=ds_b,
                delta_F_u=de_u - T * ds_u,
                delta_F_b=de_b - T * ds_b,
            )
        )
    return ledgers


def protocol_delta_sweep(task: TransformTask, delta_ps, mu: WeightDistribution = None):
    """Re-run the task at each delta_p; rows of (delta_p, W, dF_u, gap, steps)."""
    rows = []
    for dp in delta_ps:
        sub = TransformTask(
            h_u=task.h_u,
            rho_u0=task.rho_u0,
            sigma_u=task.sigma_u,
            temperature=task.temperature,
            delta_p=float(dp),
            rank_floor=task.rank_floor,
        )
        rep = run_protocol(sub, mu=mu)
        rows.append(
            {
                "delta_p": float(dp),
                "W": rep.work,
                "dF_u": rep.ledger.delta_F_u,
                "gap": abs(rep.work_gap),
                "steps": rep.steps,
            }
        )
    return rows


# --- full-stack execution through the clock ---------------------------------

@dataclass(frozen=True)
class ClockRunSettings:
    """Clock discretisation for the end-to-end protocol run."""

    grid: ClockGrid
    window: InteractionWindow
    clock_state: ClockState
    t: float
    dt: float
    weight_dim: int = 4
    weight_site: int = 2


@dataclass(frozen=True)
class ProtocolClockReport:
    subsystem_error: float
    engine_error: float
    clock_error: float
    exact_subsystem: np.ndarray
    clock_subsystem: np.ndarray
    work_explicit: float


def default_clock_settings(n_points: int = 512, dt: float = 2.0**-6) -> ClockRunSettings:
    grid = ClockGrid(n_points=n_points, period=64.0, origin=-16.0)
    window = InteractionWindow(start=0.0, length=8.0)
    return ClockRunSettings(
        grid=grid,
        window=window,
        clock_state=gaussian_clock_state(grid, (-8.0, 0.0)),
        t=24.0,
        dt=dt,
    )


def composed_stage_unitary(task: TransformTask):
    """Compose stage3 . swap . stage1 as one unitary on u (x) bath qudit.

    Requires the staircase to collapse to a single step (delta_p larger
    than the population gap), so one bath qudit realises all of stage 2.
    Returns the composed unitary and the bath level energies.
    """
    p_raw, _ = task.initial_pairs()
    q_reg, _ = task.target_pairs()
    p_hat = floor_distribution(p_raw, task.rank_floor)
    staircase = build_staircase(p_hat, q_reg, task.delta_p, task.temperature)
    if len(staircase) != 1:
        raise ValueError("clock execution needs a single-step staircase (raise delta_p)")
    d = task.dim
    e_b = staircase[0].energies
    swap = np.zeros((d * d, d * d))
    for a in range(d):
        for b in range(d):
            swap[b * d + a, a * d + b] = 1.0
    v = np.kron(stage3(task), np.eye(d)) @ swap @ np.kron(stage1(task), np.eye(d))
    return v, e_b, staircase[0].distribution


def run_protocol_with_clock(task: TransformTask, settings: ClockRunSettings) -> ProtocolClockReport:
    """Drive the composed stage unitary through the full clock simulation.

    The engine is u (x) bath qudit (x) cyclic weight lattice.  The engine
    unitary pairs every energy-basis transition with the matching lattice
    shift, and the engine Hamiltonian takes the total energy modulo the
    weight period so that the commutation precondition holds exactly on
    the cyclic lattice.  The subsystem reduction is compared against the
    exact one-shot application of the same engine unitary.
    """
    v_ub, e_b, r = composed_stage_unitary(task)
    d = task.dim
    e_vals = task_energy_levels(task)
    h_ub = np.kron(np.diag(e_vals), np.eye(d)) + np.kron(np.eye(d), np.diag(e_b))
    system_ub = SystemSpec(h=h_ub)
    dw = settings.weight_dim
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BranchCutWarning)
        u_e = discrete_weight_unitary(system_ub, v_ub, dw, spacing=1.0)

        # engine energy modulo the weight period (exact cyclic conservation)
        levels = np.rint(np.diag(h_ub)).astype(int)
        h_engine = np.diag(
            ((np.repeat(levels, dw) + np.tile(np.arange(dw), d * d)) % dw).astype(float)
        )
        spec = EngineSpec(h=h_engine, u=u_e)

        # exact one-shot reference
        bath0 = np.exp(-e_b / task.temperature)
        bath0 /= bath0.sum()
        weight0 = np.zeros(dw)
        weight0[settings.weight_site] = 1.0
        rho_engine = np.kron(np.kron(task.rho_u0, np.diag(bath0)), np.diag(weight0)).astype(complex)
        exact_joint = u_e @ rho_engine @ u_e.conj().T
        layout = SubsystemLayout((("u", d), ("b", d), ("w", dw)))
        exact_u = np.asarray(partial_trace(exact_joint, layout, "u"))
        h_w = np.diag(np.arange(dw, dtype=float))
        work_explicit = float(
            np.real(
                np.trace(
                    h_w
                    @ (
                        np.asarray(partial_trace(exact_joint, layout, "w"))
                        - np.diag(weight0)
                    )
                )
            )
        )

        ham = build_total_hamiltonian(
            spec, settings.window, settings.grid, clock_support=settings.clock_state.support
        )
    tau = settings.window.end - settings.clock_state.support[0]
    if settings.t <= tau:
        raise ValueError(f"t = {settings.t} does not exceed the crossing span {tau}")
    vals, vecs = np.linalg.eigh(rho_engine)
    de, n = d * d * dw, settings.grid.n_points
    rho_e = np.zeros((de, de), dtype=complex)
    rho_c = np.zeros((n, n), dtype=complex)
    for val, i in [(v_, i_) for i_, v_ in enumerate(vals) if v_ > 1e-14]:
        psi0 = np.outer(vecs[:, i], settings.clock_state.amplitudes)
        psi_t = propagate(psi0, ham, settings.t, settings.dt)
        rho_e += val * (psi_t @ psi_t.conj().T)
        rho_c += val * (psi_t.T @ psi_t.conj())
    clock_u = np.asarray(partial_trace(rho_e, layout, "u"))
    # the engine free evolution only phases the energy basis; the final
    # subsystem state is energy-diagonal so its reduction is untouched
    he_vals = np.diag(spec.h)
    free = np.exp(-1j * he_vals * settings.t)
    engine_target = (free[:, None] * exact_joint) * free.conj()[None, :]
    shift = translation_matrix(settings.grid, settings.t)
    amp0 = settings.clock_state.amplitudes
    clock_target = shift @ np.outer(amp0, amp0.conj()) @ shift.conj().T
    return ProtocolClockReport(
        subsystem_error=trace_norm_distance(clock_u, exact_u),
        engine_error=trace_norm_distance(rho_e, engine_target),
        clock_error=trace_norm_distance(rho_c, clock_target),
        exact_subsystem=exact_u,
        clock_subsystem=clock_u,
        work_explicit=work_explicit,
    )
