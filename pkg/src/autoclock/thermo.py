"""Thermodynamic ledger and law audits.

Sign conventions: dU is the subsystem energy change, Q the energy change
of the bath (emitted-to-bath positive), W the energy gained by the
weight.  Energy conservation then reads dU + W + Q = 0, and the
Kelvin-Planck bound is W <= -dF_u.  Entropies are in nats.

The default weight mode obtains W from conservation (the weight pointer
itself is unbounded and discretises poorly); the explicit mode reads W
off a finite weight factor and is exercised by the cyclic-lattice
cross-check model.
"""

from dataclasses import dataclass

import numpy as np

from .operators import (
    SubsystemLayout,
    free_energy,
    is_unitary,
    partial_trace,
    thermal_state,
    von_neumann_entropy,
)
from .util import cluster_indices, ordered_map

WEIGHT_MODES = ("conservation", "explicit", "none")


@dataclass(frozen=True)
class ThermoLedger:
    """Per-run record of the quantities entering the law audits."""

    delta_U: float
    W: float
    Q: float
    delta_F_u: float
    delta_S_u: float
    delta_S_b: float
    temperature: float
    weight_mode: str = "conservation"

    def __post_init__(self):
        for name in ("delta_U", "W", "Q", "delta_F_u", "delta_S_u", "delta_S_b"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"ledger entry {name} is not finite")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def ledger_from_states(
    before,
    after,
    layout: SubsystemLayout,
    h_u,
    h_b,
    temperature: float,
    weight_mode: str = "conservation",
    h_w=None,
) -> ThermoLedger:
    """Build the ledger from joint states at the start and end of a run.

    weight_mode selects how W is obtained:
      conservation  W = -dU - Q (energy conservation of the full engine)
      explicit      W read from the 'w' factor; requires h_w and a 'w' label
      none          no weight participates, W = 0
    """
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight_mode {weight_mode!r}")
    h_u = np.asarray(h_u, dtype=complex)
    h_b = np.asarray(h_b, dtype=complex)

    u0 = np.asarray(partial_trace(before, layout, "u"))
    u1 = np.asarray(partial_trace(after, layout, "u"))
    b0 = np.asarray(partial_trace(before, layout, "b"))
    b1 = np.asarray(partial_trace(after, layout, "b"))

    delta_u = float(np.real(np.trace(h_u @ (u1 - u0))))
    q = float(np.real(np.trace(h_b @ (b1 - b0))))
    if weight_mode == "conservation":
        w = -delta_u - q
    elif weight_mode == "none":
        w = 0.0
    else:
        if h_w is None or "w" not in layout.labels:
            raise ValueError("explicit weight mode requires a 'w' factor and h_w")
        w0 = np.asarray(partial_trace(before, layout, "w"))
        w1 = np.asarray(partial_trace(after, layout, "w"))
        w = float(np.real(np.trace(np.asarray(h_w, dtype=complex) @ (w1 - w0))))

    ds_u = von_neumann_entropy(u1) - von_neumann_entropy(u0)
    ds_b = von_neumann_entropy(b1) - von_neumann_entropy(b0)
    return ThermoLedger(
        delta_U=delta_u,
        W=w,
        Q=q,
        delta_F_u=delta_u - temperature * ds_u,
        delta_S_u=ds_u,
        delta_S_b=ds_b,
        temperature=temperature,
        weight_mode=weight_mode,
    )


def audit_first_law(ledger: ThermoLedger) -> float:
    """Energy-conservation residual dU + W + Q (zero for compliant runs)."""
    return ledger.delta_U + ledger.W + ledger.Q


def audit_second_law(ledger: ThermoLedger) -> float:
    """Margin (-dF_u) - W; non-negative whenever the run assumptions hold
    (initial product state, bath initially thermal at the ledger T)."""
    return -ledger.delta_F_u - ledger.W


@dataclass(frozen=True)
class MixtureKernel:
    """Classical mixture of parameterised unitaries on the u (x) b space.

    nodes holds (x, p, weight) triples; family(x, p, t) returns the
    unitary applied for that node after time t.
    """

    nodes: tuple
    family: object

    def __post_init__(self):
        nodes = tuple((float(x), float(p), float(w)) for x, p, w in self.nodes)
        if not nodes:
            raise ValueError("kernel needs at least one node")
        if any(w < 0 for _, _, w in nodes):
            raise ValueError("kernel weights must be non-negative")
        if abs(sum(w for _, _, w in nodes) - 1.0) > 1e-12:
            raise ValueError("kernel weights must sum to 1 within 1e-12")
        object.__setattr__(self, "nodes", nodes)


def mixture_reduced_dynamics(rho_ub, kernel: MixtureKernel, t: float) -> np.ndarray:
    """Apply sum_i w_i V(x_i, p_i, t) rho V^dag; trace preserving, positive."""
    rho = np.asarray(rho_ub, dtype=complex)
    out = np.zeros_like(rho)
    for x, p, w in kernel.nodes:
        v = np.asarray(kernel.family(x, p, t), dtype=complex)
        if not is_unitary(v):
            raise ValueError("kernel family member is not unitary within 1e-10")
        out += w * (v @ rho @ v.conj().T)
    return out


def audit_entropy_monotone(before_ub, after_ub) -> float:
    """S(after) - S(before); non-negative for mixtures of unitaries."""
    return von_neumann_entropy(after_ub) - von_neumann_entropy(before_ub)


# --- randomized law-audit scenarios -----------------------------------------

@dataclass
class LawScenario:
    """One randomized compliant (or deliberately broken) audit scenario."""

    kind: str
    h_u: np.ndarray
    h_b: np.ndarray
    temperature: float
    rho_u0: np.ndarray
    kernel: MixtureKernel
    weight_mode: str


def _integer_spectrum_hamiltonian(dim: int, rng: np.random.Generator) -> np.ndarray:
    # small integer levels starting at zero; repeats give the degenerate
    # blocks that make energy-conserving kernels non-trivial
    levels = np.sort(rng.integers(0, dim + 1, size=dim)).astype(float)
    levels[0] = 0.0
    return np.diag(levels)


def _random_mixed_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = a @ a.conj().T
    return m / np.real(np.trace(m))


def _block_hermitian(evals: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random Hermitian supported on the degenerate clusters of a spectrum."""
    dim = evals.size
    a = np.zeros((dim, dim), dtype=complex)
    for idx in cluster_indices(evals, tol=1e-9):
        if len(idx) == 0:
            continue
        sub = rng.normal(size=(len(idx), len(idx))) + 1j * rng.normal(size=(len(idx), len(idx)))
        sub = 0.5 * (sub + sub.conj().T)
        a[np.ix_(idx, idx)] = sub
    return a


def _conserving_kernel(h_ub: np.ndarray, rng: np.random.Generator, n_nodes: int) -> MixtureKernel:
    evals, evecs = np.linalg.eigh(h_ub)
    generators = [_block_hermitian(evals, rng) for _ in range(n_nodes)]
    weights = rng.random(n_nodes)
    weights /= weights.sum()
    weights[-1] = 1.0 - weights[:-1].sum()

    def family(x, p, t):
        g = generators[int(round(x))]
        gvals, gvecs = np.linalg.eigh(g)
        block = (gvecs * np.exp(-1j * gvals * t)) @ gvecs.conj().T
        return evecs @ block @ evecs.conj().T

    nodes = tuple((float(i), 0.0, float(w)) for i, w in enumerate(weights))
    return MixtureKernel(nodes=nodes, family=family)


def _deformed_kernel(
    h_ub: np.ndarray, rng: np.random.Generator, n_nodes: int, bath_only_dims=None
) -> MixtureKernel:
    """Momentum-deformed conjugations of a fixed target on u (x) b.

    With bath_only_dims = (d_u, d_b) the target acts on the bath alone,
    which leaves the subsystem untouched (a cyclic protocol for u).
    """
    dim = h_ub.shape[0]
    if bath_only_dims is None:
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        gen = 0.5 * (a + a.conj().T)
    else:
        d_u, d_b = bath_only_dims
        a = rng.normal(size=(d_b, d_b)) + 1j * rng.normal(size=(d_b, d_b))
        gen = np.kron(np.eye(d_u), 0.5 * (a + a.conj().T))
    momenta = rng.normal(scale=1.0, size=n_nodes)
    weights = rng.random(n_nodes)
    weights /= weights.sum()
    weights[-1] = 1.0 - weights[:-1].sum()
    evals, evecs = np.linalg.eigh(h_ub)
    gvals, gvecs = np.linalg.eigh(gen)

    def family(x, p, t):
        target = (gvecs * np.exp(-1j * gvals * t)) @ gvecs.conj().T
        rot = (evecs * np.exp(1j * evals * p)) @ evecs.conj().T
        return rot @ target @ rot.conj().T

    nodes = tuple((0.0, float(p), float(w)) for p, w in zip(momenta, weights))
    return MixtureKernel(nodes=nodes, family=family)


def random_law_scenario(rng: np.random.Generator, kind=None) -> LawScenario:
    """Draw one compliant scenario; kind in {conserving, weighted, cyclic}."""
    if kind is None:
        kind = rng.choice(["conserving", "weighted", "cyclic"])
    d_u = int(rng.integers(2, 4))
    n_bath = int(rng.integers(1, 3))
    bath_dims = [int(rng.integers(2, 4)) for _ in range(n_bath)]
    h_u = _integer_spectrum_hamiltonian(d_u, rng)
    h_b = _integer_spectrum_hamiltonian(bath_dims[0], rng)
    for d in bath_dims[1:]:
        h_b = np.kron(h_b, np.eye(d)) + np.kron(np.eye(h_b.shape[0]), _integer_spectrum_hamiltonian(d, rng))
    d_b = h_b.shape[0]
    temperature = float(rng.uniform(0.5, 2.0))
    rho_u0 = _random_mixed_state(d_u, rng)
    h_ub = np.kron(h_u, np.eye(d_b)) + np.kron(np.eye(d_u), h_b)
    n_nodes = int(rng.integers(2, 7))
    if kind == "conserving":
        kernel = _conserving_kernel(h_ub, rng, n_nodes)
        mode = "none"
    elif kind == "weighted":
        kernel = _deformed_kernel(h_ub, rng, n_nodes)
        mode = "conservation"
    elif kind == "cyclic":
        kernel = _deformed_kernel(h_ub, rng, n_nodes, bath_only_dims=(d_u, d_b))
        mode = "conservation"
    else:
        raise ValueError(f"unknown scenario kind {kind!r}")
    return LawScenario(
        kind=kind,
        h_u=h_u,
        h_b=h_b,
        temperature=temperature,
        rho_u0=rho_u0,
        kernel=kernel,
        weight_mode=mode,
    )


def noncompliant_scenario(rng: np.random.Generator) -> LawScenario:
    """Negative control: a single unitary that moves energy off u (x) b."""
    h_u = np.diag([0.0, 1.0])
    h_b = np.diag([0.0, 1.0])
    h_ub = np.kron(h_u, np.eye(2)) + np.kron(np.eye(2), h_b)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    gen = 0.5 * (a + a.conj().T)
    # give the generator substantial weight off the energy blocks
    gen += np.diag(np.ones(3), 1) + np.diag(np.ones(3), -1)
    gvals, gvecs = np.linalg.eigh(gen)

    def family(x, p, t):
        return (gvecs * np.exp(-1j * gvals * t)) @ gvecs.conj().T

    kernel = MixtureKernel(nodes=((0.0, 0.0, 1.0),), family=family)
    return LawScenario(
        kind="noncompliant",
        h_u=h_u,
        h_b=h_b,
        temperature=1.0,
        rho_u0=_random_mixed_state(2, rng),
        kernel=kernel,
        weight_mode="none",
    )


@dataclass(frozen=True)
class ScenarioResult:
    """Audit metrics for one scenario (CSV row of the laws experiment)."""

    scenario_id: int
    kind: str
    dU: float
    W: float
    Q: float
    dF_u: float
    first_law_residual: float
    second_law_margin: float
    entropy_delta: float
    bath_free_energy_gain: float
    subadditivity_slack: float


def run_law_scenario(scenario: LawScenario, scenario_id: int = 0, t: float = 1.0) -> ScenarioResult:
    d_u = scenario.h_u.shape[0]
    d_b = scenario.h_b.shape[0]
    layout = SubsystemLayout((("u", d_u), ("b", d_b)))
    bath0 = np.asarray(thermal_state(scenario.h_b, scenario.temperature).entries)
    before = np.kron(scenario.rho_u0, bath0)
    after = mixture_reduced_dynamics(before, scenario.kernel, t)
    ledger = ledger_from_states(
        before,
        after,
        layout,
        scenario.h_u,
        scenario.h_b,
        scenario.temperature,
        weight_mode=scenario.weight_mode,
    )
    entropy_delta = audit_entropy_monotone(before, after)
    df_b = ledger.Q - scenario.temperature * ledger.delta_S_b
    return ScenarioResult(
        scenario_id=scenario_id,
        kind=scenario.kind,
        dU=ledger.delta_U,
        W=ledger.W,
        Q=ledger.Q,
        dF_u=ledger.delta_F_u,
        first_law_residual=audit_first_law(ledger),
        second_law_margin=audit_second_law(ledger),
        entropy_delta=entropy_delta,
        bath_free_energy_gain=df_b,
        subadditivity_slack=ledger.delta_S_u + ledger.delta_S_b,
    )


def run_scenario_batch(seed: int, count: int, t: float = 1.0):
    """Deterministic batch of compliant scenarios (threaded when allowed)."""
    rng = np.random.default_rng(seed)
    kinds = ["conserving", "weighted", "cyclic"]
    scenarios = [random_law_scenario(rng, kind=kinds[i % 3]) for i in range(count)]
    return ordered_map(
        lambda pair: run_law_scenario(pair[1], scenario_id=pair[0], t=t),
        list(enumerate(scenarios)),
    )
