"""Weight-mediated implementation of arbitrary system unitaries.

The weight is an energy-storage pointer whose momentum distribution
mu_w(p) fixes the accuracy of non-energy-conserving targets.  Because
every operator applied commutes with the weight momentum, the momentum
blocks evolve autonomously and the induced system channel is exactly a
quadrature over mu_w:

    rho  ->  sum_i w_i U(p_i) rho U(p_i)^dag,
    U(p) = exp(i (p - p0) H_s) V exp(-i (p - p0) H_s),

so U(p0) is the target V itself and level permutations acting on
energy-diagonal states come out exact for any distribution.

A small cyclic position lattice ("discrete weight") cross-checks the
shift semantics of the full engine unitary when the system energy gaps
are commensurate with the lattice spacing.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .operators import (
    UNITARY_ATOL,
    DensityMatrix,
    is_hermitian,
    is_unitary,
    trace_norm_distance,
)
from .util import cluster_indices

DEGENERACY_TOL = 1e-10


def _as_state(rho) -> np.ndarray:
    m = np.asarray(rho.entries if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square density matrix")
    return m


@dataclass(frozen=True)
class SystemSpec:
    """System Hamiltonian with its spectral decomposition cached."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("system Hamiltonian must be square")
        if not is_hermitian(h):
            raise ValueError("system Hamiltonian must be Hermitian within 1e-12")
        energies, vectors = np.linalg.eigh(h)
        rebuilt = (vectors * energies) @ vectors.conj().T
        if np.max(np.abs(rebuilt - h)) > 1e-12 * max(1.0, np.max(np.abs(h))):
            raise ValueError("spectral decomposition failed to reproduce the Hamiltonian")
        h = h.copy()
        h.setflags(write=False)
        energies.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    def energy_gaps(self) -> np.ndarray:
        """Antisymmetric gap table gaps[n, j] = E_j - E_n, exact zeros inside
        each degeneracy class so degenerate terms carry no momentum phase."""
        e = self.energies
        gaps = e[None, :] - e[:, None]
        gaps[np.abs(gaps) < DEGENERACY_TOL] = 0.0
        return gaps

    def degeneracy_classes(self):
        return cluster_indices(self.energies, tol=DEGENERACY_TOL)


@dataclass(frozen=True)
class WeightDistribution:
    """Quadrature-node form of the weight momentum distribution."""

    momenta: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.momenta, dtype=float).copy()
        w = np.asarray(self.weights, dtype=float).copy()
        if p.ndim != 1 or p.shape != w.shape or p.size == 0:
            raise ValueError("momenta and weights must be matching non-empty 1-D arrays")
        if np.any(w < 0):
            raise ValueError("node weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("node weights must sum to 1 within 1e-12")
        order = np.argsort(p, kind="stable")
        p, w = p[order], w[order]
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "momenta", p)
        object.__setattr__(self, "weights", w)

    @property
    def p0(self) -> float:
        return float(np.sum(self.weights * self.momenta))

    @property
    def n_nodes(self) -> int:
        return self.momenta.size

    def width(self) -> float:
        return float(np.sqrt(np.sum(self.weights * (self.momenta - self.p0) ** 2)))

    def shifted(self, offset: float) -> "WeightDistribution":
        return WeightDistribution(self.momenta + offset, self.weights)


def delta_weight(p0: float = 0.0) -> WeightDistribution:
    return WeightDistribution(np.array([p0]), np.array([1.0]))


def gauss_hermite_weight(p0: float, sigma: float, n_nodes: int = 41, truncate: float = 6.0) -> WeightDistribution:
    """Gaussian momentum distribution on re-weighted Gauss-Hermite nodes.

    Nodes beyond `truncate` standard deviations are dropped and the
    remaining weights renormalised; symmetric truncation keeps the first
    moment at p0 exactly.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_nodes < 1:
        raise ValueError("need at least one node")
    x, w = hermgauss(n_nodes)
    p = p0 + np.sqrt(2.0) * sigma * x
    keep = np.abs(p - p0) <= truncate * sigma
    p, w = p[keep], w[keep]
    w = w / w.sum()
    return WeightDistribution(p, w)


def rescale_distribution(mu: WeightDistribution, delta: float) -> WeightDistribution:
    """Contract the nodes toward p0 by the factor delta; weights unchanged."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    p0 = mu.p0
    return WeightDistribution(p0 + delta * (mu.momenta - p0), mu.weights)


def momentum_unitary_family(system: SystemSpec, target, p0: float):
    """Momentum-conditioned unitaries p -> U(p) with U(p0) = target.

    Matrix elements in the energy basis pick up the phase
    exp(-i (p - p0) (E_j - E_n)); the family is the conjugation of the
    target by exp(i (p - p0) H_s), hence unitary and continuous in p.
    """
    v = np.asarray(target, dtype=complex)
    if v.shape != (system.dim, system.dim):
        raise ValueError("target dimension does not match the system")
    if not is_unitary(v):
        raise ValueError("target must be unitary within 1e-10")
    basis = system.vectors
    vt = basis.conj().T @ v @ basis
    gaps = system.energy_gaps()

    def u_of_p(p: float) -> np.ndarray:
        phased = vt * np.exp(-1j * (p - p0) * gaps)
        return basis @ phased @ basis.conj().T

    return u_of_p


def apply_weight_channel(rho_s, system: SystemSpec, target, mu: WeightDistribution) -> np.ndarray:
    """Channel output sum_i w_i U(p_i) rho U(p_i)^dag (ascending node order)."""
    rho = _as_state(rho_s)
    u_of_p = momentum_unitary_family(system, target, mu.p0)
    out = np.zeros_like(rho)
    for p, w in zip(mu.momenta, mu.weights):
        u = u_of_p(p)
        out += w * (u @ rho @ u.conj().T)
    return out


def channel_error(rho_s, system: SystemSpec, target, mu: WeightDistribution) -> float:
    """Trace distance between the channel output and the ideal conjugation."""
    rho = _as_state(rho_s)
    v = np.asarray(target, dtype=complex)
    ideal = v @ rho @ v.conj().T
    return trace_norm_distance(apply_weight_channel(rho, system, target, mu), ideal)


@dataclass(frozen=True)
class ChannelReport:
    output: np.ndarray
    error: float
    p0: float
    width: float
    n_nodes: int


def channel_report(rho_s, system: SystemSpec, target, mu: WeightDistribution) -> ChannelReport:
    rho = _as_state(rho_s)
    out = apply_weight_channel(rho, system, target, mu)
    v = np.asarray(target, dtype=complex)
    err = trace_norm_distance(out, v @ rho @ v.conj().T)
    return ChannelReport(output=out, error=err, p0=mu.p0, width=mu.width(), n_nodes=mu.n_nodes)


def convergence_sweep(rho_s, system: SystemSpec, target, mu: WeightDistribution, deltas):
    """Channel error after contracting mu by each delta in the sweep."""
    return [
        (float(d), channel_error(rho_s, system, target, rescale_distribution(mu, d)))
        for d in deltas
    ]


def verify_translation_invariance(system: SystemSpec, target, mu: WeightDistribution, rho_s=None) -> float:
    """Bound on translation-invariance violations.

    Checks (a) that the weight momentum marginal is conserved node by
    node (each momentum block evolves unitarily, so the per-node trace
    must stay 1), and (b) that shifting every node together with p0
    leaves the channel output unchanged.  Returns the worst deviation.
    """
    if rho_s is None:
        probes = [np.eye(system.dim, dtype=complex) / system.dim]
        e0 = system.vectors[:, 0]
        probes.append(np.outer(e0, e0.conj()))
        flat = np.ones(system.dim, dtype=complex) / np.sqrt(system.dim)
        probes.append(np.outer(flat, flat.conj()))
    else:
        probes = [_as_state(rho_s)]
    u_of_p = momentum_unitary_family(system, target, mu.p0)
    worst = 0.0
    for rho in probes:
        for p, w in zip(mu.momenta, mu.weights):
            u = u_of_p(p)
            block = u @ rho @ u.conj().T
            worst = max(worst, abs(w * np.real(np.trace(block)) - w))
        out = apply_weight_channel(rho, system, target, mu)
        out_shifted = apply_weight_channel(rho, system, target, mu.shifted(10.0))
        worst = max(worst, trace_norm_distance(out, out_shifted))
    return worst


def two_pass_gap(rho_s, system: SystemSpec, target, mu: WeightDistribution) -> float:
    """Distance between channel(channel(rho)) and the one-shot composed target.

    The marginal composition re-draws the weight momentum, so the two
    routes agree only when the target commutes with its own momentum
    deformations (diagonal targets do); the gap is reported, not asserted.
    """
    rho = _as_state(rho_s)
    twice = apply_weight_channel(apply_weight_channel(rho, system, target, mu), system, target, mu)
    v = np.asarray(target, dtype=complex)
    composed = apply_weight_channel(rho, system, v @ v, mu)
    return trace_norm_distance(twice, composed)


class WeightCoupledState:
    """System state correlated with the weight, one block per momentum node.

    Because the dynamics is block-diagonal in the weight momentum, a
    joint state is fully described by (node weight, system block) pairs.
    Repeated channel applications act per node, which is what makes the
    weight catalytic: the momentum marginal w_i Tr[block_i] never moves.
    """

    def __init__(self, mu: WeightDistribution, blocks):
        if len(blocks) != mu.n_nodes:
            raise ValueError("one system block per momentum node required")
        self.mu = mu
        self.blocks = [np.asarray(b, dtype=complex).copy() for b in blocks]

    @classmethod
    def from_product(cls, rho_s, mu: WeightDistribution) -> "WeightCoupledState":
        rho = _as_state(rho_s)
        return cls(mu, [rho.copy() for _ in range(mu.n_nodes)])

    def apply(self, system: SystemSpec, target) -> "WeightCoupledState":
        u_of_p = momentum_unitary_family(system, target, self.mu.p0)
        self.blocks = [
            u_of_p(p) @ b @ u_of_p(p).conj().T for p, b in zip(self.mu.momenta, self.blocks)
        ]
        return self

    def system_state(self) -> np.ndarray:
        out = np.zeros_like(self.blocks[0])
        for w, b in zip(self.mu.weights, self.blocks):
            out += w * b
        return out

    def weight_marginal(self) -> np.ndarray:
        return np.array(
            [w * np.real(np.trace(b)) for w, b in zip(self.mu.weights, self.blocks)]
        )


# --- discrete (cyclic lattice) weight cross-check ---------------------------

def cyclic_shift(dim: int, k: int) -> np.ndarray:
    """Permutation matrix sending site m to site m + k (mod dim)."""
    return np.roll(np.eye(dim), k % dim, axis=0)


def discrete_weight_unitary(
    system: SystemSpec, target, weight_dim: int, spacing: float = 1.0, p0: float = 0.0
) -> np.ndarray:
    """Engine unitary on system (x) cyclic weight lattice.

    Each energy-basis element <E_n|V|E_j> is paired with a position shift
    by (E_j - E_n)/spacing sites, which is the exact lattice form of the
    momentum-generated displacement when every gap is commensurate with
    the spacing.  Incommensurate gaps are rejected.
    """
    v = np.asarray(target, dtype=complex)
    if not is_unitary(v):
        raise ValueError("target must be unitary within 1e-10")
    gaps = system.energy_gaps()
    steps = gaps / spacing
    rounded = np.rint(steps)
    if np.max(np.abs(steps - rounded)) > 1e-9:
        raise ValueError("energy gaps are not commensurate with the lattice spacing")
    basis = system.vectors
    vt = basis.conj().T @ v @ basis
    d = system.dim
    out = np.zeros((d * weight_dim, d * weight_dim), dtype=complex)
    for n in range(d):
        for j in range(d):
            if vt[n, j] == 0:
                continue
            elem = np.zeros((d, d), dtype=complex)
            elem[n, j] = vt[n, j] * np.exp(1j * p0 * gaps[n, j])
            out += np.kron(elem, cyclic_shift(weight_dim, int(rounded[n, j])))
    embed = np.kron(basis, np.eye(weight_dim))
    return embed @ out @ embed.conj().T


def cyclic_energy_defect(u_e: np.ndarray, system: SystemSpec, weight_dim: int, spacing: float = 1.0) -> float:
    """Largest matrix element of u_e between distinct cyclic energy classes.

    On the cyclic lattice the conserved quantity is the total energy
    modulo the lattice period; u_e must be block-diagonal with respect to
    it.  System energies must be commensurate with the spacing.
    """
    levels = system.energies / spacing
    rounded = np.rint(levels)
    if np.max(np.abs(levels - rounded)) > 1e-9:
        raise ValueError("system energies are not commensurate with the lattice spacing")
    classes = (rounded[:, None].astype(int) + np.arange(weight_dim)[None, :]) % weight_dim
    labels = classes.reshape(-1)
    embed = np.kron(system.vectors, np.eye(weight_dim))
    u_energy = embed.conj().T @ np.asarray(u_e, dtype=complex) @ embed
    mask = labels[:, None] != labels[None, :]
    return float(np.max(np.abs(u_energy[mask]))) if np.any(mask) else 0.0


def lattice_momentum_operator(dim: int, spacing: float = 1.0) -> np.ndarray:
    """Momentum on the cyclic weight lattice (Fourier-diagonal)."""
    kap = 2.0 * np.pi * np.fft.fftfreq(dim, d=spacing)
    f = np.fft.fft(np.eye(dim), axis=0) / np.sqrt(dim)
    p = f.conj().T @ (kap[:, None] * f)
    return 0.5 * (p + p.conj().T)
