"""Finite-dimensional operator algebra used by every other module.

Conventions (natural units throughout the package):
    hbar = 1, k_B = 1, clock velocity v = 1, weight slope Mg = 1.

Trace distance is the UNHALVED one-norm ||a - b||_1 (sum of singular
values of the difference).  Much of the literature divides this by two;
this package does not.  Entropies use the natural logarithm.
"""

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_ATOL = 1e-12
UNITARY_ATOL = 1e-10
COMMUTATOR_ATOL = 1e-10
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-12
# eigenvalues in [-EIG_CLAMP, 0) are treated as PSD rounding noise
EIG_CLAMP = 1e-12


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, (Operator, DensityMatrix)):
        return a.entries
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def dagger(m) -> np.ndarray:
    return _as_matrix(m).conj().T


def is_hermitian(m, atol=HERMITIAN_ATOL) -> bool:
    m = _as_matrix(m)
    return np.max(np.abs(m - m.conj().T)) <= atol


def is_unitary(m, atol=UNITARY_ATOL) -> bool:
    m = _as_matrix(m)
    return np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= atol


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix with declared structure flags.

    Flags are verified at construction: `hermitian` within 1e-12,
    `unitary` within 1e-10 (entrywise), `diagonal` exactly up to 1e-12.
    """

    entries: np.ndarray
    hermitian: bool = False
    unitary: bool = False
    diagonal: bool = False

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if self.hermitian and not is_hermitian(m):
            raise ValueError("hermitian flag set but max|A - A^dag| > 1e-12")
        if self.unitary and not is_unitary(m):
            raise ValueError("unitary flag set but max|A^dag A - 1| > 1e-10")
        if self.diagonal and np.max(np.abs(m - np.diag(np.diag(m)))) > HERMITIAN_ATOL:
            raise ValueError("diagonal flag set but off-diagonal entries present")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """Positive-semidefinite unit-trace operator, validated at construction."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if abs(np.trace(m) - 1.0) > TRACE_ATOL:
            raise ValueError(f"trace {np.trace(m)} is not 1 within 1e-12")
        if not is_hermitian(m):
            raise ValueError("density matrix is not Hermitian within 1e-12")
        if np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))) < -PSD_ATOL:
            raise ValueError("density matrix has a negative eigenvalue beyond -1e-12")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered tensor factorisation of a composite space, e.g. u (x) b (x) w."""

    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        factors = tuple((str(lbl), int(d)) for lbl, d in self.factors)
        labels = [lbl for lbl, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels in {labels}")
        if any(d <= 0 for _, d in factors):
            raise ValueError("all subsystem dimensions must be positive")
        object.__setattr__(self, "factors", factors)

    @property
    def labels(self) -> tuple:
        return tuple(lbl for lbl, _ in self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def dim_of(self, label: str) -> int:
        for lbl, d in self.factors:
            if lbl == label:
                return d
        raise ValueError(f"unknown subsystem label {label!r}")


def tensor(a, b):
    """Kronecker product.  (tensor(a,b))[(i,k),(j,l)] = a[i,j] b[k,l]."""
    out = np.kron(_as_matrix(a), _as_matrix(b))
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(
            out,
            hermitian=a.hermitian and b.hermitian,
            unitary=a.unitary and b.unitary,
            diagonal=a.diagonal and b.diagonal,
        )
    return out


def partial_trace(rho, layout: SubsystemLayout, keep):
    """Trace out every factor of `layout` not listed in `keep`.

    `keep` is a label or an iterable of labels; the kept factors stay in
    layout order.  Linear in rho and trace preserving.
    """
    if isinstance(keep, str):
        keep = (keep,)
    keep = tuple(keep)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    labels = layout.labels
    for lbl in keep:
        if lbl not in labels:
            raise ValueError(f"unknown subsystem label {lbl!r}")
    m = _as_matrix(rho)
    dims = list(layout.dims)
    if m.shape[0] != int(np.prod(dims)):
        raise ValueError(
            f"state dimension {m.shape[0]} does not match layout dimension {np.prod(dims)}"
        )
    drop = [i for i, lbl in enumerate(labels) if lbl not in keep]
    work = m.reshape(dims + dims)
    for axis in sorted(drop, reverse=True):
        work = np.trace(work, axis1=axis, axis2=axis + len(dims))
        dims.pop(axis)
    out_dim = int(np.prod(dims)) if dims else 1
    out = work.reshape(out_dim, out_dim)
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(out)
    return out


def evolve(rho, h, t: float):
    """Conjugate rho by exp(-i H t); the spectrum of rho is preserved.

    H must be Hermitian (within 1e-12); the exponential is taken through
    the spectral decomposition.
    """
    hm = _as_matrix(h)
    if not is_hermitian(hm):
        raise ValueError("evolve requires a Hermitian generator")
    m = _as_matrix(rho)
    if m.shape != hm.shape:
        raise ValueError("state and Hamiltonian dimensions differ")
    vals, vecs = np.linalg.eigh(hm)
    u = (vecs * np.exp(-1j * vals * t)) @ vecs.conj().T
    out = u @ m @ u.conj().T
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(out)
    return out


def trace_norm_distance(a, b) -> float:
    """Unhalved trace distance ||a - b||_1.

    For the density-matrix arguments used throughout, the difference is
    Hermitian and the singular values are the absolute eigenvalues; a
    non-Hermitian difference falls back to an SVD.
    """
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise ValueError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    d = ma - mb
    if np.max(np.abs(d - d.conj().T)) <= 1e-10 * max(1.0, np.max(np.abs(d))):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))
    return float(np.sum(np.linalg.svd(d, compute_uv=False)))


def von_neumann_entropy(rho) -> float:
    """-sum(lam ln lam) over the spectrum, with 0 ln 0 = 0, in nats."""
    m = _as_matrix(rho)
    vals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if np.min(vals) < -EIG_CLAMP:
        raise ValueError(
            f"eigenvalue {np.min(vals)} below the PSD clamp; not a density matrix"
        )
    vals = np.where(vals < 0.0, 0.0, vals)
    pos = vals[vals > 0.0]
    s = float(-np.sum(pos * np.log(pos)))
    # an eigenvalue at 1 + O(1e-12) leaves the same-size negative residue
    return 0.0 if -1e-10 < s < 0.0 else s


def thermal_state(h, temperature: float):
    """Gibbs state exp(-H/T) / Z at temperature T (k_B = 1).

    Energies are shifted by the ground-state energy before exponentiating
    so that large spectra do not overflow.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    hm = _as_matrix(h)
    if not is_hermitian(hm):
        raise ValueError("thermal_state requires a Hermitian Hamiltonian")
    vals, vecs = np.linalg.eigh(hm)
    w = np.exp(-(vals - vals.min()) / temperature)
    w /= w.sum()
    return DensityMatrix((vecs * w) @ vecs.conj().T)


def free_energy(rho, h, temperature: float) -> float:
    """F(rho) = Tr[H rho] - T S(rho); minimised by the Gibbs state at T."""
    m = _as_matrix(rho)
    hm = _as_matrix(h)
    if m.shape != hm.shape:
        raise ValueError("state and Hamiltonian dimensions differ")
    energy = float(np.real(np.trace(hm @ m)))
    return energy - temperature * von_neumann_entropy(m)


# ---------------------------------------------------------------------------
# random test objects (shared by the property suites and the law scenarios)

def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density_matrix(dim: int, rng: np.random.Generator, rank=None) -> np.ndarray:
    rank = dim if rank is None else rank
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = a @ a.conj().T
    return m / np.real(np.trace(m))
