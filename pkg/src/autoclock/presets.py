"""Named Hamiltonians, states and unitaries for compact experiment configs.

Configs reference these by name; dense matrices are written as nested
arrays of [re, im] pairs instead.
"""

import numpy as np

from .operators import thermal_state


class ConfigError(ValueError):
    """A configuration document is malformed or out of range."""


def parse_matrix(obj, context: str) -> np.ndarray:
    """Nested [re, im] pair arrays to a complex square matrix."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: matrix entries must be [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[0] != arr.shape[1] or arr.shape[2] != 2:
        raise ConfigError(
            f"{context}: expected shape (n, n, 2) of [re, im] pairs, got {arr.shape}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def encode_matrix(m: np.ndarray):
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


HAMILTONIAN_PRESETS = {
    "qubit01": np.diag([0.0, 1.0]),
    "qubit-degenerate": np.zeros((2, 2)),
    "qutrit012": np.diag([0.0, 1.0, 2.0]),
}


def resolve_hamiltonian(spec, context: str) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in HAMILTONIAN_PRESETS:
            raise ConfigError(f"{context}: unknown Hamiltonian preset {spec!r}")
        return HAMILTONIAN_PRESETS[spec].astype(complex)
    return parse_matrix(spec, context)


def resolve_unitary(spec, context: str) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "identity":
            return np.eye(2, dtype=complex)
        if spec == "hadamard":
            return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
        if spec == "flip":
            return np.array([[0, 1], [1, 0]], dtype=complex)
        if spec.startswith("phase:"):
            try:
                angle = float(spec.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"{context}: bad phase angle in {spec!r}") from exc
            return np.diag([1.0, np.exp(-1j * angle)])
        raise ConfigError(f"{context}: unknown unitary preset {spec!r}")
    return parse_matrix(spec, context)


def resolve_state(spec, h: np.ndarray, temperature: float, context: str) -> np.ndarray:
    dim = h.shape[0]
    if isinstance(spec, str):
        if spec in ("ground", "excited"):
            _, vecs = np.linalg.eigh(h)
            v = vecs[:, 0 if spec == "ground" else dim - 1]
            return np.outer(v, v.conj())
        if spec == "plus-state":
            v = np.ones(dim, dtype=complex) / np.sqrt(dim)
            return np.outer(v, v.conj())
        if spec == "maximally-mixed":
            return np.eye(dim, dtype=complex) / dim
        if spec == "gibbs":
            return np.asarray(thermal_state(h, temperature).entries)
        raise ConfigError(f"{context}: unknown state preset {spec!r}")
    return parse_matrix(spec, context)
