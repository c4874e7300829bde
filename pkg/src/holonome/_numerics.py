"""Small linear-algebra kernels shared by the evolution and holonomy code."""

from __future__ import annotations

import os

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA = np.stack([SX, SY, SZ])

_GAUSS_OFFSET = 0.5 / np.sqrt(3.0)


class CapacityError(ValueError):
    """Raised when a request exceeds the configured qubit limits."""


def _limits() -> tuple[int, int]:
    raw = os.environ.get("HOLONOME_DENSE_LIMIT", "")
    if not raw:
        return 12, 20
    parts = [int(p) for p in raw.replace(",", " ").split()]
    if len(parts) == 1:
        return parts[0], max(parts[0], 20)
    return parts[0], parts[1]


def dense_limit() -> int:
    """Maximum qubit count for dense operator matrices."""
    return _limits()[0]


def state_limit() -> int:
    """Maximum qubit count for state vectors."""
    return _limits()[1]


def check_dense(n: int) -> None:
    if n > dense_limit():
        raise CapacityError(f"{n} qubits exceeds dense limit {dense_limit()}")


def check_state(n: int) -> None:
    if n > state_limit():
        raise CapacityError(f"{n} qubits exceeds state-vector limit {state_limit()}")


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """Return ``mats[-1] @ ... @ mats[0]`` using pairwise batched products."""
    mats = np.asarray(mats)
    if mats.shape[0] == 0:
        return np.eye(mats.shape[-1], dtype=complex)
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            mats = mats[:-1]
        else:
            tail = None
        mats = np.matmul(mats[1::2], mats[0::2])
        if tail is not None:
            mats = np.concatenate([mats, tail])
    return mats[0]


def expm_antihermitian(a: np.ndarray) -> np.ndarray:
    """Exponentiate a (batch of) anti-Hermitian matrices exactly via eigh."""
    k = 1j * a
    k = 0.5 * (k + np.conj(np.swapaxes(k, -1, -2)))
    w, v = np.linalg.eigh(k)
    return np.matmul(v * np.exp(-1j * w)[..., None, :], np.conj(np.swapaxes(v, -1, -2)))


def magnus_propagator(generator, t0: float, t1: float, steps: int, order: int = 4) -> np.ndarray:
    """Time-ordered exponential of an anti-Hermitian generator ``A(t)``.

    ``generator`` maps an array of times to a stack of matrices. Order 2 uses
    midpoint exponentials, order 4 the two-point Gauss Magnus step.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    h = (t1 - t0) / steps
    left = t0 + h * np.arange(steps)
    if order == 2:
        omega = h * generator(left + 0.5 * h)
    elif order == 4:
        a1 = generator(left + (0.5 - _GAUSS_OFFSET) * h)
        a2 = generator(left + (0.5 + _GAUSS_OFFSET) * h)
        comm = np.matmul(a2, a1) - np.matmul(a1, a2)
        omega = 0.5 * h * (a1 + a2) + (np.sqrt(3.0) / 12.0) * h * h * comm
    else:
        raise ValueError("order must be 2 or 4")
    return ordered_product(expm_antihermitian(omega))


def su2_exp(m: np.ndarray) -> np.ndarray:
    """exp(-i m.sigma) for a stack of real 3-vectors ``m``."""
    m = np.atleast_2d(m)
    norm = np.linalg.norm(m, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    unit = m / safe[:, None]
    c, s = np.cos(norm), np.sin(norm)
    out = np.empty((m.shape[0], 2, 2), dtype=complex)
    out[:, 0, 0] = c - 1j * s * unit[:, 2]
    out[:, 1, 1] = c + 1j * s * unit[:, 2]
    out[:, 0, 1] = -1j * s * (unit[:, 0] - 1j * unit[:, 1])
    out[:, 1, 0] = -1j * s * (unit[:, 0] + 1j * unit[:, 1])
    return out


def bloch_propagator(field, t0: float, t1: float, steps: int, order: int = 2) -> np.ndarray:
    """Propagator of H(t) = n(t).sigma where ``field`` maps times to (N, 3) vectors."""
    h = (t1 - t0) / steps
    left = t0 + h * np.arange(steps)
    if order == 2:
        m = h * field(left + 0.5 * h)
    elif order == 4:
        n1 = field(left + (0.5 - _GAUSS_OFFSET) * h)
        n2 = field(left + (0.5 + _GAUSS_OFFSET) * h)
        # [n2.s, n1.s] = 2i (n2 x n1).s, folded into the exponent of -i m.s
        m = 0.5 * h * (n1 + n2) + (np.sqrt(3.0) / 6.0) * h * h * np.cross(n2, n1)
    else:
        raise ValueError("order must be 2 or 4")
    return ordered_product(su2_exp(m))


def polar_unitary(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def phase_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """|Tr(U^dag V)| / dim, equal to one iff U and V agree up to a global phase."""
    return float(abs(np.trace(np.conj(u).T @ v)) / u.shape[0])


def max_dev_up_to_phase(u: np.ndarray, v: np.ndarray) -> float:
    overlap = np.trace(np.conj(u).T @ v)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(u * phase - v)))


def apply_local(state: np.ndarray, n: int, qubits, op: np.ndarray) -> np.ndarray:
    """Apply a k-qubit operator to ``qubits`` of an n-qubit state (qubit 0 most significant).

    Trailing axes of ``state`` beyond the first are carried along, so a matrix
    is transformed column by column.
    """
    qubits = list(qubits)
    k = len(qubits)
    if k == 0:
        return op[0, 0] * state
    extra = state.shape[1:]
    psi = state.reshape((2,) * n + extra)
    opt = op.reshape((2,) * (2 * k))
    psi = np.tensordot(opt, psi, axes=(list(range(k, 2 * k)), qubits))
    psi = np.moveaxis(psi, list(range(k)), qubits)
    return psi.reshape((-1,) + extra)
