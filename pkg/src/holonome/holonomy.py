"""Discrete Wilczek-Zee transport over sampled eigenframes.

A path is a sequence of orthonormal frames ``F_k`` (columns span the tracked
eigenspace). One transport step multiplies by the unitary polar factor of
``F_{k+1}^dag F_k``; the product converges to the path-ordered exponential
of the connection with an even error expansion, so a single Richardson step
on every-other-sample paths lifts it to fourth order.

Sign convention: each step contributes ``<chi_{k+1}|chi_k>``, which tends to
``exp(-int <chi|d chi>)``. That is the phase solving the adiabatic
Schrodinger equation, and it is the convention used for reported Berry
phases as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numerics import ordered_product, polar_unitary

SINGULAR_TOL = 1e-8

# Bloch directions of the Z-gate loop -Z -> -X -> Z -> Y -> -Z, written for
# the +1 state chi_0 of n.sigma, with the boundary states fixed along the way.
_S2 = 1 / np.sqrt(2)
_Z_LOOP_AXES = ((0, 0, 1), (1, 0, 0), (0, 0, -1), (0, -1, 0), (0, 0, 1))
_Z_LOOP_STATES = (
    # (chi_0, chi_1) at each junction
    ((1, 0), (0, 1)),
    ((_S2, _S2), (_S2, -_S2)),
    ((0, 1), (1, 0)),
    ((_S2, -1j * _S2), (_S2, 1j * _S2)),
    ((1, 0), (0, 1)),
)
INTERPOLATIONS = ("linear", "trig")


class OrthogonalSubspaceError(ValueError):
    """Adjacent or endpoint subspaces have a singular overlap."""


@dataclass(frozen=True)
class EigenFramePath:
    """Sampled frames of one eigenspace; ``frames`` has shape (K, N, d)."""

    times: np.ndarray
    frames: np.ndarray
    single_valued: bool = False

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=complex)
        if f.ndim == 2:
            f = f[:, :, None]
        object.__setattr__(self, "frames", f)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        if len(f) < 2 or len(self.times) != len(f):
            raise ValueError("need at least two samples with matching times")
        gram = np.matmul(np.conj(np.swapaxes(f, 1, 2)), f)
        if np.max(np.abs(gram - np.eye(f.shape[2]))) > 1e-12:
            raise ValueError("frames are not orthonormal")
        if self.single_valued and np.max(np.abs(f[-1] - f[0])) > 1e-12:
            raise ValueError("closed path frames must return to the initial frame")

    @property
    def dim(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class HolonomyMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if np.max(np.abs(m @ np.conj(m).T - np.eye(len(m)))) > 1e-9:
            raise ValueError("holonomy is not unitary")

    def phases(self) -> np.ndarray:
        """Arguments of the diagonal in [0, 2 pi)."""
        return np.mod(np.angle(np.diag(self.matrix)), 2 * np.pi)


def _step_factors(frames: np.ndarray) -> np.ndarray:
    ov = np.matmul(np.conj(np.swapaxes(frames[1:], 1, 2)), frames[:-1])
    u, s, vh = np.linalg.svd(ov)
    bad = np.nonzero(s.min(axis=1) < SINGULAR_TOL)[0]
    if len(bad):
        raise OrthogonalSubspaceError(f"singular overlap between samples {bad[0]} and {bad[0] + 1}")
    return np.matmul(u, vh)


def _chain(frames: np.ndarray) -> np.ndarray:
    return ordered_product(_step_factors(frames))


def transport(path: EigenFramePath, richardson: bool = True) -> HolonomyMatrix:
    """Discrete parallel transport, expressed in the final frame's basis.

    For a closed single-valued path this is the holonomy in the initial frame.
    """
    c = _chain(path.frames)
    if richardson and len(path.frames) >= 5 and (len(path.frames) - 1) % 2 == 0:
        c2 = _chain(path.frames[::2])
        c = polar_unitary(c + (c - c2) / 3.0)
    return HolonomyMatrix(c)


def berry_phase_segment(states: np.ndarray) -> complex | np.ndarray:
    """-int <chi|d chi> over one sampled segment, on the principal branch.

    ``states`` has shape (K, N) for one state or (K, N, m) for m states, in
    which case an array of m values is returned.
    """
    st = np.asarray(states, dtype=complex)
    single = st.ndim == 2
    if single:
        st = st[:, :, None]
    ov = np.einsum("kim,kim->km", np.conj(st[1:]), st[:-1])
    phase = np.angle(ov).sum(axis=0)
    wrapped = np.angle(np.exp(1j * phase))
    wrapped = np.where(wrapped <= -np.pi + 1e-12, np.pi, wrapped)
    out = 1j * wrapped
    return complex(out[0]) if single else out


def most_parallel_frame(initial: np.ndarray, final_subspace: np.ndarray) -> np.ndarray:
    """Basis of ``final_subspace`` closest to ``initial`` (polar factor of the overlap)."""
    ini = np.asarray(initial, dtype=complex)
    fin = np.asarray(final_subspace, dtype=complex)
    if ini.ndim == 1:
        ini, fin = ini[:, None], fin.reshape(len(fin), -1)
    ov = np.conj(fin).T @ ini
    if np.linalg.svd(ov, compute_uv=False).min() < SINGULAR_TOL:
        raise OrthogonalSubspaceError("open-path holonomy undefined: subspaces are orthogonal")
    return fin @ polar_unitary(ov)


# closed-form frames for the Z-gate loop ---------------------------------------

def _chart_vectors(n: np.ndarray, sign: int) -> np.ndarray:
    """Normalized eigenvectors of n.sigma (eigenvalue sign*|n|) from one smooth chart."""
    r = np.linalg.norm(n, axis=-1)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    if sign > 0:
        charts = (np.stack([r + nz, nx + 1j * ny], -1), np.stack([nx - 1j * ny, r - nz], -1))
    else:
        charts = (np.stack([nz - r, nx + 1j * ny], -1), np.stack([nx - 1j * ny, -(r + nz)], -1))
    best = max(charts, key=lambda c: np.linalg.norm(c, axis=-1).min())
    return best / np.linalg.norm(best, axis=-1, keepdims=True)


def _loop_direction(s: np.ndarray, a, b, interp: str) -> np.ndarray:
    if interp == "linear":
        f, g = 1 - s, s
    elif interp == "trig":
        f, g = np.cos(0.5 * np.pi * s), np.sin(0.5 * np.pi * s)
    else:
        raise ValueError(f"interp must be one of {INTERPOLATIONS}")
    return f[:, None] * np.asarray(a, float) + g[:, None] * np.asarray(b, float)


def appendix_b_linear_frames(s, segment: int, interp: str = "linear") -> np.ndarray:
    """Eigenvectors chi_0, chi_1 of the Z-gate loop on ``segment`` (1..4).

    Returns shape (len(s), 2, 2), column j holding chi_j. Each state is a smooth
    chart vector times exp(i omega(s)) with omega linear in s and fixed by the
    junction states, so segment 1 reproduces omega_0 = 0 and omega_1 = pi s.
    """
    if segment not in (1, 2, 3, 4):
        raise ValueError("segment must be 1..4")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("s must lie in [0, 1]")
    a, b = _Z_LOOP_AXES[segment - 1], _Z_LOOP_AXES[segment]
    ends = np.array([0.0, 1.0])
    out = np.empty((len(s), 2, 2), dtype=complex)
    for j, sign in enumerate((1, -1)):
        v = _chart_vectors(_loop_direction(s, a, b, interp), sign)
        v_end = _chart_vectors(_loop_direction(ends, a, b, interp), sign)
        w0 = np.angle(np.vdot(v_end[0], np.array(_Z_LOOP_STATES[segment - 1][j])))
        w1 = np.angle(np.vdot(v_end[1], np.array(_Z_LOOP_STATES[segment][j])))
        delta = np.angle(np.exp(1j * (w1 - w0)))
        if delta <= -np.pi + 1e-12:
            delta = np.pi
        out[:, :, j] = v * np.exp(1j * (w0 + delta * s))[:, None]
    return out


@dataclass(frozen=True)
class ZLoopResult:
    holonomy: HolonomyMatrix
    berry_phases: np.ndarray  # shape (4, 2): segment x state


def z_gate_holonomy(interp: str = "linear", samples: int = 8193) -> ZLoopResult:
    """Ground-space holonomy of the Z-gate loop with G_tilde = Z.

    The ground space of -(n.sigma) (x) Z is spanned by chi_0|0> and chi_1|1>,
    which is the frame transported here.
    """
    if samples < 3:
        raise ValueError("need at least three samples per segment")
    s = np.linspace(0.0, 1.0, samples)
    pieces, berry = [], []
    for seg in range(1, 5):
        chi = appendix_b_linear_frames(s, seg, interp)
        berry.append(berry_phase_segment(chi))
        frame = np.zeros((samples, 4, 2), dtype=complex)
        frame[:, 0::2, 0] = chi[:, :, 0]
        frame[:, 1::2, 1] = chi[:, :, 1]
        pieces.append(frame if seg == 1 else frame[1:])
    frames = np.concatenate(pieces)
    times = np.linspace(0.0, 4.0, len(frames))
    path = EigenFramePath(times, frames, single_valued=True)
    return ZLoopResult(transport(path), np.array(berry))


# numeric eigenframes ------------------------------------------------------------

def eigenframes(hamiltonians: np.ndarray, sector: int) -> np.ndarray:
    """Continuity-fixed frames of the negative (sector 0) or positive (1) eigenspace."""
    w, v = np.linalg.eigh(hamiltonians)
    d = hamiltonians.shape[-1] // 2
    frames = v[:, :, :d] if sector == 0 else v[:, :, d:]
    out = np.empty_like(frames)
    out[0] = frames[0]
    for k in range(1, len(frames)):
        ov = np.conj(frames[k]).T @ out[k - 1]
        out[k] = frames[k] @ polar_unitary(ov)
    return out


def segment_transport(segment, samples: int = 2049, richardson: bool = True) -> np.ndarray:
    """Discrete adiabatic transport of a segment on ``segment.qubits``.

    Both eigenspaces are transported and recombined as sum_n Psi_n F_n(0)^dag,
    which is independent of the frames chosen at each sample.
    """
    if samples < 3:
        raise ValueError("need at least three samples")
    t = np.linspace(0.0, segment.schedule.T, samples)
    h = segment.hamiltonian(t)
    total = np.zeros(h.shape[1:], dtype=complex)
    for sector in (0, 1):
        frames = eigenframes(h, sector)
        c = transport(EigenFramePath(t, frames), richardson).matrix
        total += frames[-1] @ c @ np.conj(frames[0]).T
    return total
