"""Segment Hamiltonians, Schrodinger integration, and geometric-part extraction.

A segment interpolates ``H(t) = sum_b Pi_b (x) c_b(t) (f(t) P_s^b + g(t) P_e^b)``
where the ``Pi_b`` project onto computational values of control qubits and
``c_b`` is 1 or the normalization that fixes the branch spectrum to +-1.
All numerics run on the segment's support, which is a handful of qubits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from ._numerics import (
    I2, SIGMA, bloch_propagator, check_dense, magnus_propagator, ordered_product, su2_exp,
)
from .pauli_algebra import PauliOperator, PauliSum, bloch_sum, dense
from .schedules import Schedule

log = logging.getLogger(__name__)

FORMS = ("single", "controlled", "conditional_group", "general")


class ConvergenceError(RuntimeError):
    pass


class ExtractionError(RuntimeError):
    """Geometric part requested from an evolution that leaked too much."""


@dataclass(frozen=True)
class Branch:
    """One control branch: projector condition plus its two endpoints."""

    condition: tuple[tuple[int, int], ...]
    start: PauliSum
    end: PauliSum
    normalize: bool = False

    @property
    def fixed(self) -> bool:
        return self.start.equals(self.end)


@dataclass(frozen=True)
class SegmentHamiltonian:
    """A two-term interpolation segment on an ``n``-qubit register.

    For the single form, ``target``, ``a``, ``b`` and ``G_tilde`` record
    ``H = -((f a + g b).sigma)_target (x) G_tilde``; ``a`` and ``b`` are Bloch
    vectors.
    """

    n: int
    branches: tuple[Branch, ...]
    schedule: Schedule = field(default_factory=lambda: Schedule("linear", 1.0))
    form: str = "general"
    direction: str = "forward"
    label: str = ""
    target: int | None = None
    G_tilde: PauliOperator | None = None
    a: tuple[float, float, float] | None = None
    b: tuple[float, float, float] | None = None
    theta: float | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be forward or backward")
        for br in self.branches:
            cond = {q for q, _ in br.condition}
            if cond & (set(br.start.support) | set(br.end.support)):
                raise ValueError("branch terms may not act on their own control qubits")

    # geometry ------------------------------------------------------------
    @property
    def qubits(self) -> tuple[int, ...]:
        qs: set[int] = set()
        for br in self.branches:
            qs |= {q for q, _ in br.condition} | set(br.start.support) | set(br.end.support)
        if self.target is not None:
            qs.add(self.target)
        return tuple(sorted(qs))

    def reversed(self) -> "SegmentHamiltonian":
        return replace(self, direction="backward" if self.direction == "forward" else "forward")

    def with_schedule(self, schedule: Schedule) -> "SegmentHamiltonian":
        return replace(self, schedule=schedule)

    def endpoint(self, which: str) -> PauliSum:
        """Full Hamiltonian at the start or end of the run as a Pauli sum."""
        first = (which == "start") == (self.direction == "forward")
        total = None
        for br in self.branches:
            term = br.start if first else br.end
            term = _with_condition(term, br.condition)
            total = term if total is None else total + term
        return total

    @property
    def max_weight(self) -> int:
        """Largest support among the terms of the instantaneous Hamiltonian."""
        w = 0
        for br in self.branches:
            cond = {q for q, _ in br.condition}
            for s in (br.start, br.end):
                for c, op in s.terms:
                    if c != 0:
                        w = max(w, len(set(op.support) | cond))
        return w

    # dense pieces ----------------------------------------------------------
    def _local_pieces(self):
        qubits = self.qubits
        check_dense(len(qubits))
        pieces = []
        for br in self.branches:
            proj = np.eye(1 << len(qubits), dtype=complex)
            for q, val in br.condition:
                z = dense(PauliOperator.single(self.n, q, "Z"), qubits)
                proj = proj @ (np.eye(len(z)) + (1 - 2 * val) * z) / 2
            ms = proj @ br.start.dense(qubits)
            me = proj @ br.end.dense(qubits)
            pieces.append((br, proj, ms, me))
        return qubits, pieces

    def _times(self, t):
        t = np.asarray(t, dtype=float)
        T = self.schedule.T
        if self.direction == "backward":
            return T - t, -1.0
        return t, 1.0

    def hamiltonian(self, t) -> np.ndarray:
        """Stack of local Hamiltonian matrices at times ``t``."""
        _, pieces = self._local_pieces()
        return self._hamiltonian(pieces, t)[0]

    def _hamiltonian(self, pieces, t, want_derivative: bool = False):
        tt, sgn = self._times(t)
        f, g, df, dg = self.schedule.fg(tt)
        df, dg = sgn * df, sgn * dg
        f, g = np.atleast_1d(f), np.atleast_1d(g)
        df, dg = np.atleast_1d(df), np.atleast_1d(dg)
        d = pieces[0][1].shape[0]
        h = np.zeros((len(f), d, d), dtype=complex)
        dh = np.zeros_like(h)
        for br, proj, ms, me in pieces:
            term = f[:, None, None] * ms + g[:, None, None] * me
            dterm = df[:, None, None] * ms + dg[:, None, None] * me
            if br.normalize:
                rank = np.trace(proj).real
                sq = np.einsum("tij,tji->t", term, term).real / rank
                rho = np.sqrt(sq)
                drho = np.einsum("tij,tji->t", term, dterm).real / (rank * rho)
                dterm = dterm / rho[:, None, None] - term * (drho / rho ** 2)[:, None, None]
                term = term / rho[:, None, None]
            h += term
            dh += dterm
        return (h, dh) if want_derivative else (h, None)

    def spectrum_spread(self, grid: int = 257) -> float:
        """Max over the grid of the spread of |eigenvalues| (degeneracy guard)."""
        _, pieces = self._local_pieces()
        t = np.linspace(0.0, self.schedule.T, grid)
        w = np.linalg.eigvalsh(self._hamiltonian(pieces, t)[0])
        a = np.abs(w)
        return float((a.max(axis=1) - a.min(axis=1)).max())

    # two-level view for the single form -------------------------------------
    def two_level_field(self) -> Callable[[np.ndarray], np.ndarray]:
        """n(t) with H(t) = n(t).sigma, for the single form."""
        if self.form != "single":
            raise ValueError("two-level view needs the single form")
        a, b = np.array(self.a), np.array(self.b)

        def fld(t):
            tt, _ = self._times(t)
            f, g, _, _ = self.schedule.fg(tt)
            return np.atleast_1d(f)[:, None] * a + np.atleast_1d(g)[:, None] * b

        return fld

    def two_level_velocity(self) -> Callable[[np.ndarray], np.ndarray]:
        a, b = np.array(self.a), np.array(self.b)

        def vel(t):
            tt, sgn = self._times(t)
            _, _, df, dg = self.schedule.fg(tt)
            return sgn * (np.atleast_1d(df)[:, None] * a + np.atleast_1d(dg)[:, None] * b)

        return vel


def _with_condition(term: PauliSum, condition) -> PauliSum:
    out = term
    for q, val in condition:
        z = PauliOperator.single(term.n, q, "Z")
        out = out.scale(0.5) + out.times(z).scale(0.5 * (1 - 2 * val))
    return out


# constructors ----------------------------------------------------------------

def single_segment(n: int, target: int, a, b, G_tilde: PauliOperator | None = None,
                   schedule: Schedule | None = None, label: str = "", theta: float | None = None,
                   direction: str = "forward") -> SegmentHamiltonian:
    """Segment ``-(a.sigma) (x) G -> -(b.sigma) (x) G`` on ``target``."""
    G_tilde = PauliOperator.identity(n) if G_tilde is None else G_tilde
    if not G_tilde.is_hermitian or G_tilde.site(target) != "I":
        raise ValueError("G_tilde must be Hermitian and act trivially on the target")
    a = tuple(float(x) for x in a)
    b = tuple(float(x) for x in b)
    start = -bloch_sum(n, target, a, G_tilde)
    end = -bloch_sum(n, target, b, G_tilde)
    return SegmentHamiltonian(n, (Branch((), start, end),), schedule or Schedule("linear", 1.0),
                              "single", direction, label, target, G_tilde, a, b, theta)


def pauli_segment(start: PauliSum | PauliOperator | str, end: PauliSum | PauliOperator | str,
                  schedule: Schedule | None = None, form: str = "controlled", label: str = "",
                  direction: str = "forward") -> SegmentHamiltonian:
    start, end = (x if isinstance(x, PauliSum) else PauliSum.of(x) for x in (start, end))
    return SegmentHamiltonian(start.n, (Branch((), start, end),), schedule or Schedule("linear", 1.0),
                              form, direction, label)


def theta_axis(theta: float, sign: int = 1) -> tuple[float, float, float]:
    """Bloch vector of H^{theta,sign} = sign (cos theta X + sin theta Y)."""
    return (sign * math.cos(theta), sign * math.sin(theta), 0.0)


def v_theta(theta: float, sign: int = 1) -> np.ndarray:
    """V^{theta,sign} = [[1, -sign e^{-i theta}], [sign e^{i theta}, 1]] / sqrt 2."""
    return np.array([[1, -sign * np.exp(-1j * theta)], [sign * np.exp(1j * theta), 1]]) / np.sqrt(2)


def w_theta(theta: float) -> np.ndarray:
    return np.array([[0, 1j * np.exp(-1j * theta)], [-1j * np.exp(1j * theta), 0]])


# results -----------------------------------------------------------------------

@dataclass(frozen=True)
class EvolutionResult:
    unitary: np.ndarray
    qubits: tuple[int, ...]
    geometric_part: np.ndarray
    dynamical_phase: float
    diabatic_error: float
    steps: int


def local_operator(u2: np.ndarray, target: int, qubits: Sequence[int]) -> np.ndarray:
    """Embed a single-qubit matrix on ``target`` into the register ``qubits``."""
    return reduce(np.kron, [u2 if q == target else I2 for q in qubits], np.ones((1, 1), dtype=complex))


# two-level integration -----------------------------------------------------------

def evolve_two_level(field_fn: Callable[[np.ndarray], np.ndarray], T: float, steps: int = 4096,
                     tol: float = 1e-9, order: int = 2, max_steps: int = 1 << 22):
    """(U0, U1) for H(t) = n(t).sigma and -H(t) over [0, T].

    Midpoint (order 2) or Gauss-Magnus (order 4) exponentials, with step
    doubling until successive U0 differ by less than ``tol``.
    """
    prev = None
    while steps <= max_steps:
        u0 = bloch_propagator(field_fn, 0.0, T, steps, order)
        if prev is not None and np.max(np.abs(u0 - prev)) < tol:
            u1 = bloch_propagator(lambda t: -field_fn(t), 0.0, T, steps, order)
            return u0, u1
        prev = u0
        steps *= 2
    raise ConvergenceError(f"two-level evolution did not converge below {tol}")


def assemble_full(u0: np.ndarray, u1: np.ndarray, G_tilde: np.ndarray | PauliOperator) -> np.ndarray:
    """U0 (x) P0 + U1 (x) P1 with P0 = (I - G)/2, P1 = (I + G)/2, target qubit first."""
    g = dense(G_tilde) if isinstance(G_tilde, PauliOperator) else np.asarray(G_tilde)
    eye = np.eye(len(g))
    if np.allclose(g, eye) or np.allclose(g, -eye):
        raise ValueError("G_tilde proportional to identity leaves an empty projector")
    p0, p1 = (eye - g) / 2, (eye + g) / 2
    return np.kron(u0, p0) + np.kron(u1, p1)


# finite-T mode ---------------------------------------------------------------------

def _spectral_projectors(h: np.ndarray):
    w, v = np.linalg.eigh(h)
    neg, pos = v[:, w < 0], v[:, w >= 0]
    return neg @ np.conj(neg).T, pos @ np.conj(pos).T


def evolve_segment(segment: SegmentHamiltonian, steps: int = 4096, tol: float = 1e-8,
                   max_steps: int = 1 << 18) -> EvolutionResult:
    """Integrate i dU/dt = H(t) U on the segment support and split off dynamical phases."""
    qubits, pieces = segment._local_pieces()
    T = segment.schedule.T
    gen = lambda t: -1j * segment._hamiltonian(pieces, t)[0]
    prev = None
    while steps <= max_steps:
        u = magnus_propagator(gen, 0.0, T, steps, order=4)
        if prev is not None and np.max(np.abs(u - prev)) < tol:
            break
        prev = u
        steps *= 2
    else:
        raise ConvergenceError("segment evolution did not converge")
    # omega = integral of the positive eigenvalue
    xs, ws = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(0.0, T, 65)
    omega = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        ts = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
        lam = np.abs(np.linalg.eigvalsh(segment._hamiltonian(pieces, ts)[0])).max(axis=1)
        omega += 0.5 * (hi - lo) * float(lam @ ws)
    h0 = segment._hamiltonian(pieces, [0.0])[0][0]
    h1 = segment._hamiltonian(pieces, [T])[0][0]
    neg0, pos0 = _spectral_projectors(h0)
    neg1, pos1 = _spectral_projectors(h1)
    geo = np.exp(-1j * omega) * u @ neg0 + np.exp(1j * omega) * u @ pos0
    leak = max(np.linalg.norm(pos1 @ u @ neg0, 2), np.linalg.norm(neg1 @ u @ pos0, 2)) ** 2
    log.debug("segment %s: steps=%d leak=%.3e unitarity=%.1e", segment.label, steps, leak,
              np.max(np.abs(u @ np.conj(u).T - np.eye(len(u)))))
    return EvolutionResult(u, qubits, geo, omega, float(leak), steps)


def geometric_part(result: EvolutionResult, segment: SegmentHamiltonian | None = None,
                   threshold: float = 1e-4) -> np.ndarray:
    """Geometric part with dynamical phases stripped; refuses leaky evolutions."""
    if result.diabatic_error > threshold:
        raise ExtractionError(f"diabatic error {result.diabatic_error:.2e} exceeds {threshold:.1e}")
    return result.geometric_part


# exact adiabatic mode -------------------------------------------------------------

def _eigvec_forms(n: np.ndarray, sign: int):
    """Unnormalized eigenvectors of n.sigma with eigenvalue sign*|n|, two charts."""
    r = np.linalg.norm(n, axis=-1)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    if sign > 0:
        return (np.stack([r + nz, nx + 1j * ny], -1), np.stack([nx - 1j * ny, r - nz], -1))
    return (np.stack([nz - r, nx + 1j * ny], -1), np.stack([nx - 1j * ny, -(r + nz)], -1))


def _eigvec_velocity(n, dn, sign, chart):
    r = np.linalg.norm(n, axis=-1)
    dr = np.einsum("...i,...i->...", n, dn) / r
    dx, dy, dz = dn[..., 0], dn[..., 1], dn[..., 2]
    if sign > 0:
        forms = (np.stack([dr + dz, dx + 1j * dy], -1), np.stack([dx - 1j * dy, dr - dz], -1))
    else:
        forms = (np.stack([dz - dr, dx + 1j * dy], -1), np.stack([dx - 1j * dy, -(dr + dz)], -1))
    return forms[chart]


def berry_transport_two_level(segment: SegmentHamiltonian, quad_cells: int = 64) -> np.ndarray:
    """Transport of the single-form segment from smooth closed-form eigenvectors.

    Each eigenvector picks up exp(-int <phi|d phi>), the phase that solves the
    adiabatic Schrodinger equation.
    """
    fld, vel = segment.two_level_field(), segment.two_level_velocity()
    T = segment.schedule.T
    xs, ws = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, T, quad_cells + 1)
    ts = (0.5 * (edges[1:] - edges[:-1])[:, None] * xs + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
    wts = (0.5 * (edges[1:] - edges[:-1])[:, None] * ws).ravel()
    probe = np.linspace(0.0, T, 257)
    n_t, dn_t = fld(ts), vel(ts)
    u = np.zeros((2, 2), dtype=complex)
    for sign in (-1, 1):
        charts = _eigvec_forms(fld(probe), sign)
        chart = int(np.argmax([np.linalg.norm(c, axis=-1).min() for c in charts]))
        w = _eigvec_forms(n_t, sign)[chart]
        dw = _eigvec_velocity(n_t, dn_t, sign, chart)
        conn = np.imag(np.einsum("ti,ti->t", np.conj(w), dw)) / np.einsum("ti,ti->t", np.conj(w), w).real
        gamma = float(conn @ wts)
        ends = _eigvec_forms(fld(np.array([0.0, T])), sign)[chart]
        ends = ends / np.linalg.norm(ends, axis=-1, keepdims=True)
        u += np.exp(-1j * gamma) * np.outer(ends[1], np.conj(ends[0]))
    return u


def kato_transport(segment: SegmentHamiltonian, steps: int = 512, fraction: float = 1.0) -> np.ndarray:
    """Integrate Kato's adiabatic generator for a +-lambda spectrum.

    With K = H/lambda the eigenprojectors are (I +- K)/2, and
    sum_n dPi_n/dt Pi_n reduces to K' K / 2. ``fraction`` stops the run early.
    """
    qubits, pieces = segment._local_pieces()
    T = segment.schedule.T * fraction

    def gen(t):
        h, dh = segment._hamiltonian(pieces, t, want_derivative=True)
        d = h.shape[-1]
        lam2 = np.einsum("tij,tji->t", h, h).real / d
        lam = np.sqrt(lam2)
        dlam = np.einsum("tij,tji->t", h, dh).real / (d * lam)
        k = h / lam[:, None, None]
        dk = dh / lam[:, None, None] - h * (dlam / lam2)[:, None, None]
        return 0.5 * np.matmul(dk, k)

    return magnus_propagator(gen, 0.0, T, steps, order=4)


def closed_form_transport(segment: SegmentHamiltonian) -> np.ndarray:
    """(I + P_e P_s)/sqrt 2 for unnormalized branches with anticommuting Pauli endpoints."""
    qubits, pieces = segment._local_pieces()
    d = 1 << len(qubits)
    out = np.zeros((d, d), dtype=complex)
    for br, proj, ms, me in pieces:
        if br.fixed:
            out += proj
            continue
        if np.max(np.abs(ms @ me + me @ ms)) > 1e-12:
            raise ValueError("closed form needs anticommuting endpoints")
        first, last = (ms, me) if segment.direction == "forward" else (me, ms)
        out += (proj + last @ first) / np.sqrt(2)
    return out


def _geodesic_su2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SU(2) rotation taking unit vector a to unit vector b about a x b."""
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    ang = math.atan2(s, float(a @ b))
    if s < 1e-15:
        if ang > 1.0:
            raise ValueError("antipodal endpoints have no geodesic")
        return np.eye(2, dtype=complex)
    k = axis / s
    return math.cos(ang / 2) * I2 - 1j * math.sin(ang / 2) * np.einsum("a,aij->ij", k, SIGMA)


def partial_transport(segment: SegmentHamiltonian, fraction: float) -> np.ndarray:
    """Exact adiabatic transport over the first ``fraction`` of the run.

    Closed forms: a great-circle rotation for the single form, and
    cos(phi/2) + sin(phi/2) B A per branch for anticommuting endpoints A, B.
    Anything else falls back to Kato integration.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    T = segment.schedule.T
    t = T * fraction
    if segment.form == "single":
        fld = segment.two_level_field()
        n0, n1 = fld(np.array([0.0, t]))
        u2 = _geodesic_su2(n0 / np.linalg.norm(n0), n1 / np.linalg.norm(n1))
        return local_operator(u2, segment.target, segment.qubits)
    qubits, pieces = segment._local_pieces()
    tt, _ = segment._times(t)
    f, g, _, _ = segment.schedule.fg(np.array([float(tt)]))
    f, g = float(np.atleast_1d(f)[0]), float(np.atleast_1d(g)[0])
    d = 1 << len(qubits)
    out = np.zeros((d, d), dtype=complex)
    for br, proj, ms, me in pieces:
        if br.fixed:
            out += proj
            continue
        if np.max(np.abs(ms @ me + me @ ms)) > 1e-12:
            return kato_transport(segment, fraction=fraction)
        if segment.direction == "forward":
            first, last, phi = ms, me, math.atan2(g, f)
        else:
            first, last, phi = me, ms, math.atan2(f, g)
        out += math.cos(phi / 2) * proj + math.sin(phi / 2) * (last @ first)
    return out


def exact_adiabatic_transport(segment: SegmentHamiltonian, steps: int = 512,
                              method: str = "auto") -> np.ndarray:
    """Adiabatic-limit geometric part on ``segment.qubits``.

    ``method``: "eigenvector" (single form only, closed-form eigenvectors and
    Berry phases), "kato" (any form), "closed" (analytic rotations), or
    "auto" which picks the eigenvector route when possible and Kato otherwise.
    """
    if method == "auto":
        method = "eigenvector" if segment.form == "single" else "kato"
    if method == "eigenvector":
        u2 = berry_transport_two_level(segment)
        return local_operator(u2, segment.target, segment.qubits)
    if method == "kato":
        return kato_transport(segment, steps)
    if method == "closed":
        return partial_transport(segment, 1.0)
    raise ValueError(f"unknown method {method!r}")


def two_level_geometric(u: np.ndarray, fld: Callable, T: float, omega: float, sector: int = 0) -> np.ndarray:
    """Strip e^{+-i omega} from a two-level propagator (sector 0: H, sector 1: -H)."""
    n0 = fld(np.array([0.0]))[0]
    h0 = np.einsum("a,aij->ij", n0, SIGMA)
    neg, pos = _spectral_projectors(h0)
    s = 1 if sector == 0 else -1
    return np.exp(-1j * s * omega) * u @ neg + np.exp(1j * s * omega) * u @ pos
