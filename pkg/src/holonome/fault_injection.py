"""Single-fault simulation of path programs with ideal recovery.

Programs run in exact-adiabatic mode on a state vector: each segment applies
its transport (optionally dressed with dynamical phases on the two
eigenspaces), and a fault splits a segment at the requested fraction. After
the run the ideal target is undone, so recovery always happens in the frame
of the original code; this covers non-Clifford programs, whose tracked
group is not a Pauli group.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._numerics import apply_local, check_state
from .codes import CodeSpec, gf2_basis, _reduce, symplectic
from .evolution import partial_transport
from .gate_programs import PathProgram, segment_unitary
from .pauli_algebra import PauliOperator, commutes, pauli_mul

PAULIS = ("X", "Y", "Z")
DEFAULT_FRACTIONS = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class ErrorEvent:
    qubit: int
    pauli: str
    segment: int
    fraction: float = 0.5

    def __post_init__(self):
        if self.pauli not in ("I", "X", "Y", "Z"):
            raise ValueError(f"pauli must be I, X, Y or Z, not {self.pauli!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")


@dataclass(frozen=True)
class FaultReport:
    events: tuple[ErrorEvent, ...]
    logical_fidelity_after_recovery: float | None
    residual_error_weight_per_block: dict
    verdict: bool
    flagged: bool = False
    localized: bool | None = None


@dataclass(frozen=True)
class Recovery:
    """Outcome of ideal recovery: logical Bloch vector plus per-syndrome records."""

    bloch: np.ndarray
    syndromes: dict
    corrections: dict
    flagged: bool

    @property
    def logical_state(self) -> np.ndarray:
        x, y, z = self.bloch
        return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


# Pauli action on state vectors --------------------------------------------------

def _masks(p: PauliOperator) -> tuple[int, int]:
    """Index masks for qubit 0 as the most significant bit."""
    xm = zm = 0
    for q in range(p.n):
        bit = 1 << (p.n - 1 - q)
        if (p.x_bits >> q) & 1:
            xm |= bit
        if (p.z_bits >> q) & 1:
            zm |= bit
    return xm, zm


def apply_pauli(state: np.ndarray, p: PauliOperator) -> np.ndarray:
    idx = np.arange(state.shape[0])
    xm, zm = _masks(p)
    n_y = bin(p.x_bits & p.z_bits).count("1")
    masked = idx & zm
    parity = np.zeros_like(idx)
    for b in range(zm.bit_length()):
        parity ^= (masked >> b) & 1
    signs = 1 - 2 * parity
    out = np.empty_like(state)
    out[idx ^ xm] = (1j ** ((p.phase + n_y) % 4)) * signs * state
    return out


def expectation(state: np.ndarray, p: PauliOperator) -> float:
    return float(np.vdot(state, apply_pauli(state, p)).real)


# decoding ---------------------------------------------------------------------------

def syndrome(p: PauliOperator, stabilizers: Sequence[PauliOperator]) -> tuple[int, ...]:
    return tuple(int(not commutes(p, s)) for s in stabilizers)


def decoder_table(code: CodeSpec, max_weight: int = 2) -> dict[tuple[int, ...], PauliOperator]:
    """Minimal-weight Pauli per syndrome; ties go to the earliest (support, label)."""
    table: dict[tuple[int, ...], PauliOperator] = {}
    n = code.n
    for w in range(max_weight + 1):
        cands = []
        for qs in itertools.combinations(range(n), w):
            for labels in itertools.product("XYZ", repeat=w):
                cands.append(PauliOperator.from_sites(n, dict(zip(qs, labels))))
        cands.sort(key=lambda p: (p.support, p.label))
        for p in cands:
            table.setdefault(syndrome(p, code.stabilizer_gens), p)
    return table


def logical_operators(code: CodeSpec) -> tuple[PauliOperator, PauliOperator, PauliOperator]:
    lx, lz = code.logical_x[0], code.logical_z[0]
    ly = pauli_mul(lx, lz).times_i(1)
    if not ly.is_hermitian:
        ly = ly.times_i(2)
    return lx, ly, lz


def encode(code: CodeSpec, bloch: Sequence[float], seed: int = 0) -> np.ndarray:
    """Code state with logical Bloch vector ``bloch`` and a random gauge state."""
    check_state(code.n)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << code.n) + 1j * rng.normal(size=1 << code.n)
    for s in code.stabilizer_gens:
        psi = 0.5 * (psi + apply_pauli(psi, s))
    nb = np.asarray(bloch, float)
    nb = nb / np.linalg.norm(nb)
    lx, ly, lz = logical_operators(code)
    psi = 0.5 * (psi + nb[0] * apply_pauli(psi, lx) + nb[1] * apply_pauli(psi, ly) + nb[2] * apply_pauli(psi, lz))
    return psi / np.linalg.norm(psi)


def recover(state: np.ndarray, code: CodeSpec, table: dict | None = None,
            syndrome_phases: np.random.Generator | None = None) -> Recovery:
    """Project onto each syndrome subspace, correct it, and read the logical Bloch vector.

    Phases between syndrome subspaces and the gauge-subsystem state play no
    role: branches are combined incoherently and only logical expectations
    are kept. Syndromes without a weight-one correction are flagged.
    """
    table = table if table is not None else decoder_table(code)
    stabs = code.stabilizer_gens
    logicals = logical_operators(code)
    bloch = np.zeros(3)
    probs, fixes, flagged = {}, {}, False
    for bits in itertools.product((0, 1), repeat=len(stabs)):
        branch = state
        for s, b in zip(stabs, bits):
            flipped = apply_pauli(branch, s)
            branch = 0.5 * (branch + flipped) if b == 0 else 0.5 * (branch - flipped)
        p = float(np.vdot(branch, branch).real)
        if p < 1e-14:
            continue
        if syndrome_phases is not None:
            branch = branch * np.exp(2j * np.pi * syndrome_phases.random())
        fix = table.get(bits)
        if fix is None or fix.weight > 1:
            flagged = True
        if fix is not None:
            branch = apply_pauli(branch, fix)
        probs[bits], fixes[bits] = p, fix
        bloch += [np.vdot(branch, apply_pauli(branch, L)).real for L in logicals]
    return Recovery(bloch, probs, fixes, flagged)


def logical_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity of two qubit density matrices."""
    det = np.linalg.det(rho).real * np.linalg.det(sigma).real
    return float(np.trace(rho @ sigma).real + 2 * np.sqrt(max(det, 0.0)))


# running programs -------------------------------------------------------------------

class _Runner:
    def __init__(self, program: PathProgram, dynamical_phase=None, seed: int = 0):
        self.program = program
        self.n = program.n
        check_state(self.n)
        self.units = [segment_unitary(s, "closed") for s in program.segments]
        self._partials: dict = {}
        rng = np.random.default_rng(seed)
        if dynamical_phase == "random":
            self.omegas = 2 * np.pi * rng.random(len(program.segments))
        elif dynamical_phase is None:
            self.omegas = None
        else:
            self.omegas = np.full(len(program.segments), float(dynamical_phase))
        self.stage_end = {st.stop - 1: st for st in program.stages if st.stop > st.start}

    def partial(self, k: int, f: float) -> np.ndarray:
        key = (k, f)
        if key not in self._partials:
            self._partials[key] = partial_transport(self.program.segments[k], f)
        return self._partials[key]

    def _dynamical(self, k: int, psi: np.ndarray) -> np.ndarray:
        if self.omegas is None:
            return psi
        seg = self.program.segments[k]
        h = seg.hamiltonian(np.array([seg.schedule.T]))[0]
        kk = h / np.sqrt(np.trace(h @ h).real / len(h))
        w = self.omegas[k]
        op = np.cos(w) * np.eye(len(h)) - 1j * np.sin(w) * kk
        return apply_local(psi, self.n, seg.qubits, op)

    def run(self, psi: np.ndarray, events: Sequence[ErrorEvent] = ()) -> np.ndarray:
        by_seg: dict[int, list[ErrorEvent]] = {}
        for ev in events:
            by_seg.setdefault(ev.segment, []).append(ev)
        for k, seg in enumerate(self.program.segments):
            evs = sorted(by_seg.get(k, []), key=lambda e: e.fraction)
            if not evs:
                psi = apply_local(psi, self.n, seg.qubits, self.units[k])
            else:
                done = np.eye(self.units[k].shape[0])
                for ev in evs:
                    step = self.partial(k, ev.fraction) @ np.conj(done).T
                    psi = apply_local(psi, self.n, seg.qubits, step)
                    done = self.partial(k, ev.fraction)
                    if ev.pauli != "I":
                        psi = apply_pauli(psi, PauliOperator.single(self.n, ev.qubit, ev.pauli))
                psi = apply_local(psi, self.n, seg.qubits, self.units[k] @ np.conj(done).T)
            psi = self._dynamical(k, psi)
            st = self.stage_end.get(k)
            if st is not None:
                for c in st.corrections:
                    psi = apply_local(psi, self.n, c.qubits, c.matrix)
        return psi

    def undo_ideal(self, psi: np.ndarray) -> np.ndarray:
        for mat, qs in reversed(list(self.program.ideal_ops())):
            psi = apply_local(psi, self.n, qs, np.conj(mat).T)
        return psi


def _blocks(program: PathProgram, code: CodeSpec | None):
    if program.block_map:
        return program.block_map
    return {q: "A" for q in range(program.n)}


def _localized(fix: PauliOperator, qubits: Iterable[int], code: CodeSpec) -> bool:
    """Whether ``fix`` equals a Pauli supported on ``qubits`` times a gauge element."""
    basis = gf2_basis(symplectic(g) for g in code.gauge_gens)
    qubits = list(qubits)
    for labels in itertools.product("IXYZ", repeat=len(qubits)):
        local = PauliOperator.from_sites(fix.n, {q: s for q, s in zip(qubits, labels) if s != "I"})
        if _reduce(basis, symplectic(fix) ^ symplectic(local)) == 0:
            return True
    return False


def run_with_fault(program: PathProgram, events: ErrorEvent | Sequence[ErrorEvent], code: CodeSpec,
                   initial_bloch: Sequence[float] = (0.6, 0.0, 0.8), seed: int = 0, tol: float = 1e-6,
                   dynamical_phase=None, gauge_kick: PauliOperator | None = None,
                   syndrome_phase_seed: int | None = None, _runner: _Runner | None = None,
                   _table: dict | None = None) -> FaultReport:
    """Simulate ``program`` with the given fault(s) and recover against ``code``.

    ``dynamical_phase`` is None, a fixed angle, or "random"; ``gauge_kick`` is
    applied just before recovery; ``syndrome_phase_seed`` multiplies each
    syndrome subspace by a random phase.
    """
    events = (events,) if isinstance(events, ErrorEvent) else tuple(events)
    for ev in events:
        if not 0 <= ev.segment < len(program.segments):
            raise IndexError(f"segment {ev.segment} out of range")
        if not 0 <= ev.qubit < program.n:
            raise IndexError(f"qubit {ev.qubit} out of range")
    runner = _runner or _Runner(program, dynamical_phase, seed)
    table = _table if _table is not None else decoder_table(code)
    psi0 = encode(code, initial_bloch, seed)
    psi = runner.undo_ideal(runner.run(psi0, events))
    if gauge_kick is not None:
        psi = apply_pauli(psi, gauge_kick)
    rng = None if syndrome_phase_seed is None else np.random.default_rng(syndrome_phase_seed)
    rec = recover(psi, code, table, rng)
    r0 = np.asarray(initial_bloch, float) / np.linalg.norm(initial_bloch)
    want = Recovery(r0, {}, {}, False).logical_state
    fid = logical_fidelity(rec.logical_state, want)

    blocks = _blocks(program, code)
    weights: dict = {b: 0 for b in set(blocks.values())}
    for fix in rec.corrections.values():
        if fix is None:
            continue
        for b in weights:
            w = sum(1 for q in fix.support if blocks.get(q) == b)
            weights[b] = max(weights[b], w)
    hit = sorted({ev.qubit for ev in events if ev.pauli != "I"})
    localized = all(fix is not None and _localized(fix, hit, code) for fix in rec.corrections.values())
    verdict = (not rec.flagged) and all(w <= 1 for w in weights.values()) and fid > 1 - tol
    return FaultReport(events, fid, weights, verdict, rec.flagged, localized)


def effective_error(program: PathProgram, events: Sequence[ErrorEvent]) -> dict[str, float]:
    """Pauli expansion of U_ideal^dag U_faulty on the program support (small registers)."""
    runner = _Runner(program)
    d = 1 << program.n
    cols = runner.undo_ideal(runner.run(np.eye(d, dtype=complex), events))
    out = {}
    for labels in itertools.product("IXYZ", repeat=program.n):
        p = PauliOperator.from_sites(program.n, {q: s for q, s in enumerate(labels) if s != "I"})
        coef = np.trace(apply_pauli(np.eye(d, dtype=complex), p).conj().T @ cols) / d
        if abs(coef) > 1e-9:
            out["".join(labels)] = complex(coef)
    return out


def block_weights(error: dict[str, float], block_map: dict) -> dict:
    """Largest per-block weight among the terms of a Pauli expansion."""
    blocks = set(block_map.values())
    out = {b: 0 for b in blocks}
    for label in error:
        for b in blocks:
            w = sum(1 for q, s in enumerate(label) if s != "I" and block_map.get(q) == b)
            out[b] = max(out[b], w)
    return out


@dataclass
class ScanReport:
    events: int
    worst_fidelity: float
    failures: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def fault_scan(program: PathProgram, code: CodeSpec, qubits: Iterable[int] | None = None,
               paulis: Iterable[str] = PAULIS, fractions: Iterable[float] = DEFAULT_FRACTIONS,
               segments: Iterable[int] | None = None, **kw) -> ScanReport:
    """Every qubit x Pauli x segment x fraction combination as a single fault."""
    qubits = range(program.n) if qubits is None else list(qubits)
    segments = range(len(program.segments)) if segments is None else list(segments)
    runner = _Runner(program, kw.pop("dynamical_phase", None), kw.get("seed", 0))
    table = decoder_table(code)
    worst = 1.0
    reports, failures = [], []
    count = 0
    for k in segments:
        for f in fractions:
            for q in qubits:
                for p in paulis:
                    rep = run_with_fault(program, ErrorEvent(q, p, k, f), code, _runner=runner, _table=table, **kw)
                    count += 1
                    worst = min(worst, rep.logical_fidelity_after_recovery)
                    reports.append(rep)
                    if not rep.verdict:
                        failures.append(rep)
    return ScanReport(count, worst if count else 1.0, failures, reports)
