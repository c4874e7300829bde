"""Compile gates into path programs: ordered interpolation segments.

Every single-qubit gate is expressed as a list of Bloch waypoints for the
addressed qubit. A Hamiltonian ``-(e.sigma) (x) G`` sweeping ``e`` from ``a`` to
``b`` transports by the great-circle rotation a -> b, so a waypoint list is
checked against its target before any segment is emitted.

Programs are divided into stages. Each stage names the unitary it is meant
to realize on a few qubits plus any follow-up correction gates, so large
registers can be verified stage by stage.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np

from ._numerics import I2, SIGMA, SX, apply_local, check_dense, dense_limit, phase_fidelity
from .codes import (
    CodeSpec, ConditionalGate, SearchFailure, TrackedGroup, build_bacon_shor, find_element,
    find_starting_element, group_contains, same_span, track,
)
from .evolution import (
    Branch, SegmentHamiltonian, _geodesic_su2, evolve_segment, exact_adiabatic_transport,
    pauli_segment, single_segment,
)
from .pauli_algebra import CLIFFORD_NAMES, GATE_MATRICES, PauliOperator, PauliSum, bloch_sum, pauli_mul
from .schedules import T_D, Schedule

Z_AXIS = np.array([0.0, 0.0, 1.0])


class CompilationError(LookupError):
    """No group element of the form a construction needs."""


class WeightBudgetError(RuntimeError):
    pass


# geometry ----------------------------------------------------------------------

def so3(u: np.ndarray) -> np.ndarray:
    """Rotation matrix R with u (v.sigma) u^dag = (R v).sigma."""
    ud = np.conj(u).T
    return np.array([[0.5 * np.trace(SIGMA[i] @ u @ SIGMA[j] @ ud).real for j in range(3)] for i in range(3)])


def n_theta(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta), 0.0])


def path_su2(waypoints: Sequence[np.ndarray]) -> np.ndarray:
    """Product of the great-circle rotations along consecutive waypoints."""
    u = I2.copy()
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        u = _geodesic_su2(np.asarray(a, float), np.asarray(b, float)) @ u
    return u


def _half_loops(*thetas: float, start: float = 1.0) -> list[np.ndarray]:
    """Waypoints +-z -> n_theta -> -+z for each theta in turn."""
    pts = [start * Z_AXIS]
    sgn = start
    for th in thetas:
        sgn = -sgn
        pts += [n_theta(th), sgn * Z_AXIS]
    return pts


_X, _Y, _Z = np.eye(3)
CATALOG_WAYPOINTS: dict[str, list[np.ndarray]] = {
    "X": [_Z, _Y, -_Z],
    "Z": [_Z, _X, -_Z, -_Y, _Z],
    "S": _half_loops(math.pi / 4, -math.pi / 2),
    "H": [_Z, _X, -_Z, -_Y, _Z, _X],
    "T_pi8": _half_loops(0.0, -math.pi / 2, math.pi / 2, math.pi / 8),
}

SINGLE_QUBIT_GATES = {
    "I": I2, "X": GATE_MATRICES["X"], "Y": GATE_MATRICES["Y"], "Z": GATE_MATRICES["Z"],
    "H": GATE_MATRICES["H"], "S": GATE_MATRICES["S"], "Sdg": GATE_MATRICES["Sdg"],
    "T_pi8": GATE_MATRICES["T"], "T": GATE_MATRICES["T"], "Tdg": GATE_MATRICES["Tdg"],
}


def _frame(e0: np.ndarray) -> np.ndarray:
    """SU(2) element C whose rotation sends z to e0."""
    if e0 @ Z_AXIS > 1 - 1e-12:
        return I2.copy()
    if e0 @ Z_AXIS < -1 + 1e-12:
        return -1j * SX
    return _geodesic_su2(Z_AXIS, e0)


def waypoints_from_z(w: np.ndarray) -> list[np.ndarray]:
    """Waypoints starting at +z whose transport equals ``w`` up to phase.

    ``w`` maps z to u. A half loop handles u = -z directly. Otherwise ``w`` is
    the geodesic G: z -> u after a z rotation R_z(kappa), and R_z(kappa) is the
    pair of half loops through n_0 and n_{kappa/2}.
    """
    u = so3(w) @ Z_AXIS
    if u @ Z_AXIS < -1 + 1e-9:
        phi = 0.5 * np.angle(w[1, 0] / w[0, 1])
        return [Z_AXIS, n_theta(phi - math.pi / 2), -Z_AXIS]
    geo = _geodesic_su2(Z_AXIS, u) if u @ Z_AXIS < 1 - 1e-12 else I2
    diag = np.conj(geo).T @ w
    kappa = float(np.angle(diag[1, 1] / diag[0, 0]))
    pts = [Z_AXIS]
    if abs(np.sin(kappa / 2)) > 1e-12:
        pts = _half_loops(0.0, kappa / 2)
    if u @ Z_AXIS < 1 - 1e-12:
        pts.append(u)
    return pts


def compile_waypoints(w: np.ndarray, e0: np.ndarray, name: str | None = None) -> list[np.ndarray]:
    """Waypoints from ``e0`` whose transport is ``w`` up to global phase."""
    e0 = np.asarray(e0, float)
    c = _frame(e0)
    inner = np.conj(c).T @ w @ c
    if name in CATALOG_WAYPOINTS and e0 @ Z_AXIS > 1 - 1e-12:
        pts = [p.copy() for p in CATALOG_WAYPOINTS[name]]
    else:
        pts = waypoints_from_z(inner)
    rot = so3(c)
    pts = [rot @ p for p in pts]
    if phase_fidelity(path_su2(pts), w) < 1 - 1e-10:
        raise CompilationError(f"waypoint synthesis failed for {name or 'unitary'}")
    return pts


# program containers ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Correction:
    label: str
    qubits: tuple[int, ...]
    matrix: np.ndarray


def _correction(label: str, qubits) -> Correction:
    return Correction(label, tuple(qubits), np.asarray(GATE_MATRICES[label], dtype=complex))


@dataclass(frozen=True, eq=False)
class Stage:
    """Segments ``start:stop`` followed by ``corrections`` realize ``target`` on ``qubits``."""

    name: str
    start: int
    stop: int
    target: np.ndarray
    qubits: tuple[int, ...]
    corrections: tuple[Correction, ...] = ()

    def ideal_ops(self):
        yield self.target, self.qubits


@dataclass(frozen=True, eq=False)
class PathProgram:
    name: str
    n: int
    segments: tuple[SegmentHamiltonian, ...]
    stages: tuple[Stage, ...]
    group_before: TrackedGroup | None = None
    group_after: TrackedGroup | None = None
    elements_after: tuple[PauliSum, ...] = ()
    block_map: dict = field(default_factory=dict)

    @property
    def support(self) -> tuple[int, ...]:
        qs: set[int] = set()
        for seg in self.segments:
            qs |= set(seg.qubits)
        for st in self.stages:
            qs |= set(st.qubits)
            for c in st.corrections:
                qs |= set(c.qubits)
        return tuple(sorted(qs))

    @property
    def phase_corrections(self) -> tuple[Correction, ...]:
        return tuple(c for st in self.stages for c in st.corrections)

    @property
    def max_weight(self) -> int:
        return max((s.max_weight for s in self.segments), default=0)

    def ideal_ops(self):
        for st in self.stages:
            yield from st.ideal_ops()

    def target_unitary(self, qubits: Sequence[int] | None = None) -> np.ndarray:
        qubits = tuple(self.support if qubits is None else qubits)
        return compose(list(self.ideal_ops()), qubits)


def compose(ops, register: Sequence[int]) -> np.ndarray:
    """Dense product of ``(matrix, qubits)`` ops applied in order, on ``register``."""
    register = list(register)
    check_dense(len(register))
    d = 1 << len(register)
    m = np.eye(d, dtype=complex)
    for mat, qs in ops:
        pos = [register.index(q) for q in qs]
        m = apply_local(m, len(register), pos, mat)
    return m


def segment_unitary(seg: SegmentHamiltonian, method: str = "auto") -> np.ndarray:
    if method == "discrete":
        from .holonomy import segment_transport
        return segment_transport(seg)
    return exact_adiabatic_transport(seg, method=method)


def program_unitary(program: PathProgram, method: str = "auto", corrections: bool = True,
                    segments: slice | None = None, register: Sequence[int] | None = None) -> np.ndarray:
    """Geometric part of the whole program (or a slice of it) on ``register``."""
    register = tuple(program.support if register is None else register)
    ops = []
    stages = program.stages
    for st in stages:
        if segments is not None and not (segments.start <= st.start and st.stop <= segments.stop):
            continue
        for seg in program.segments[st.start:st.stop]:
            ops.append((segment_unitary(seg, method), seg.qubits))
        if corrections:
            ops.extend((c.matrix, c.qubits) for c in st.corrections)
    return compose(ops, register)


# element bookkeeping ---------------------------------------------------------------

_BASIS = {"I": I2, "X": SIGMA[0], "Y": SIGMA[1], "Z": SIGMA[2]}


def conjugate_local(ps: PauliSum, u: np.ndarray, qubits: Sequence[int]) -> PauliSum:
    """u P u^dag for a k-qubit unitary on ``qubits``, re-expanded in Pauli terms."""
    qubits = tuple(qubits)
    k = len(qubits)
    labels = ["".join(t) for t in np.array(np.meshgrid(*[list("IXYZ")] * k, indexing="ij")).reshape(k, -1).T]
    mats = {lab: reduce(np.kron, [_BASIS[c] for c in lab]) for lab in labels}
    out = []
    ud = np.conj(u).T
    for c, op in ps.terms:
        sub = "".join(op.site(q) for q in qubits)
        image = u @ mats[sub] @ ud
        rest = {q: op.site(q) for q in op.support if q not in qubits}
        for lab in labels:
            coef = np.trace(mats[lab] @ image) / (1 << k)
            if abs(coef) > 1e-13:
                if abs(coef.imag) > 1e-10:
                    raise ValueError("conjugation produced a non-Hermitian term")
                sites = dict(rest)
                sites.update({q: s for q, s in zip(qubits, lab) if s != "I"})
                out.append((c * coef.real, PauliOperator.from_sites(op.n, sites)))
    return PauliSum.of(*out)


def _with_site(p: PauliOperator, q: int, label: str) -> PauliOperator:
    """Replace the factor of ``p`` on ``q``, keeping the sign."""
    sites = {k: p.site(k) for k in p.support}
    if label == "I":
        sites.pop(q, None)
    else:
        sites[q] = label
    return PauliOperator.from_sites(p.n, sites, phase=0 if p.sign > 0 else 2)


_AXIS_OF = {"X": _X, "Y": _Y, "Z": _Z}
_ANTICOMMUTING = {"X": "Z", "Z": "X", "Y": "Z"}


class _Builder:
    def __init__(self, n: int, elements: Iterable[PauliSum], schedule: Schedule, block_map=None,
                 physical_corrections: Callable | None = None):
        self.n = n
        self.elements = list(elements)
        self.schedule = schedule
        self.block_map = dict(block_map or {})
        self.segments: list[SegmentHamiltonian] = []
        self.stages: list[Stage] = []
        self.physical_corrections = physical_corrections

    def group(self) -> TrackedGroup:
        ops = tuple(p for p in (e.as_pauli() for e in self.elements) if p is not None)
        return TrackedGroup(self.n, ops, (), self.block_map)

    def push(self, name, segs, target, qubits, corrections=()):
        start = len(self.segments)
        self.segments.extend(segs)
        self.stages.append(Stage(name, start, len(self.segments), np.asarray(target, complex),
                                 tuple(qubits), tuple(corrections)))
        self.elements = [conjugate_local(e, np.asarray(target, complex), qubits) for e in self.elements]

    # single-qubit --------------------------------------------------------
    def start_element(self, q: int, trivial_on=(), restrict_to=None) -> PauliOperator:
        group = self.group()
        best = None
        for order, lab in enumerate("ZXY"):
            cons_extra = {}
            if restrict_to is not None:
                cons_extra = {k: "I" for k in range(self.n) if k not in restrict_to and k != q}
            try:
                e = find_starting_element(group, q, lab, trivial_on=trivial_on, also=cons_extra)
            except SearchFailure:
                continue
            key = (e.weight, order)
            if best is None or key < best[0]:
                best = (key, e)
        if best is None:
            raise CompilationError(f"no group element acts non-trivially on qubit {q}")
        return best[1]

    def single_segments(self, q: int, w: np.ndarray, name: str | None, element: PauliOperator,
                        label: str) -> tuple[list[SegmentHamiltonian], np.ndarray]:
        p = element.site(q)
        rest = _with_site(element, q, "I")
        sign = rest.sign
        rest = _with_site(rest, q, "I") if sign > 0 else -rest
        e0 = sign * _AXIS_OF[p]
        pts = compile_waypoints(w, e0, name)
        segs = [single_segment(self.n, q, a, b, rest, self.schedule, f"{label}[{k}]")
                for k, (a, b) in enumerate(zip(pts[:-1], pts[1:]))]
        return segs, pts[-1]

    def single(self, q: int, w: np.ndarray, name: str | None = None, trivial_on=(), restrict_to=None):
        e = self.start_element(q, trivial_on, restrict_to)
        segs, _ = self.single_segments(q, w, name, e, name or "U")
        self.push(name or "U", segs, w, (q,))

    def via_identity(self, q: int, w: np.ndarray, name: str | None = None, helpers=None):
        """Start from an element acting trivially on ``q`` and undo the detour afterwards."""
        helpers = [k for k in (range(self.n) if helpers is None else helpers) if k != q]
        cons = {k: "I" for k in range(self.n) if k not in helpers}
        try:
            e = find_element(self.group(), cons)
        except SearchFailure as exc:
            raise CompilationError(f"no element trivial on qubit {q} for the identity-start route") from exc
        j = min(e.support)
        swapped = _with_site(e, j, _ANTICOMMUTING[e.site(j)])
        z_q = PauliOperator.single(self.n, q, "Z")
        first = pauli_segment(-PauliSum.of(e), -PauliSum.of(pauli_mul(z_q, swapped)), self.schedule,
                              "controlled", f"{name or 'U'}:detour")
        pts = compile_waypoints(w, Z_AXIS, name)
        mid = [single_segment(self.n, q, a, b, swapped, self.schedule, f"{name or 'U'}[{k}]")
               for k, (a, b) in enumerate(zip(pts[:-1], pts[1:]))]
        last = pauli_segment(-bloch_sum(self.n, q, pts[-1], swapped), -PauliSum.of(e), self.schedule,
                             "controlled", f"{name or 'U'}:undo")
        self.push(f"{name or 'U'}@id", [first, *mid, last], w, (q,))

    # two-qubit -------------------------------------------------------------
    def cnot(self, c: int, t: int, forms=("forward", "backward"), route=None):
        """Z-form C-NOT; picks the lower-weight of the forward and backward runs."""
        group = self.group()
        options = []
        if "forward" in forms:
            try:
                e = find_starting_element(group, t, "Z", trivial_on=[c])
                options.append((e.weight + 1, 0, "forward", e))
            except SearchFailure:
                pass
        if "backward" in forms:
            try:
                e = find_starting_element(group, t, "Z", also={c: "Z"})
                options.append((e.weight, 1, "backward", e))
            except SearchFailure:
                pass
        if not options:
            raise CompilationError(f"no Z-form element for C-NOT {c}->{t}")
        _, _, how, e = min(options, key=lambda o: o[:2])
        cnot = GATE_MATRICES["CNOT"]
        if how == "forward":
            rest = _with_site(e, t, "I")
            y_t = PauliOperator.single(self.n, t, "Y")
            z_c = PauliOperator.single(self.n, c, "Z")
            segs = [
                single_segment(self.n, t, _Z, _Y, rest, self.schedule, "cnot:V"),
                pauli_segment(-PauliSum.of(pauli_mul(y_t, rest)), -PauliSum.of(pauli_mul(z_c, e)),
                              self.schedule, "controlled", "cnot:ctrl"),
            ]
            fix = "Sdg"
        else:
            rest = _with_site(_with_site(e, t, "I"), c, "I")
            y_t = PauliOperator.single(self.n, t, "Y")
            segs = [
                pauli_segment(-PauliSum.of(e), -PauliSum.of(pauli_mul(y_t, rest)), self.schedule,
                              "controlled", "cnot:ctrl~"),
                single_segment(self.n, t, _Y, _Z, rest, self.schedule, "cnot:V~"),
            ]
            fix = "S"
        self._finish_cnot(f"CNOT({c},{t}):{how}", segs, c, t, cnot, fix, route)

    def cnot_xform(self, c: int, t: int, route=None):
        """C-NOT from an element with X on the target and identity on the control."""
        try:
            e = find_starting_element(self.group(), t, "X", trivial_on=[c])
        except SearchFailure as exc:
            raise CompilationError(f"no X-form element for C-NOT {c}->{t}") from exc
        rest = _with_site(e, t, "I")
        sign = rest.sign
        g = rest if sign > 0 else -rest
        g = g if e.sign > 0 else -g
        s = self.schedule
        n = self.n
        start = -bloch_sum(n, t, -_X, g)
        segs = [
            single_segment(n, t, _X, _Z, g, s, "cnotx:a"),
            single_segment(n, t, _Z, -_X, g, s, "cnotx:b"),
            SegmentHamiltonian(n, (Branch(((c, 0),), start, -bloch_sum(n, t, _Z, g)),
                                   Branch(((c, 1),), start, -bloch_sum(n, t, _Y, g))),
                               s, "controlled", label="cnotx:c"),
            SegmentHamiltonian(n, (Branch(((c, 0),), -bloch_sum(n, t, _Z, g), -bloch_sum(n, t, _X, g)),
                                   Branch(((c, 1),), -bloch_sum(n, t, _Y, g), -bloch_sum(n, t, _X, g))),
                               s, "controlled", label="cnotx:d"),
        ]
        self._finish_cnot(f"CNOTx({c},{t})", segs, c, t, GATE_MATRICES["CNOT"], "Sdg", route)

    def _finish_cnot(self, name, segs, c, t, cnot, fix, route):
        fix_m = GATE_MATRICES[fix]
        if route is None:
            self.push(name, segs, cnot, (c, t), [_correction(fix, (c,))])
            return
        # the raw stage realizes fix^dag on the control times C-NOT; compile the fix explicitly
        raw = np.kron(np.conj(fix_m).T, I2) @ cnot
        self.push(name, segs, raw, (c, t))
        route(self, c, fix_m, fix)

    def build(self, name, group_before=None, group_after=None) -> PathProgram:
        return PathProgram(name, self.n, tuple(self.segments), tuple(self.stages), group_before,
                           group_after, tuple(self.elements), self.block_map)


def _elements_of(group: TrackedGroup) -> list[PauliSum]:
    return [PauliSum.of(p) for p in group.elements]


def _clifford_after(group: TrackedGroup, gates) -> TrackedGroup:
    for g, qs in gates:
        group = track(group, g, qs)
    return group


# public compile entry points ------------------------------------------------------

def compile_single(gate: str | np.ndarray, context: TrackedGroup | None = None, targets=(0,),
                   schedule: Schedule | None = None) -> PathProgram:
    """Single-qubit gate on each of ``targets`` in turn, from weight-minimal elements."""
    targets = tuple(targets)
    context = context or TrackedGroup.single_qubits(max(targets) + 1)
    name = gate if isinstance(gate, str) else None
    w = SINGLE_QUBIT_GATES[gate] if isinstance(gate, str) else np.asarray(gate, complex)
    b = _Builder(context.n, _elements_of(context), schedule or Schedule("linear", 1.0), context.block_map)
    for q in targets:
        b.single(q, w, name)
    after = None
    clifford = {"T_pi8": None}.get(name, name)
    if clifford in CLIFFORD_NAMES or clifford in ("X", "Y", "Z"):
        after = _clifford_after(context, [(clifford, (q,)) for q in targets])
    return b.build(name or "U", context, after)


def compile_cnot(context: TrackedGroup | None = None, control: int = 0, target: int = 1,
                 schedule: Schedule | None = None, form: str = "z", direction: str = "auto") -> PathProgram:
    context = context or TrackedGroup.single_qubits(max(control, target) + 1)
    b = _Builder(context.n, _elements_of(context), schedule or Schedule("linear", 1.0), context.block_map)
    if form == "x":
        b.cnot_xform(control, target)
    else:
        forms = ("forward", "backward") if direction == "auto" else (direction,)
        b.cnot(control, target, forms)
    return b.build("CNOT" if form == "z" else "CNOT_xform", context,
                   track(context, "CNOT", (control, target)))


def compile_cond(gate: str, context: TrackedGroup, control: int, target: int,
                 schedule: Schedule | None = None) -> PathProgram:
    """Apply ``gate`` on ``target`` only when ``control`` is |1>, via branch Hamiltonians.

    The |0> branch stays at the starting element; the |1> branch runs the usual
    segments normalized to the same spectrum. The residual phase of the |1>
    branch is recorded as a phase correction on the control.
    """
    schedule = schedule or Schedule("linear", 1.0)
    w = SINGLE_QUBIT_GATES[gate]
    b = _Builder(context.n, _elements_of(context), schedule, context.block_map)
    e = b.start_element(target, trivial_on=[control])
    inner, _ = b.single_segments(target, w, gate, e, gate)
    fixed = -PauliSum.of(e)
    segs = []
    for seg in inner:
        (br,) = seg.branches
        segs.append(SegmentHamiltonian(
            context.n,
            (Branch(((control, 0),), fixed, fixed), Branch(((control, 1),), br.start, br.end, normalize=True)),
            schedule, "conditional_group", label=f"cond:{seg.label}"))
    actual = path_su2([np.array(s.a) for s in inner] + [np.array(inner[-1].b)])
    phase = np.trace(np.conj(w).T @ actual) / 2
    phase /= abs(phase)
    block = np.zeros((4, 4), dtype=complex)
    block[:2, :2] = I2
    block[2:, 2:] = w
    fix = Correction(f"P({-np.angle(phase):.6f})", (control,), np.diag([1.0, np.conj(phase)]))
    b.push(f"COND({gate})", segs, block, (control, target), [fix])
    after = None
    if gate in CLIFFORD_NAMES:
        after = track(context, ConditionalGate(control, gate), (target,))
    return b.build(f"COND({gate})", context, after)


def cat_prep(m: int = 4, schedule: Schedule | None = None) -> PathProgram:
    """|0...0> to the m-qubit cat state with weight-two interpolations."""
    if m < 2:
        raise ValueError("a cat state needs at least two qubits")
    schedule = schedule or Schedule("linear", 1.0)
    ctx = TrackedGroup.single_qubits(m, block="cat")
    b = _Builder(m, _elements_of(ctx), schedule, ctx.block_map)
    ry = _geodesic_su2(_Z, _X)
    for j in range(m):
        b.push(f"prep{j}", [single_segment(m, j, _Z, _X, None, schedule, f"prep{j}")], ry, (j,))
    z0 = PauliOperator.single(m, 0, "Z")
    for j in range(1, m):
        xj = PauliOperator.single(m, j, "X")
        zj = PauliOperator.single(m, j, "Z")
        seg = pauli_segment(-PauliSum.of(xj), -PauliSum.of(pauli_mul(z0, zj)), schedule, "controlled", f"link{j}")
        step = (np.eye(4) + np.kron(SIGMA[2], SIGMA[2] @ SIGMA[0])) / np.sqrt(2)
        b.push(f"link{j}", [seg], step, (0, j))
    return b.build("cat_prep", ctx, TrackedGroup.cat(m))


def cat_parity(m: int = 4, a: int = 0, b_: int = 1, schedule: Schedule | None = None) -> PathProgram:
    """Two C-NOTs from cat qubits ``a`` and ``b_`` onto a fresh ancilla."""
    ctx = TrackedGroup.cat(m).tensor(TrackedGroup.single_qubits(1, block="anc"))
    r = m
    b = _Builder(ctx.n, _elements_of(ctx), schedule or Schedule("linear", 1.0), ctx.block_map)
    b.cnot(a, r)
    b.cnot(b_, r)
    after = _clifford_after(ctx, [("CNOT", (a, r)), ("CNOT", (b_, r))])
    return b.build("cat_parity", ctx, after)


def single_qubit_via_identity(v: np.ndarray | str, context: TrackedGroup, qubit: int,
                              helpers: Sequence[int] | None = None, schedule: Schedule | None = None,
                              undo_only: bool = False) -> PathProgram:
    """Single-qubit gate started from an element that is trivial on ``qubit``.

    With ``undo_only`` the middle part is skipped, leaving the detour and its
    retrace.
    """
    name = v if isinstance(v, str) else None
    w = SINGLE_QUBIT_GATES[v] if isinstance(v, str) else np.asarray(v, complex)
    b = _Builder(context.n, _elements_of(context), schedule or Schedule("linear", 1.0), context.block_map)
    b.via_identity(qubit, I2 if undo_only else w, None if undo_only else name, helpers)
    return b.build(f"{name or 'U'}@identity", context)


def identity_route_context() -> TrackedGroup:
    """A fresh qubit 0 next to a two-qubit cat pair rotated by a Hadamard on its first qubit."""
    elems = (PauliOperator.from_string("+ZII"), PauliOperator.from_string("+IXZ"),
             PauliOperator.from_string("+IZX"))
    return TrackedGroup(3, elems, (), {0: "data", 1: "cat", 2: "cat"})


# Toffoli ------------------------------------------------------------------------------

TOFFOLI_WORD = (r"R_{2}C_{3,2}R_{3}T_{3}^{\dagger}R_{3}R_{1}C_{3,1}R_{3}T_{3}R_{3}C_{3,2}R_{3}"
                r"T_{3}^{\dagger}R_{3}C_{3,1}R_{3}T_{3}R_{3}R_{2}T_{2}^{\dagger}R_{2}C_{2,1}R_{2}"
                r"T_{2}^{\dagger}R_{2}C_{2,1}R_{2}S_{2}R_{1}T_{1}")
_TOKEN = re.compile(r"([RTSC])_\{(\d)(?:,(\d))?\}(\^\{\\dagger\})?")
_TOKEN_GATE = {("R", False): "H", ("T", False): "T", ("T", True): "Tdg", ("S", False): "S", ("S", True): "Sdg"}


def parse_word(word: str = TOFFOLI_WORD) -> list[tuple[str, tuple[int, ...]]]:
    """Gates in application order (rightmost first), qubits 1-based as written."""
    out = []
    pos = 0
    for m in _TOKEN.finditer(word):
        if m.start() != pos:
            raise ValueError(f"unparsed text at {pos}: {word[pos:m.start()]!r}")
        pos = m.end()
        kind, a, b, dag = m.groups()
        if kind == "C":
            out.append(("CNOT", (int(a), int(b))))
        else:
            out.append((_TOKEN_GATE[(kind, bool(dag))], (int(a),)))
    if pos != len(word):
        raise ValueError("trailing text in gate word")
    return out[::-1]


def toffoli_matrix() -> np.ndarray:
    m = np.eye(8, dtype=complex)
    m[6:, 6:] = SX
    return m


def word_unitary(gates, nq: int = 3) -> np.ndarray:
    return compose([(GATE_MATRICES[g], tuple(q - 1 for q in qs)) for g, qs in gates], range(nq))


@dataclass(frozen=True)
class ToffoliCheck:
    flip_identity_dev: float
    word_dev: float
    passed: bool


def toffoli_identity_check(tol: float = 1e-12) -> ToffoliCheck:
    """C-NOT direction flip under Hadamards, and the Toffoli word up to global phase."""
    hh = np.kron(GATE_MATRICES["H"], GATE_MATRICES["H"])
    flipped = hh @ GATE_MATRICES["CNOT"] @ hh
    c21 = compose([(GATE_MATRICES["CNOT"], (1, 0))], (0, 1))
    flip_dev = float(np.max(np.abs(flipped - c21)))
    u = word_unitary(parse_word())
    tof = toffoli_matrix()
    ov = np.trace(np.conj(tof).T @ u)
    word_dev = float(np.max(np.abs(u * np.conj(ov) / abs(ov) - tof)))
    return ToffoliCheck(flip_dev, word_dev, flip_dev < tol and word_dev < tol)


def toffoli_context() -> TrackedGroup:
    """Qubits 1, 2, 3 of the word at indices 0, 2, 4, each with a ZZ partner.

    Qubits 0-1 form a two-qubit cat state; 2-3 and 4-5 stand for neighbouring
    qubits of two code blocks joined by a weight-two gauge element.
    """
    n = 6
    elems = (PauliOperator.from_string("+ZZIIII"), PauliOperator.from_string("+XXIIII"),
             PauliOperator.from_string("+IIZZII"), PauliOperator.from_string("+IIIIZZ"))
    bmap = {0: "cat", 1: "cat", 2: "B1", 3: "B1", 4: "B2", 5: "B2"}
    return TrackedGroup(n, elems, (), bmap)


def toffoli_on_cat(schedule: Schedule | None = None) -> PathProgram:
    """The Toffoli word with X-form C-NOTs and identity-start single-qubit gates."""
    ctx = toffoli_context()
    b = _Builder(ctx.n, _elements_of(ctx), schedule or Schedule("linear", 1.0), ctx.block_map)
    index = {1: 0, 2: 2, 3: 4}
    cat = [q for q in range(ctx.n) if ctx.block_map[q] == "cat"]

    def route(builder, q, w, name):
        if builder.block_map[q] == "cat":
            builder.single(q, w, name if name in CATALOG_WAYPOINTS else None)
        else:
            builder.via_identity(q, w, name if name in CATALOG_WAYPOINTS else None, helpers=cat)

    for g, qs in parse_word():
        if g == "CNOT":
            c, t = index[qs[0]], index[qs[1]]
            b.cnot_xform(c, t, route=route)
        else:
            name = {"T": "T_pi8", "H": "H"}.get(g, g)
            route(b, index[qs[0]], SINGLE_QUBIT_GATES[g], name)
    return b.build("toffoli_on_cat", ctx)


# Bacon-Shor programs ------------------------------------------------------------------

def bs_encoded(gate: str, code: CodeSpec | None = None, schedule: Schedule | None = None) -> PathProgram:
    """Bitwise encoded Pauli or Hadamard on one Bacon-Shor block.

    The grid rotation that follows bitwise H is a relabelling and is not
    compiled.
    """
    code = code or build_bacon_shor()
    ctx = TrackedGroup.from_code(code)
    b = _Builder(code.n, _elements_of(ctx), schedule or Schedule("linear", 1.0), ctx.block_map)
    if gate == "H":
        plan = [(q, "H") for q in range(code.n)]
    else:
        if gate == "X":
            op = code.logical_x[0]
        elif gate == "Z":
            op = code.logical_z[0]
        elif gate == "Y":
            op = pauli_mul(code.logical_x[0], code.logical_z[0]).times_i(1)
        else:
            raise ValueError(f"no bitwise encoded {gate}")
        plan = [(q, op.site(q)) for q in op.support]
    for q, g in plan:
        b.single(q, SINGLE_QUBIT_GATES[g], g)
    after = _clifford_after(ctx, [(g, (q,)) for q, g in plan])
    return b.build(f"bs_{gate}", ctx, after)


def bs_transversal_cnot(code: CodeSpec | None = None, schedule: Schedule | None = None) -> PathProgram:
    """Qubit-wise C-NOT from block A to block B, choosing forward or backward runs."""
    code = code or build_bacon_shor()
    ctx = TrackedGroup.from_code(code, "A").tensor(TrackedGroup.from_code(code, "B"))
    b = _Builder(ctx.n, _elements_of(ctx), schedule or Schedule("linear", 1.0), ctx.block_map)
    for q in range(code.n):
        b.cnot(q, code.n + q)
    after = _clifford_after(ctx, [("CNOT", (q, code.n + q)) for q in range(code.n)])
    return b.build("bs_transversal_cnot", ctx, after)


# dispatcher ----------------------------------------------------------------------------

def compile(gate: str, context: TrackedGroup | None = None, targets: Sequence[int] = (0,),
            schedule: Schedule | None = None, **options) -> PathProgram:
    """Compile a named gate. See module docs for the supported names."""
    if tuple(targets) == (0,) and (gate.startswith(("CNOT", "COND"))):
        targets = (0, 1)
    cond = re.fullmatch(r"COND\((\w+)\)", gate)
    if cond:
        c, t = targets
        ctx = context or TrackedGroup.single_qubits(max(c, t) + 1)
        return compile_cond(cond.group(1), ctx, c, t, schedule)
    if gate in ("CNOT", "CNOT_xform"):
        c, t = targets
        if gate == "CNOT_xform" and context is None:
            context = TrackedGroup(max(c, t) + 1, tuple(
                PauliOperator.single(max(c, t) + 1, q, "Z" if q != t else "X") for q in range(max(c, t) + 1)),
                (), {})
        return compile_cnot(context, c, t, schedule, "x" if gate == "CNOT_xform" else "z",
                            options.get("direction", "auto"))
    if gate == "cat_prep":
        return cat_prep(options.get("m", 4), schedule)
    if gate == "cat_parity":
        return cat_parity(options.get("m", 4), schedule=schedule)
    if gate == "toffoli_on_cat":
        return toffoli_on_cat(schedule)
    if gate == "single_qubit_via_identity":
        ctx = context or identity_route_context()
        return single_qubit_via_identity(options.get("V", "Z"), ctx, targets[0], schedule=schedule)
    if gate in SINGLE_QUBIT_GATES or not isinstance(gate, str):
        return compile_single(gate, context, targets, schedule)
    raise ValueError(f"unknown gate {gate!r}")


CATALOG = ("X", "Z", "S", "H", "T_pi8", "CNOT", "CNOT_xform", "COND(X)", "cat_prep", "cat_parity",
           "single_qubit_via_identity")


# verification -------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    fidelity: float
    stage_fidelities: tuple[float, ...]
    finite_T: dict
    max_weight: int
    whole_program: bool


def _stage_register(program: PathProgram, st: Stage) -> tuple[int, ...]:
    qs = set(st.qubits)
    for seg in program.segments[st.start:st.stop]:
        qs |= set(seg.qubits)
    for c in st.corrections:
        qs |= set(c.qubits)
    return tuple(sorted(qs))


def _stage_fidelity(program: PathProgram, st: Stage, seg_unitaries) -> float:
    reg = _stage_register(program, st)
    ops = [(u, seg.qubits) for u, seg in zip(seg_unitaries[st.start:st.stop], program.segments[st.start:st.stop])]
    ops += [(c.matrix, c.qubits) for c in st.corrections]
    actual = compose(ops, reg)
    want = compose([(st.target, st.qubits)], reg)
    return phase_fidelity(want, actual)


def _finite_T_unitary(seg: SegmentHamiltonian, ratio: float) -> np.ndarray:
    scaled = seg.with_schedule(seg.schedule.with_T(ratio * T_D))
    return evolve_segment(scaled).geometric_part


def verify(program: PathProgram, T_values: Sequence[float] = (), method: str = "auto") -> VerificationReport:
    """Fidelity |Tr(U_target^dag U_geom)|/dim in exact-adiabatic mode, plus finite-T runs.

    ``T_values`` are segment durations in units of T_d. Programs wider than the
    dense limit are checked stage by stage, and the reported fidelity is then
    the minimum over stages.
    """
    if not program.segments and not program.stages:
        return VerificationReport(1.0, (), {}, 0, True)
    units = [segment_unitary(s, method) for s in program.segments]
    stage_f = tuple(_stage_fidelity(program, st, units) for st in program.stages)
    support = program.support
    whole = len(support) <= min(10, dense_limit())
    if whole:
        ops = []
        for st in program.stages:
            ops += [(u, s.qubits) for u, s in zip(units[st.start:st.stop], program.segments[st.start:st.stop])]
            ops += [(c.matrix, c.qubits) for c in st.corrections]
        fid = phase_fidelity(program.target_unitary(support), compose(ops, support))
    else:
        fid = min(stage_f)
    finite = {}
    for ratio in T_values:
        fu = [_finite_T_unitary(s, ratio) for s in program.segments]
        finite[float(ratio)] = min(_stage_fidelity(program, st, fu) for st in program.stages)
    return VerificationReport(float(fid), stage_f, finite, program.max_weight, whole)


def group_consistent(program: PathProgram) -> bool:
    """Tracked elements generate exactly ``group_after``, signs included."""
    if program.group_after is None:
        raise ValueError("program has no Clifford group_after")
    mine = [e.as_pauli() for e in program.elements_after]
    if any(p is None for p in mine):
        return False
    theirs = program.group_after.elements
    return (same_span(mine, theirs) and all(group_contains(theirs, p) for p in mine)
            and all(group_contains(mine, p) for p in theirs))


def ends_consistent(program: PathProgram, tol: float = 1e-12) -> bool:
    """Within each stage, adjacent segments meet at the same Hamiltonian up to sign."""
    for st in program.stages:
        segs = program.segments[st.start:st.stop]
        for a, b in zip(segs[:-1], segs[1:]):
            end, start = a.endpoint("end"), b.endpoint("start")
            if not (end.equals(start, tol) or end.equals(-start, tol)):
                return False
    return True


# weight audit --------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightAudit:
    per_segment: tuple[int, ...]
    overall: int


def weight_audit(program: PathProgram, budget: int | None = None) -> WeightAudit:
    per = tuple(s.max_weight for s in program.segments)
    audit = WeightAudit(per, max(per, default=0))
    if budget is not None and audit.overall > budget:
        worst = per.index(audit.overall)
        raise WeightBudgetError(
            f"segment {worst} ({program.segments[worst].label}) has weight {audit.overall} > {budget}")
    return audit


def dense_support(seg: SegmentHamiltonian, t: float) -> tuple[int, ...]:
    """Qubits on which the instantaneous Hamiltonian acts non-trivially (dense check)."""
    h = seg.hamiltonian(np.array([t]))[0]
    qs = seg.qubits
    k = len(qs)
    out = []
    for i, q in enumerate(qs):
        t6 = h.reshape((2,) * (2 * k))
        # partial trace over q, re-expanded, compared with h
        tr = np.trace(t6, axis1=i, axis2=k + i) / 2
        back = np.moveaxis(np.multiply.outer(tr, np.eye(2)), [2 * k - 2, 2 * k - 1], [i, k + i])
        if np.max(np.abs(back.reshape(h.shape) - h)) > 1e-12:
            out.append(q)
    return tuple(out)


# serialization -------------------------------------------------------------------------

def _sum_to_json(ps: PauliSum):
    return [[c, op.label] for c, op in ps.terms]


def _sum_from_json(items) -> PauliSum:
    return PauliSum.of(*((c, PauliOperator.from_string("+" + lab)) for c, lab in items))


def _mat_to_json(m: np.ndarray):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def _mat_from_json(rows) -> np.ndarray:
    return np.array([[complex(re_, im) for re_, im in row] for row in rows], dtype=complex)


def program_to_json(program: PathProgram) -> str:
    segs = []
    for s in program.segments:
        segs.append({
            "branches": [{"condition": [list(c) for c in br.condition], "start": _sum_to_json(br.start),
                          "end": _sum_to_json(br.end), "normalize": br.normalize} for br in s.branches],
            "schedule": {"kind": s.schedule.kind, "T": s.schedule.T},
            "form": s.form, "direction": s.direction, "label": s.label, "target": s.target,
            "G_tilde": None if s.G_tilde is None else str(s.G_tilde),
            "a": s.a, "b": s.b, "theta": s.theta,
        })
    stages = [{"name": st.name, "start": st.start, "stop": st.stop, "target": _mat_to_json(st.target),
               "qubits": list(st.qubits),
               "corrections": [{"label": c.label, "qubits": list(c.qubits), "matrix": _mat_to_json(c.matrix)}
                               for c in st.corrections]} for st in program.stages]
    return json.dumps({"name": program.name, "n": program.n, "segments": segs, "stages": stages,
                       "blocks": {str(k): v for k, v in program.block_map.items()}}, indent=1)


def program_from_json(text: str) -> PathProgram:
    d = json.loads(text)
    n = d["n"]
    segs = []
    for s in d["segments"]:
        branches = tuple(Branch(tuple(tuple(c) for c in br["condition"]), _sum_from_json(br["start"]),
                                _sum_from_json(br["end"]), br["normalize"]) for br in s["branches"])
        segs.append(SegmentHamiltonian(
            n, branches, Schedule(s["schedule"]["kind"], s["schedule"]["T"]), s["form"], s["direction"],
            s["label"], s["target"], None if s["G_tilde"] is None else PauliOperator.from_string(s["G_tilde"]),
            None if s["a"] is None else tuple(s["a"]), None if s["b"] is None else tuple(s["b"]), s["theta"]))
    stages = tuple(Stage(st["name"], st["start"], st["stop"], _mat_from_json(st["target"]), tuple(st["qubits"]),
                         tuple(Correction(c["label"], tuple(c["qubits"]), _mat_from_json(c["matrix"]))
                               for c in st["corrections"])) for st in d["stages"])
    blocks = {int(k): v for k, v in d.get("blocks", {}).items()}
    return PathProgram(d["name"], n, tuple(segs), stages, block_map=blocks)
