"""Subsystem stabilizer codes, group tracking, and the starting-element search."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .pauli_algebra import CliffordGate, PauliOperator, clifford_conjugate, commutes, pauli_mul


class SearchFailure(LookupError):
    """No group element has the requested single-qubit form."""


# GF(2) symplectic helpers ---------------------------------------------------

def symplectic(p: PauliOperator) -> int:
    """Pack an operator as ``x | z << n`` (phase dropped)."""
    return p.x_bits | (p.z_bits << p.n)


def _reduce(basis: dict[int, int], v: int) -> int:
    for pivot in sorted(basis, reverse=True):
        if (v >> pivot) & 1:
            v ^= basis[pivot]
    return v


def gf2_basis(vectors: Iterable[int]) -> dict[int, int]:
    """Echelon basis keyed by leading bit."""
    basis: dict[int, int] = {}
    for v in vectors:
        v = _reduce(basis, v)
        if v:
            basis[v.bit_length() - 1] = v
    return basis


def gf2_rank(vectors: Iterable[int]) -> int:
    return len(gf2_basis(vectors))


def in_span(vectors: Iterable[int], v: int) -> bool:
    return _reduce(gf2_basis(vectors), v) == 0


def same_span(a: Iterable[PauliOperator], b: Iterable[PauliOperator]) -> bool:
    va, vb = [symplectic(p) for p in a], [symplectic(p) for p in b]
    ba = gf2_basis(va)
    return all(_reduce(ba, v) == 0 for v in vb) and gf2_rank(va) == gf2_rank(vb)


# Codes --------------------------------------------------------------------

@dataclass(frozen=True)
class CodeSpec:
    """A subsystem stabilizer code on one block.

    ``gauge_gens`` generate the full gauge group, which contains the
    stabilizer. Generator lists may be redundant; invariants are checked by
    GF(2) rank rather than list length.
    """

    name: str
    n: int
    k: int
    r: int
    stabilizer_gens: tuple[PauliOperator, ...]
    gauge_gens: tuple[PauliOperator, ...]
    logical_x: tuple[PauliOperator, ...]
    logical_z: tuple[PauliOperator, ...]
    layout: dict | None = None

    def validate(self) -> None:
        """Raise ``ValueError`` describing the first violated invariant."""
        ops = self.stabilizer_gens + self.gauge_gens + self.logical_x + self.logical_z
        if any(p.n != self.n for p in ops):
            raise ValueError("operator on the wrong number of qubits")
        for s in self.stabilizer_gens:
            for p in ops:
                if not commutes(s, p):
                    raise ValueError(f"stabilizer {s} fails to commute with {p}")
        for g in self.gauge_gens:
            for lg in self.logical_x + self.logical_z:
                if not commutes(g, lg):
                    raise ValueError(f"gauge {g} fails to commute with logical {lg}")
        for i, lx in enumerate(self.logical_x):
            for j, lz in enumerate(self.logical_z):
                if commutes(lx, lz) == (i == j):
                    raise ValueError(f"logical pair ({i},{j}) has the wrong commutation")
        s_vecs = [symplectic(s) for s in self.stabilizer_gens]
        g_vecs = [symplectic(g) for g in self.gauge_gens]
        if gf2_rank(s_vecs) != self.n - self.r - self.k:
            raise ValueError("stabilizer rank differs from n - r - k")
        if not all(in_span(g_vecs, v) for v in s_vecs):
            raise ValueError("stabilizer is not inside the gauge group")
        if gf2_rank(g_vecs) - gf2_rank(s_vecs) != 2 * self.r:
            raise ValueError("gauge rank modulo the stabilizer differs from 2r")
        if _generates_minus_identity(self.stabilizer_gens):
            raise ValueError("stabilizer generators produce -I")

    def to_json(self) -> str:
        doc = {
            "name": self.name, "n": self.n, "k": self.k, "r": self.r,
            "stabilizers": [str(p) for p in self.stabilizer_gens],
            "gauge": [str(p) for p in self.gauge_gens],
            "logical_x": [str(p) for p in self.logical_x],
            "logical_z": [str(p) for p in self.logical_z],
            "layout": self.layout,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CodeSpec":
        doc = json.loads(text)
        parse = lambda key: tuple(PauliOperator.from_string(s) for s in doc[key])
        code = cls(doc["name"], doc["n"], doc["k"], doc["r"], parse("stabilizers"), parse("gauge"),
                   parse("logical_x"), parse("logical_z"), doc.get("layout"))
        code.validate()
        return code


def _reduce_ops(basis: list[tuple[int, PauliOperator]], p: PauliOperator) -> tuple[int, PauliOperator]:
    v, op = symplectic(p), p
    for bv, bop in basis:
        if (v >> (bv.bit_length() - 1)) & 1:
            v, op = v ^ bv, pauli_mul(op, bop)
    return v, op


def _operator_basis(gens: Iterable[PauliOperator]) -> list[tuple[int, PauliOperator]]:
    """Echelon basis of actual operators, sorted by leading bit (descending)."""
    basis: list[tuple[int, PauliOperator]] = []
    for g in gens:
        v, op = _reduce_ops(basis, g)
        if v:
            basis.append((v, op))
            basis.sort(key=lambda t: -t[0])
    return basis


def _generates_minus_identity(gens: Sequence[PauliOperator]) -> bool:
    basis: list[tuple[int, PauliOperator]] = []
    for g in gens:
        v, op = _reduce_ops(basis, g)
        if v == 0 and op.phase != 0:
            return True
        if v:
            basis.append((v, op))
            basis.sort(key=lambda t: -t[0])
    return False


def group_contains(gens: Iterable[PauliOperator], p: PauliOperator) -> bool:
    """Whether ``p``, sign included, is a product of ``gens``."""
    v, op = _reduce_ops(_operator_basis(gens), p)
    return v == 0 and op.phase == 0


def bs_qubit(row: int, col: int) -> int:
    """Index of grid site (row, col), both 1-based, in the 3x3 Bacon-Shor block."""
    return 3 * (row - 1) + (col - 1)


def build_bacon_shor() -> CodeSpec:
    """The 9-qubit Bacon-Shor code on a 3x3 grid.

    Gauge generators are the weight-2 families ZZ along rows and XX along
    columns. Stabilizers are derived products: Z on two adjacent columns and X
    on two adjacent rows.
    """
    n = 9
    site = lambda ops: PauliOperator.from_sites(n, ops)
    z_pairs = [site({bs_qubit(k, j): "Z", bs_qubit(k, j + 1): "Z"}) for k in (1, 2, 3) for j in (1, 2)]
    x_pairs = [site({bs_qubit(j, k): "X", bs_qubit(j + 1, k): "X"}) for k in (1, 2, 3) for j in (1, 2)]

    def product(ops):
        out = PauliOperator.identity(n)
        for p in ops:
            out = pauli_mul(out, p)
        return out

    # Z on columns j, j+1 = product over rows of Z_{k,j} Z_{k,j+1}
    z_stabs = [product(z_pairs[2 * (k - 1) + (j - 1)] for k in (1, 2, 3)) for j in (1, 2)]
    # X on rows j, j+1 = product over columns of X_{j,k} X_{j+1,k}
    x_stabs = [product(x_pairs[2 * (k - 1) + (j - 1)] for k in (1, 2, 3)) for j in (1, 2)]
    logical_x = site({bs_qubit(1, c): "X" for c in (1, 2, 3)})
    logical_z = site({bs_qubit(r, 1): "Z" for r in (1, 2, 3)})
    layout = {"rows": 3, "cols": 3, "coords": [[q // 3 + 1, q % 3 + 1] for q in range(n)]}
    code = CodeSpec("bacon-shor-9", n, 1, 4, tuple(z_stabs + x_stabs), tuple(z_pairs + x_pairs),
                    (logical_x,), (logical_z,), layout)
    code.validate()
    return code


def check_correctable(code: CodeSpec, errors: Sequence[PauliOperator]) -> bool:
    """Pairwise error-correction condition for a subsystem code.

    Every product ``E_i E_j`` must anticommute with a stabilizer generator or
    lie in the gauge group (which contains the stabilizer), phases ignored.
    """
    g_basis = gf2_basis(symplectic(g) for g in code.gauge_gens)
    for i, a in enumerate(errors):
        for b in errors[i:]:
            prod = pauli_mul(a, b)
            if any(not commutes(prod, s) for s in code.stabilizer_gens):
                continue
            if _reduce(g_basis, symplectic(prod)) != 0:
                return False
    return True


# Tracking ---------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalElement:
    """``|0><0|_c (x) branch0 + |1><1|_c (x) branch1`` on a shared register."""

    control: int
    branch0: PauliOperator
    branch1: PauliOperator

    def __str__(self) -> str:
        return f"|0><0|_{self.control} {self.branch0} + |1><1|_{self.control} {self.branch1}"


@dataclass(frozen=True)
class ConditionalGate:
    """Marker for a Clifford gate applied only when ``control`` is |1>."""

    control: int
    gate: str


@dataclass(frozen=True)
class TrackedGroup:
    """Generators of the current stabilizer and gauge groups of a register.

    ``stabilizers`` and ``gauge`` are kept apart so recovery knows which
    generators define syndromes; ``elements`` is their concatenation.
    ``block_map`` sends each qubit to a block label.
    """

    n: int
    stabilizers: tuple[PauliOperator, ...]
    gauge: tuple[PauliOperator, ...]
    block_map: dict = field(default_factory=dict, compare=False)
    conditional: tuple[ConditionalElement, ...] = ()

    @property
    def elements(self) -> tuple[PauliOperator, ...]:
        return self.stabilizers + self.gauge

    def block_qubits(self, block) -> tuple[int, ...]:
        return tuple(q for q in range(self.n) if self.block_map.get(q) == block)

    @classmethod
    def from_code(cls, code: CodeSpec, block="A") -> "TrackedGroup":
        return cls(code.n, code.stabilizer_gens, code.gauge_gens, {q: block for q in range(code.n)})

    @classmethod
    def single_qubits(cls, n: int, block="q") -> "TrackedGroup":
        """Fresh qubits each stabilized by Z."""
        stabs = tuple(PauliOperator.single(n, q, "Z") for q in range(n))
        return cls(n, stabs, (), {q: block for q in range(n)})

    @classmethod
    def cat(cls, m: int, block="cat") -> "TrackedGroup":
        """Stabilizer of the m-qubit cat state: Z_1 Z_j and X...X."""
        stabs = [PauliOperator.from_sites(m, {0: "Z", j: "Z"}) for j in range(1, m)]
        stabs.append(PauliOperator.from_sites(m, {q: "X" for q in range(m)}))
        return cls(m, tuple(stabs), (), {q: block for q in range(m)})

    def tensor(self, other: "TrackedGroup") -> "TrackedGroup":
        n = self.n + other.n
        left = lambda p: p.embed(n, range(self.n))
        right = lambda p: p.embed(n, range(self.n, n))
        bmap = dict(self.block_map)
        bmap.update({q + self.n: b for q, b in other.block_map.items()})
        return TrackedGroup(
            n,
            tuple(map(left, self.stabilizers)) + tuple(map(right, other.stabilizers)),
            tuple(map(left, self.gauge)) + tuple(map(right, other.gauge)),
            bmap,
        )

    def with_gauge(self, extra: Iterable[PauliOperator]) -> "TrackedGroup":
        return replace(self, gauge=self.gauge + tuple(extra))


def _conjugate_all(ops, gate, targets):
    return tuple(clifford_conjugate(p, gate, targets) for p in ops)


def track(group: TrackedGroup, gate, targets: Sequence[int] = ()) -> TrackedGroup:
    """Conjugate every generator by a Clifford gate or a conditional Clifford."""
    if any(not 0 <= q < group.n for q in targets):
        raise IndexError(f"targets {tuple(targets)} out of range")
    if isinstance(gate, ConditionalGate):
        return _track_conditional(group, gate, targets)
    gate = CliffordGate(gate) if isinstance(gate, str) else gate
    return replace(
        group,
        stabilizers=_conjugate_all(group.stabilizers, gate, targets),
        gauge=_conjugate_all(group.gauge, gate, targets),
        conditional=tuple(
            ConditionalElement(
                c.control,
                clifford_conjugate(c.branch0, gate, targets),
                clifford_conjugate(c.branch1, gate, targets),
            )
            for c in group.conditional
        ),
    )


def _track_conditional(group: TrackedGroup, marker: ConditionalGate, targets) -> TrackedGroup:
    c = marker.control
    if c in targets:
        raise ValueError("control qubit cannot also be a target")
    keep_s, keep_g, cond = [], [], list(group.conditional)
    for kind, ops in (("s", group.stabilizers), ("g", group.gauge)):
        for p in ops:
            image = clifford_conjugate(p, marker.gate, targets)
            if image == p:
                (keep_s if kind == "s" else keep_g).append(p)
                continue
            if p.site(c) in ("X", "Y"):
                raise ValueError(f"{p} is not diagonal on control {c}; conditional form undefined")
            cond.append(ConditionalElement(c, p, image))
    return replace(group, stabilizers=tuple(keep_s), gauge=tuple(keep_g), conditional=tuple(cond))


# Starting-element search ------------------------------------------------------

_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}


def find_element(group: TrackedGroup, constraints: dict[int, str]) -> PauliOperator:
    """Minimal-weight non-identity group element with prescribed factors.

    ``constraints`` maps qubits to the required single-qubit factor. Ties are
    broken by weight, then sorted support, then label. The result is made
    Hermitian by absorbing a factor of i where needed.
    """
    n = group.n
    basis = _operator_basis(group.elements)
    if not basis:
        raise SearchFailure("group is trivial")
    vecs = [v for v, _ in basis]
    m = len(vecs)

    # linear system on the combination c: selected symplectic bits equal targets
    rows, rhs = [], []
    for q, label in constraints.items():
        xb, zb = _BITS[label]
        for bit, want in ((q, xb), (q + n, zb)):
            rows.append(sum(((v >> bit) & 1) << i for i, v in enumerate(vecs)))
            rhs.append(want)
    particular, null = _solve_gf2(rows, rhs, m)
    if particular is None:
        raise SearchFailure(f"no element with factors {constraints}")

    combo_value = lambda c: _xor_select(vecs, c)
    base = combo_value(particular)
    null_vals = [combo_value(c) for c in null]
    best = _min_weight_candidates(base, null_vals, n)
    if best is None:
        raise SearchFailure(f"only the identity satisfies {constraints}")
    candidates = []
    for mask in best:
        c = particular
        for i, nv in enumerate(null):
            if (mask >> i) & 1:
                c ^= nv
        op = PauliOperator.identity(n)
        for i, (_, bop) in enumerate(basis):
            if (c >> i) & 1:
                op = pauli_mul(op, bop)
        if not op.is_hermitian:
            op = op.times_i(-1)
        candidates.append(op)
    return min(candidates, key=lambda p: (p.weight, p.support, p.label, p.phase))


def find_starting_element(group: TrackedGroup, qubit: int, desired: str,
                          trivial_on: Iterable[int] = (), also: dict[int, str] | None = None) -> PauliOperator:
    """Element whose factor on ``qubit`` is ``desired`` and which is I on ``trivial_on``."""
    if desired not in _BITS:
        raise ValueError(f"desired factor must be one of I, X, Y, Z, got {desired!r}")
    cons = {q: "I" for q in trivial_on}
    cons.update(also or {})
    cons[qubit] = desired
    return find_element(group, cons)


def _xor_select(vecs: Sequence[int], mask: int) -> int:
    out = 0
    i = 0
    while mask:
        if mask & 1:
            out ^= vecs[i]
        mask >>= 1
        i += 1
    return out


def _solve_gf2(rows: list[int], rhs: list[int], m: int):
    """Solve rows . c = rhs over GF(2); return a particular solution and a null basis."""
    aug = [(r, b) for r, b in zip(rows, rhs)]
    pivots: list[tuple[int, int, int]] = []  # (pivot column, row, rhs)
    for r, b in aug:
        for col, pr, pb in pivots:
            if (r >> col) & 1:
                r ^= pr
                b ^= pb
        if r == 0:
            if b:
                return None, []
            continue
        col = r.bit_length() - 1
        # eliminate this column from earlier pivot rows to keep reduced form
        pivots = [((pc, pr ^ r, pb ^ b) if (pr >> col) & 1 else (pc, pr, pb)) for pc, pr, pb in pivots]
        pivots.append((col, r, b))
    pivot_cols = {pc for pc, _, _ in pivots}
    particular = 0
    for pc, pr, pb in pivots:
        if pb:
            particular |= 1 << pc
    null = []
    for free in range(m):
        if free in pivot_cols:
            continue
        vec = 1 << free
        for pc, pr, pb in pivots:
            if (pr >> free) & 1:
                vec |= 1 << pc
        null.append(vec)
    return particular, null


def _weights(vals: np.ndarray, n: int) -> np.ndarray:
    mask = np.uint64((1 << n) - 1)
    return np.bitwise_count((vals | (vals >> np.uint64(n))) & mask).astype(np.int64)


def _min_weight_candidates(base: int, null_vals: list[int], n: int, chunk_bits: int = 12):
    """Masks over ``null_vals`` achieving the minimum nonzero weight."""
    d = len(null_vals)
    lo_bits = min(d, chunk_bits)
    lo_vals = np.zeros(1 << lo_bits, dtype=np.uint64)
    for i in range(lo_bits):
        size = 1 << i
        lo_vals[size:2 * size] = lo_vals[:size] ^ np.uint64(null_vals[i])
    best_w, best = None, []
    for hi in range(1 << (d - lo_bits)):
        acc = base
        for j in range(d - lo_bits):
            if (hi >> j) & 1:
                acc ^= null_vals[lo_bits + j]
        vals = lo_vals ^ np.uint64(acc)
        w = _weights(vals, n)
        w = np.where(vals == 0, n + 1, w)
        wmin = int(w.min())
        if wmin > n or (best_w is not None and wmin > best_w):
            continue
        idx = np.nonzero(w == wmin)[0]
        masks = [int(i) | (hi << lo_bits) for i in idx]
        if best_w is None or wmin < best_w:
            best_w, best = wmin, masks
        else:
            best.extend(masks)
    return best if best_w is not None else None
