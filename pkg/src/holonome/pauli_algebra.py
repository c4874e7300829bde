"""Phased Pauli operators in symplectic form, real Pauli sums, and Clifford conjugation.

Convention
----------
An operator is ``i**phase * sigma_0 (x) sigma_1 (x) ... (x) sigma_{n-1}`` where
qubit 0 is the leftmost tensor factor (most significant bit of a basis index)
and each site factor is read from its bit pair:

    ======  ======  ======
    x bit   z bit   factor
    ======  ======  ======
    0       0       I
    1       0       X
    0       1       Z
    1       1       Y
    ======  ======  ======

So ``phase`` is the literal power of i in front of the tensor product, and an
operator is Hermitian exactly when ``phase`` is even.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from ._numerics import I2, SX, SY, SZ, check_dense

_SITE = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_SITE_CHAR = {v: k for k, v in _SITE.items()}
_SITE_MAT = {"I": I2, "X": SX, "Y": SY, "Z": SZ}
_PREFIX = {0: "+", 1: "i", 2: "-", 3: "-i"}


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliOperator:
    """``i**phase`` times a tensor product of single-qubit Paulis.

    Bit ``j`` of ``x_bits``/``z_bits`` refers to qubit ``j``.
    """

    n: int
    x_bits: int
    z_bits: int
    phase: int = 0

    def __post_init__(self):
        mask = (1 << self.n) - 1
        if self.n < 0 or self.x_bits & ~mask or self.z_bits & ~mask:
            raise ValueError("bit vectors must fit in n qubits")
        object.__setattr__(self, "phase", self.phase % 4)

    # construction -------------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "PauliOperator":
        return cls(n, 0, 0, 0)

    @classmethod
    def from_string(cls, text: str) -> "PauliOperator":
        text = text.strip()
        phase = 0
        for prefix, p in (("-i", 3), ("+i", 1), ("i", 1), ("-", 2), ("+", 0)):
            if text.startswith(prefix):
                phase, text = p, text[len(prefix):]
                break
        if not text or any(c not in _SITE for c in text):
            raise ValueError(f"bad Pauli literal {text!r}")
        x = z = 0
        for j, c in enumerate(text):
            xb, zb = _SITE[c]
            x |= xb << j
            z |= zb << j
        return cls(len(text), x, z, phase)

    @classmethod
    def single(cls, n: int, qubit: int, label: str, phase: int = 0) -> "PauliOperator":
        return cls.from_sites(n, {qubit: label}, phase)

    @classmethod
    def from_sites(cls, n: int, sites: dict, phase: int = 0) -> "PauliOperator":
        x = z = 0
        for q, c in sites.items():
            if not 0 <= q < n:
                raise IndexError(f"qubit {q} out of range for n={n}")
            xb, zb = _SITE[c]
            x |= xb << q
            z |= zb << q
        return cls(n, x, z, phase)

    # inspection ---------------------------------------------------------
    def site(self, q: int) -> str:
        return _SITE_CHAR[((self.x_bits >> q) & 1, (self.z_bits >> q) & 1)]

    @property
    def label(self) -> str:
        return "".join(self.site(q) for q in range(self.n))

    @property
    def support(self) -> tuple[int, ...]:
        s = self.x_bits | self.z_bits
        return tuple(q for q in range(self.n) if (s >> q) & 1)

    @property
    def weight(self) -> int:
        return _popcount(self.x_bits | self.z_bits)

    @property
    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    @property
    def sign(self) -> int:
        if not self.is_hermitian:
            raise ValueError("sign is defined for Hermitian operators only")
        return 1 if self.phase == 0 else -1

    def unsigned(self) -> "PauliOperator":
        return PauliOperator(self.n, self.x_bits, self.z_bits, 0)

    def __str__(self) -> str:
        return _PREFIX[self.phase] + self.label

    def __repr__(self) -> str:
        return f"PauliOperator({str(self)!r})"

    # algebra ------------------------------------------------------------
    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        return pauli_mul(self, other)

    def __neg__(self) -> "PauliOperator":
        return PauliOperator(self.n, self.x_bits, self.z_bits, self.phase + 2)

    def times_i(self, k: int = 1) -> "PauliOperator":
        return PauliOperator(self.n, self.x_bits, self.z_bits, self.phase + k)

    def dagger(self) -> "PauliOperator":
        return PauliOperator(self.n, self.x_bits, self.z_bits, -self.phase)

    def restrict(self, qubits: Sequence[int]) -> "PauliOperator":
        """Factor on ``qubits`` (in the given order), phase kept."""
        sites = {i: self.site(q) for i, q in enumerate(qubits)}
        return PauliOperator.from_sites(len(qubits), sites, self.phase)

    def embed(self, n: int, qubits: Sequence[int]) -> "PauliOperator":
        """Place this operator on ``qubits`` of an n-qubit register."""
        if len(qubits) != self.n:
            raise ValueError("qubit map has the wrong length")
        sites = {q: self.site(i) for i, q in enumerate(qubits)}
        return PauliOperator.from_sites(n, sites, self.phase)

    def dense(self, qubits: Sequence[int] | None = None) -> np.ndarray:
        return dense(self, qubits)


def _check_size(a: PauliOperator, b: PauliOperator) -> None:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n} qubits")


def pauli_mul(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """Exact product ``a @ b`` with the phase tracked symbolically."""
    _check_size(a, b)
    x, z = a.x_bits ^ b.x_bits, a.z_bits ^ b.z_bits
    # sigma(x, z) = i^(xz) X^x Z^z; moving Z^z1 past X^x2 costs (-1)^(z1 x2)
    phase = (
        a.phase + b.phase
        + _popcount(a.x_bits & a.z_bits) + _popcount(b.x_bits & b.z_bits)
        + 2 * _popcount(a.z_bits & b.x_bits)
        - _popcount(x & z)
    )
    return PauliOperator(a.n, x, z, phase)


def commutes(a: PauliOperator, b: PauliOperator) -> bool:
    _check_size(a, b)
    return (_popcount(a.x_bits & b.z_bits) + _popcount(a.z_bits & b.x_bits)) % 2 == 0


def dense(p: PauliOperator, qubits: Sequence[int] | None = None) -> np.ndarray:
    """Dense matrix of ``p``; with ``qubits`` given, of its factor on those qubits.

    The operator must act as identity outside ``qubits``.
    """
    if qubits is None:
        qubits = range(p.n)
    qubits = list(qubits)
    outside = (p.x_bits | p.z_bits) & ~sum(1 << q for q in qubits)
    if outside:
        raise ValueError(f"{p} acts outside qubits {qubits}")
    check_dense(len(qubits))
    mats = [_SITE_MAT[p.site(q)] for q in qubits]
    out = reduce(np.kron, mats, np.ones((1, 1), dtype=complex))
    return (1j ** p.phase) * out


# Clifford conjugation ------------------------------------------------------

@dataclass(frozen=True)
class CliffordGate:
    """A named gate from {H, S, Sdg, X, Y, Z, CNOT}."""

    name: str

    @property
    def arity(self) -> int:
        return 2 if self.name == "CNOT" else 1

    def inverse(self) -> "CliffordGate":
        return CliffordGate({"S": "Sdg", "Sdg": "S"}.get(self.name, self.name))


CLIFFORD_NAMES = ("H", "S", "Sdg", "X", "Y", "Z", "CNOT")

# image of (X, Z) for each single-qubit gate as (label, phase)
_ONE_QUBIT_IMAGES = {
    "H": (("Z", 0), ("X", 0)),
    "S": (("Y", 0), ("Z", 0)),
    "Sdg": (("Y", 2), ("Z", 0)),
    "X": (("X", 0), ("Z", 2)),
    "Y": (("X", 2), ("Z", 2)),
    "Z": (("X", 2), ("Z", 0)),
}


def _generator_images(n: int, gate: CliffordGate, targets: Sequence[int]):
    if gate.name == "CNOT":
        c, t = targets
        return {
            ("X", c): PauliOperator.from_sites(n, {c: "X", t: "X"}),
            ("Z", t): PauliOperator.from_sites(n, {c: "Z", t: "Z"}),
        }
    (q,) = targets
    (xl, xp), (zl, zp) = _ONE_QUBIT_IMAGES[gate.name]
    return {
        ("X", q): PauliOperator.single(n, q, xl, xp),
        ("Z", q): PauliOperator.single(n, q, zl, zp),
    }


def clifford_conjugate(p: PauliOperator, gate: CliffordGate | str, targets: Sequence[int]) -> PauliOperator:
    """Return U p U^dag for the Clifford ``gate`` acting on ``targets``."""
    if isinstance(gate, str):
        gate = CliffordGate(gate)
    if gate.name not in CLIFFORD_NAMES:
        raise ValueError(f"unknown Clifford gate {gate.name!r}")
    targets = tuple(targets)
    if len(targets) != gate.arity or len(set(targets)) != len(targets):
        raise ValueError(f"{gate.name} needs {gate.arity} distinct targets")
    if any(not 0 <= q < p.n for q in targets):
        raise IndexError(f"targets {targets} out of range for n={p.n}")
    images = _generator_images(p.n, gate, targets)
    # p = i^(phase + #Y) * prod_j X_j^x Z_j^z
    out = PauliOperator(p.n, 0, 0, p.phase + _popcount(p.x_bits & p.z_bits))
    for q in range(p.n):
        for kind, bit in (("X", p.x_bits), ("Z", p.z_bits)):
            if (bit >> q) & 1:
                img = images.get((kind, q), PauliOperator.single(p.n, q, kind))
                out = pauli_mul(out, img)
    return out


# Gate matrices ---------------------------------------------------------------

_T = np.diag([1, np.exp(1j * np.pi / 4)])
GATE_MATRICES: dict[str, np.ndarray] = {
    "I": I2,
    "X": SX,
    "Y": SY,
    "Z": SZ,
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.diag([1, 1j]).astype(complex),
    "Sdg": np.diag([1, -1j]).astype(complex),
    "T": _T.astype(complex),
    "Tdg": np.conj(_T).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


# Real linear combinations ---------------------------------------------------

@dataclass(frozen=True)
class PauliSum:
    """A real linear combination of Hermitian Pauli operators.

    Terms are stored with phase 0; signs live in the coefficients. Used for
    segment endpoints such as ``-(cos t X + sin t Y) (x) G``.
    """

    terms: tuple[tuple[float, PauliOperator], ...]

    @classmethod
    def of(cls, *items) -> "PauliSum":
        """Build from PauliOperators, literals, or (coef, op) pairs."""
        acc: dict[tuple[int, int, int], float] = {}
        n = None
        for item in items:
            coef, op = (item if isinstance(item, tuple) else (1.0, item))
            if isinstance(op, str):
                op = PauliOperator.from_string(op)
            if not op.is_hermitian:
                raise ValueError(f"{op} is not Hermitian")
            n = op.n if n is None else n
            if op.n != n:
                raise ValueError("mixed register sizes")
            key = (op.n, op.x_bits, op.z_bits)
            acc[key] = acc.get(key, 0.0) + float(coef) * op.sign
        terms = tuple(
            (c, PauliOperator(*k)) for k, c in sorted(acc.items(), key=lambda kv: (kv[0][1], kv[0][2]))
            if abs(c) > 1e-15
        )
        if n is None:
            raise ValueError("empty PauliSum")
        return cls(terms) if terms else cls(((0.0, PauliOperator.identity(n)),))

    @property
    def n(self) -> int:
        return self.terms[0][1].n

    @property
    def support(self) -> tuple[int, ...]:
        s = 0
        for c, op in self.terms:
            if c != 0:
                s |= op.x_bits | op.z_bits
        return tuple(q for q in range(self.n) if (s >> q) & 1)

    @property
    def max_term_weight(self) -> int:
        return max((op.weight for c, op in self.terms if c != 0), default=0)

    def as_pauli(self) -> PauliOperator | None:
        """The single signed Pauli this sum equals, if it is one."""
        if len(self.terms) == 1 and abs(abs(self.terms[0][0]) - 1) < 1e-12:
            c, op = self.terms[0]
            return op if c > 0 else -op
        return None

    def __neg__(self) -> "PauliSum":
        return PauliSum(tuple((-c, op) for c, op in self.terms))

    def __add__(self, other: "PauliSum") -> "PauliSum":
        return PauliSum.of(*self.terms, *other.terms)

    def scale(self, a: float) -> "PauliSum":
        return PauliSum(tuple((a * c, op) for c, op in self.terms))

    def times(self, p: PauliOperator) -> "PauliSum":
        """Right-multiply every term by a Pauli that commutes with it."""
        out = []
        for c, op in self.terms:
            prod = pauli_mul(op, p)
            if not prod.is_hermitian:
                raise ValueError("product of non-commuting terms is not Hermitian")
            out.append((c, prod))
        return PauliSum.of(*out)

    def equals(self, other: "PauliSum", tol: float = 1e-12) -> bool:
        diff = PauliSum.of(*self.terms, *other.scale(-1.0).terms)
        return all(abs(c) < tol for c, _ in diff.terms)

    def dense(self, qubits: Sequence[int] | None = None) -> np.ndarray:
        mats = [c * dense(op, qubits) for c, op in self.terms]
        return sum(mats[1:], mats[0])

    def conjugate(self, gate: CliffordGate | str, targets: Sequence[int]) -> "PauliSum":
        return PauliSum.of(*((c, clifford_conjugate(op, gate, targets)) for c, op in self.terms))

    def conjugate_unitary(self, qubit: int, u: np.ndarray) -> "PauliSum":
        """Conjugate by a single-qubit unitary, re-expanding in the Pauli basis."""
        basis = {"I": I2, "X": SX, "Y": SY, "Z": SZ}
        out = []
        for c, op in self.terms:
            site = op.site(qubit)
            image = u @ basis[site] @ np.conj(u).T
            for lab, mat in basis.items():
                coef = np.trace(mat @ image).real / 2
                if abs(coef) > 1e-14:
                    sites = {q: op.site(q) for q in op.support if q != qubit}
                    if lab != "I":
                        sites[qubit] = lab
                    out.append((c * coef, PauliOperator.from_sites(op.n, sites)))
        return PauliSum.of(*out)

    def __str__(self) -> str:
        parts = []
        for c, op in self.terms:
            if abs(abs(c) - 1) < 1e-12:
                parts.append(("-" if c < 0 else "+") + op.label)
            else:
                parts.append(f"{c:+.6g}*{op.label}")
        return " ".join(parts)


def bloch_sum(n: int, qubit: int, vec: Iterable[float], rest: PauliOperator | None = None) -> PauliSum:
    """``(v.sigma)_qubit (x) rest`` as a PauliSum; ``rest`` must be Hermitian and avoid ``qubit``."""
    vec = list(vec)
    items = []
    for lab, c in zip("XYZ", vec):
        if abs(c) > 1e-15:
            op = PauliOperator.single(n, qubit, lab)
            if rest is not None:
                if (rest.x_bits | rest.z_bits) >> qubit & 1:
                    raise ValueError("rest overlaps the addressed qubit")
                op = pauli_mul(op, rest)
            items.append((c, op))
    return PauliSum.of(*items)
