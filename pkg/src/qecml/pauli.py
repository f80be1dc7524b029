"""
Phaseless Pauli operators in binary-symplectic form and Clifford conjugation.

A Pauli string on ``n`` qubits is a pair of bit vectors ``(x, z)``; qubit ``i``
carries X if only ``x[i]`` is set, Z if only ``z[i]`` is set and Y if both are.
Global phases are dropped everywhere, so the product of two strings is the
componentwise XOR of their bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

_LETTERS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_SYMBOLS = {v: k for k, v in _LETTERS.items()}


class PauliString:
    """Immutable phaseless Pauli operator on a fixed register."""

    __slots__ = ("x", "z")

    def __init__(self, x, z):
        x = np.array(x, dtype=bool)
        z = np.array(z, dtype=bool)
        if x.ndim != 1 or x.shape != z.shape:
            raise ValueError(f"x and z bits must be 1-d with equal length, got {x.shape} and {z.shape}")
        x.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def __setattr__(self, name, value):
        raise AttributeError("PauliString is immutable")

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(np.zeros(n, bool), np.zeros(n, bool))

    @classmethod
    def from_str(cls, s: str) -> PauliString:
        """Parse a dense label such as ``"XIZY"`` (qubit 0 first)."""
        try:
            bits = [_LETTERS[c] for c in s.upper()]
        except KeyError as exc:
            raise ValueError(f"invalid Pauli label {s!r}") from exc
        return cls([b[0] for b in bits], [b[1] for b in bits])

    @classmethod
    def from_sparse(cls, n: int, ops: Mapping[int, str]) -> PauliString:
        """Build from ``{qubit: letter}``, e.g. ``from_sparse(5, {0: "X", 3: "Z"})``."""
        x = np.zeros(n, bool)
        z = np.zeros(n, bool)
        for q, letter in ops.items():
            if not 0 <= q < n:
                raise IndexError(f"qubit {q} outside register of size {n}")
            bx, bz = _LETTERS[letter.upper()]
            x[q], z[q] = bx, bz
        return cls(x, z)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> PauliString:
        return cls.from_sparse(n, {qubit: letter})

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.x | self.z))

    def support(self) -> list[int]:
        return np.flatnonzero(self.x | self.z).tolist()

    def is_identity(self) -> bool:
        return not (self.x.any() or self.z.any())

    def letter(self, q: int) -> str:
        return _SYMBOLS[(int(self.x[q]), int(self.z[q]))]

    def __mul__(self, other: PauliString) -> PauliString:
        return multiply(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliString):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z)

    def __hash__(self) -> int:
        return hash((self.x.tobytes(), self.z.tobytes()))

    def __str__(self) -> str:
        return "".join(self.letter(q) for q in range(self.n))

    def __repr__(self) -> str:
        return f"PauliString('{self}')"


def _check_sizes(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise ValueError(f"register size mismatch: {a.n} != {b.n}")


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Phaseless product ``a·b``."""
    _check_sizes(a, b)
    return PauliString(a.x ^ b.x, a.z ^ b.z)


def commutes(a: PauliString, b: PauliString) -> bool:
    """True iff the symplectic inner product of ``a`` and ``b`` vanishes mod 2."""
    _check_sizes(a, b)
    return not (np.count_nonzero(a.x & b.z) + np.count_nonzero(a.z & b.x)) % 2


class GateKind(str, Enum):
    PREP_Z = "PZ"
    PREP_X = "PX"
    H = "H"
    CNOT = "CNOT"
    MEAS_Z = "MZ"
    MEAS_X = "MX"
    IDLE = "ID"


PREPS = (GateKind.PREP_Z, GateKind.PREP_X)
MEASUREMENTS = (GateKind.MEAS_Z, GateKind.MEAS_X)


@dataclass(frozen=True)
class Gate:
    """A gate with its qubit operands; ``Gate(GateKind.CNOT, (control, target))``."""

    kind: GateKind
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = 2 if self.kind is GateKind.CNOT else 1
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind.value} takes {arity} operand(s), got {self.qubits}")
        if arity == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"CNOT operands must differ, got {self.qubits}")

    @property
    def arity(self) -> int:
        return len(self.qubits)

    def __str__(self) -> str:
        return " ".join([self.kind.value, *map(str, self.qubits)])

    @classmethod
    def parse(cls, text: str) -> Gate:
        kind, *qubits = text.split()
        return cls(GateKind(kind), tuple(int(q) for q in qubits))


def cnot(control: int, target: int) -> Gate:
    return Gate(GateKind.CNOT, (control, target))


def conjugate_through(p: PauliString, gate: Gate) -> PauliString:
    """Return ``g p g†`` for a Clifford ``gate`` with the phase dropped.

    Preparations reset the operand (its frame bits are cleared); measurements and
    idles act as the identity on the frame.
    """
    for q in gate.qubits:
        if not 0 <= q < p.n:
            raise IndexError(f"gate operand {q} outside register of size {p.n}")
    kind = gate.kind
    if kind in MEASUREMENTS or kind is GateKind.IDLE:
        return p
    x = p.x.copy()
    z = p.z.copy()
    if kind in PREPS:
        q, = gate.qubits
        x[q] = z[q] = False
    elif kind is GateKind.H:
        q, = gate.qubits
        x[q], z[q] = z[q], x[q]
    else:
        c, t = gate.qubits
        x[t] ^= x[c]
        z[c] ^= z[t]
    return PauliString(x, z)


def conjugate_all(p: PauliString, gates: Iterable[Gate]) -> PauliString:
    for g in gates:
        p = conjugate_through(p, g)
    return p
