"""
Syndrome-extraction circuits for the rotated surface code.

A round is a list of time steps; every qubit takes part in exactly one gate per
step (``ID`` fills the gaps).  Six-step rounds prepare and measure ancillas in
their native basis, eight-step rounds use Z-basis preparation and readout with
Hadamards around the CNOT block for X-type ancillas.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .code import SurfaceCode
from .pauli import Gate, GateKind, PauliString, conjugate_through


class Schedule(str, Enum):
    SN = "SN"
    CCC = "CCC"


# Corner visiting order of the four CNOT layers, per schedule and check type.
CNOT_ORDERS = {
    Schedule.SN: {"Z": ("NW", "NE", "SW", "SE"), "X": ("NW", "SW", "NE", "SE")},
    # Cyclic corner orders cannot be packed into four simultaneous CNOT layers
    # (every combination collides or randomises a readout).  CCC is therefore
    # the valid order whose hook errors run parallel to both logical operators:
    # the SN orders with the X and Z roles swapped.
    Schedule.CCC: {"X": ("NW", "NE", "SW", "SE"), "Z": ("NW", "SW", "NE", "SE")},
}

STEP_ROLES = ("prep", "hadamard", "cnot", "meas")


@dataclass(frozen=True)
class TimeStep:
    role: str
    gates: tuple[Gate, ...]

    def __str__(self) -> str:
        return "; ".join(str(g) for g in self.gates)


@dataclass(frozen=True)
class ExtractionCircuit:
    code: SurfaceCode
    schedule: Schedule
    n_steps: int
    steps: tuple[TimeStep, ...]

    @property
    def n_qubits(self) -> int:
        return self.code.n_qubits

    def measured_basis(self) -> dict[int, str]:
        """Readout basis ("Z" or "X") for every ancilla register index."""
        return {g.qubits[0]: ("Z" if g.kind is GateKind.MEAS_Z else "X") for g in self.steps[-1].gates
                if g.kind in (GateKind.MEAS_Z, GateKind.MEAS_X)}

    def locations(self):
        """Yield ``(step_index, step, gate)`` for every gate of the round."""
        for s, step in enumerate(self.steps):
            for g in step.gates:
                yield s, step, g

    def dump(self) -> str:
        return dump_circuit(self)


def _with_idles(code: SurfaceCode, role: str, gates: list[Gate]) -> TimeStep:
    used = {q for g in gates for q in g.qubits}
    idles = [Gate(GateKind.IDLE, (q,)) for q in range(code.n_qubits) if q not in used]
    return TimeStep(role, tuple(sorted(gates + idles, key=lambda g: g.qubits[0])))


def cnot_layers(code: SurfaceCode, orders: dict[str, tuple[str, ...]]) -> list[list[Gate]]:
    layers = []
    for k in range(4):
        gates = []
        for s in code.stabilizers:
            q = s.corners[orders[s.kind][k]]
            if q is None:
                continue
            a = code.ancilla(s.index)
            gates.append(Gate(GateKind.CNOT, (a, q) if s.kind == "X" else (q, a)))
        layers.append(gates)
    return layers


def build_circuit(code: SurfaceCode, schedule: Schedule | str = Schedule.SN, steps: int = 6,
                  orders: dict[str, tuple[str, ...]] | None = None) -> ExtractionCircuit:
    """One syndrome-measurement round.

    ``orders`` overrides the schedule's corner order (used to build deliberately
    broken circuits in tests).
    """
    schedule = Schedule(schedule)
    if steps not in (6, 8):
        raise ValueError(f"extraction circuits have 6 or 8 steps, got {steps}")
    orders = orders or CNOT_ORDERS[schedule]
    xs = [code.ancilla(i) for i in code.x_indices]
    zs = [code.ancilla(i) for i in code.z_indices]
    layers = [_with_idles(code, "cnot", g) for g in cnot_layers(code, orders)]
    if steps == 6:
        prep = [Gate(GateKind.PREP_Z, (a,)) for a in zs] + [Gate(GateKind.PREP_X, (a,)) for a in xs]
        meas = [Gate(GateKind.MEAS_Z, (a,)) for a in zs] + [Gate(GateKind.MEAS_X, (a,)) for a in xs]
        seq = [_with_idles(code, "prep", prep), *layers, _with_idles(code, "meas", meas)]
    else:
        prep = [Gate(GateKind.PREP_Z, (a,)) for a in zs + xs]
        had = [Gate(GateKind.H, (a,)) for a in xs]
        meas = [Gate(GateKind.MEAS_Z, (a,)) for a in zs + xs]
        seq = [_with_idles(code, "prep", prep), _with_idles(code, "hadamard", had), *layers,
               _with_idles(code, "hadamard", had), _with_idles(code, "meas", meas)]
    return ExtractionCircuit(code, schedule, steps, tuple(seq))


def validate(circuit: ExtractionCircuit) -> str | None:
    """Return ``None`` for a well-formed circuit, otherwise the first violation found."""
    code = circuit.code
    nq = code.n_qubits
    if circuit.n_steps not in (6, 8) or len(circuit.steps) != circuit.n_steps:
        return f"expected 6 or 8 steps, found n_steps={circuit.n_steps} with {len(circuit.steps)} steps"
    for s, step in enumerate(circuit.steps):
        seen: dict[int, Gate] = {}
        for g in step.gates:
            for q in g.qubits:
                if not 0 <= q < nq:
                    return f"step {s}: operand {q} outside register"
                if q in seen:
                    return f"step {s}: qubit {q} used by both '{seen[q]}' and '{g}'"
                seen[q] = g
        if len(seen) != nq:
            missing = sorted(set(range(nq)) - set(seen))
            return f"step {s}: qubits {missing[:5]} have no gate"

    partners: dict[int, list[int]] = {code.ancilla(i): [] for i in range(code.n_a)}
    for s, step, g in circuit.locations():
        if g.kind is not GateKind.CNOT:
            continue
        c, t = g.qubits
        if c in partners and code.stabilizers[c - code.n].kind == "X" and t < code.n:
            partners[c].append(t)
        elif t in partners and code.stabilizers[t - code.n].kind == "Z" and c < code.n:
            partners[t].append(c)
        else:
            return f"step {s}: '{g}' is not a data-ancilla CNOT in the right direction"
    for stab in code.stabilizers:
        got = partners[code.ancilla(stab.index)]
        if sorted(got) != sorted(stab.support):
            return f"stabilizer {stab.index}: CNOT partners {sorted(got)} != support {list(stab.support)}"

    # Heisenberg check: pull each readout observable back to just after the
    # preparation step; it must equal the stabilizer times prepared-state
    # stabilizers on the ancillas.
    basis = circuit.measured_basis()
    preps = {g.qubits[0]: g.kind for g in circuit.steps[0].gates if g.kind in (GateKind.PREP_Z, GateKind.PREP_X)}
    for stab in code.stabilizers:
        a = code.ancilla(stab.index)
        if a not in basis or a not in preps:
            return f"ancilla {a} is not prepared and measured"
        obs = PauliString.single(nq, a, basis[a])
        for step in reversed(circuit.steps[1:-1]):
            for g in step.gates:
                obs = conjugate_through(obs, g)
        expect = PauliString.from_sparse(nq, {q: stab.kind for q in stab.support})
        if not (obs.x[: code.n] == expect.x[: code.n]).all() or not (obs.z[: code.n] == expect.z[: code.n]).all():
            return f"stabilizer {stab.index}: circuit measures data operator {PauliString(obs.x[:code.n], obs.z[:code.n])}"
        for b, kind in preps.items():
            if (kind is GateKind.PREP_Z and obs.x[b]) or (kind is GateKind.PREP_X and obs.z[b]):
                return f"stabilizer {stab.index}: readout of ancilla {a} is randomised by ancilla {b}"
    return None


def dump_circuit(circuit: ExtractionCircuit) -> str:
    """One step per line, gates separated by ``"; "``."""
    return "\n".join(str(step) for step in circuit.steps) + "\n"


def parse_steps(text: str) -> list[list[Gate]]:
    return [[Gate.parse(tok) for tok in line.split(";") if tok.strip()]
            for line in text.splitlines() if line.strip()]
