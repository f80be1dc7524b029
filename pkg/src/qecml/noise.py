"""
Circuit-level Pauli noise models.

Every gate of a round is a fault location.  A location's
:class:`FaultDistribution` lists mutually exclusive non-identity Pauli faults on
the gate's operands; whatever probability is left over is the no-fault case.
Faults act after the gate, except at measurements where they act just before
the readout.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .pauli import MEASUREMENTS, Gate, GateKind, PauliString

_ONE_QUBIT = ("X", "Y", "Z")
_TWO_QUBIT = tuple(a + b for a, b in itertools.product("IXYZ", repeat=2) if a + b != "II")


@dataclass(frozen=True)
class FaultDistribution:
    gate: Gate
    alternatives: tuple[tuple[PauliString, float], ...]

    def __post_init__(self):
        total = 0.0
        for fault, prob in self.alternatives:
            if fault.is_identity():
                raise ValueError("identity listed as a fault alternative")
            if fault.n != self.gate.arity:
                raise ValueError(f"fault {fault} does not match operands of {self.gate}")
            if not 0.0 <= prob <= 1.0 or math.isnan(prob):
                raise ValueError(f"fault probability {prob} outside [0, 1]")
            total += prob
        if total > 1.0 + 1e-12:
            raise ValueError(f"fault probabilities of {self.gate} sum to {total} > 1")

    @property
    def total(self) -> float:
        return float(sum(p for _, p in self.alternatives))

    @property
    def no_fault(self) -> float:
        return 1.0 - self.total

    def xy_marginal(self, operand: int) -> float:
        """Probability that the fault has an X or Y component on ``operand``."""
        return float(sum(p for f, p in self.alternatives if f.x[operand]))


def _pauli_channel(px: float, py: float, pz: float, arity: int) -> list[tuple[str, float]]:
    """Independent single-qubit Pauli channel on each operand, as joint alternatives."""
    single = {"I": 1.0 - px - py - pz, "X": px, "Y": py, "Z": pz}
    if arity == 1:
        return [(k, single[k]) for k in _ONE_QUBIT]
    return [(k, single[k[0]] * single[k[1]]) for k in _TWO_QUBIT]


@dataclass(frozen=True)
class NoiseModel:
    """Base class; ``rate_scale`` multiplies every fault probability (decoder-mismatch studies)."""

    rate_scale: float = field(default=1.0, kw_only=True)

    def _channel(self, gate: Gate, step_role: str, is_data: tuple[bool, ...],
                 pre_measure: bool) -> list[tuple[str, float]]:
        raise NotImplementedError

    def channel(self, gate: Gate, step_role: str, is_data: tuple[bool, ...] = (),
                pre_measure: bool = False) -> FaultDistribution:
        is_data = tuple(is_data) or (False,) * gate.arity
        alts = []
        for label, prob in self._channel(gate, step_role, is_data, pre_measure):
            prob *= self.rate_scale
            if prob < 0 or prob > 1:
                raise ValueError(f"{self} gives probability {prob} for {label} on {gate}")
            if prob > 0:
                alts.append((PauliString.from_str(label), prob))
        return FaultDistribution(gate, tuple(alts))

    def scaled(self, factor: float) -> NoiseModel:
        return replace(self, rate_scale=self.rate_scale * factor)

    @property
    def name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class WangFowler(NoiseModel):
    """Depolarizing ``p/3`` on one-qubit locations, ``p/15`` per two-qubit Pauli on CNOTs."""

    p: float

    def _channel(self, gate, step_role, is_data, pre_measure):
        if gate.kind is GateKind.CNOT:
            return [(k, self.p / 15) for k in _TWO_QUBIT]
        return [(k, self.p / 3) for k in _ONE_QUBIT]


@dataclass(frozen=True)
class IndependentXZ(NoiseModel):
    """Independent bit and phase flips with probability ``p`` on every operand."""

    p: float

    def _channel(self, gate, step_role, is_data, pre_measure):
        p = self.p
        return _pauli_channel(p * (1 - p), p * p, p * (1 - p), gate.arity)


@dataclass(frozen=True)
class Phenomenological(NoiseModel):
    """Data flips once per round (in the step before readout) plus readout flips.

    ``q_meas`` defaults to ``p_data``.
    """

    p_data: float
    q_meas: float | None = None

    @property
    def q(self) -> float:
        return self.p_data if self.q_meas is None else self.q_meas

    def _channel(self, gate, step_role, is_data, pre_measure):
        if gate.kind in MEASUREMENTS:
            return [("X" if gate.kind is GateKind.MEAS_Z else "Z", self.q)]
        if not pre_measure or not any(is_data):
            return []
        p = self.p_data
        one = {"I": 1.0, "X": p * (1 - p), "Y": p * p, "Z": p * (1 - p)}
        if gate.arity == 1:
            return [(k, one[k]) for k in _ONE_QUBIT]
        # only the data operand is hit
        out = []
        for k in _TWO_QUBIT:
            a, b = k
            if (a != "I" and not is_data[0]) or (b != "I" and not is_data[1]):
                continue
            out.append((k, (one[a] if is_data[0] else 1.0) * (one[b] if is_data[1] else 1.0)))
        return out


@dataclass(frozen=True)
class TwirledAmpDamp(NoiseModel):
    """Pauli twirl of amplitude damping with time constant ``t1`` (microseconds).

    A qubit busy for time ``t`` sees ``gamma = 1 - exp(-t / t1)`` and the Pauli
    channel ``p_X = p_Y = gamma/4``, ``p_Z = (1 - sqrt(1 - gamma))**2 / 4``.  Idle
    qubits are charged the duration of the step they idle through.
    """

    t1: float
    single: float = 20.0
    two_qubit: float = 30.0
    measurement: float = 300.0

    def duration(self, step_role: str) -> float:
        return {"prep": self.single, "hadamard": self.single, "cnot": self.two_qubit,
                "meas": self.measurement}[step_role]

    def probabilities(self, t: float) -> tuple[float, float, float]:
        gamma = -math.expm1(-t / self.t1) if math.isfinite(self.t1) else 0.0
        pz = (1 - math.sqrt(1 - gamma)) ** 2 / 4
        return gamma / 4, gamma / 4, pz

    def _channel(self, gate, step_role, is_data, pre_measure):
        return _pauli_channel(*self.probabilities(self.duration(step_role)), gate.arity)

    @classmethod
    def from_gamma(cls, gamma: float, **kw) -> TwirledAmpDamp:
        """Model whose single-qubit (20 µs) damping probability equals ``gamma``."""
        single = kw.get("single", 20.0)
        t1 = math.inf if gamma == 0 else -single / math.log1p(-gamma)
        return cls(t1, **kw)


def fault_distribution(model: NoiseModel, gate: Gate, step_role: str, *, n_data: int | None = None,
                       pre_measure: bool = False) -> FaultDistribution:
    """Fault distribution of ``gate`` in a step of role ``step_role``.

    ``n_data`` marks operands below it as data qubits (only the phenomenological
    model cares); ``pre_measure`` flags the step right before the readout.
    """
    is_data = tuple(n_data is not None and q < n_data for q in gate.qubits)
    return model.channel(gate, step_role, is_data, pre_measure)


@dataclass(frozen=True)
class Location:
    step: int
    gate: Gate
    dist: FaultDistribution

    @property
    def before_readout(self) -> bool:
        return self.gate.kind in MEASUREMENTS


def round_locations(model: NoiseModel, circuit, *, keep_silent: bool = False) -> list[Location]:
    """Fault locations of one round in circuit order (silent ones dropped by default)."""
    n = circuit.code.n
    last = circuit.n_steps - 1
    locs = []
    for s, step, g in circuit.locations():
        dist = fault_distribution(model, g, step.role, n_data=n, pre_measure=(s == last - 1))
        if dist.alternatives or keep_silent:
            locs.append(Location(s, g, dist))
    return locs


def avg_xy_rate(model: NoiseModel, circuit) -> float:
    """Mean probability of an X or Y fault per qubit per step over one round."""
    total = 0.0
    for loc in round_locations(model, circuit):
        total += sum(loc.dist.xy_marginal(j) for j in range(loc.gate.arity))
    return total / (circuit.n_steps * circuit.n_qubits)


def sample_faults(model: NoiseModel, circuit, rng: np.random.Generator,
                  locations: list[Location] | None = None) -> list[tuple[int, PauliString]]:
    """Independent draw at every location; returns ``(location index, fault)`` pairs.

    Location indices refer to ``round_locations(model, circuit)``, which may be
    passed in as ``locations`` to avoid rebuilding it on every call.
    """
    locs = round_locations(model, circuit) if locations is None else locations
    u = rng.random(len(locs))
    out = []
    for i in np.flatnonzero(u < np.array([loc.dist.total for loc in locs])):
        alts = locs[i].dist.alternatives
        cum = np.cumsum([p for _, p in alts])
        a = min(int(np.searchsorted(cum, u[i], side="right")), len(alts) - 1)
        out.append((int(i), alts[a][0]))
    return out
