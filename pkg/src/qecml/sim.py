"""
Pauli-frame Monte Carlo for repeated syndrome-measurement rounds.

Frames are batched: ``x`` and ``z`` are uint8 arrays of shape ``(B, nq + 1)``;
the extra column is a scratch slot that padded operands write into.  Nothing
ever applies a correction to the frame; decoders only predict.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .circuit import ExtractionCircuit
from .code import SurfaceCode
from .noise import NoiseModel, round_locations
from .pauli import GateKind, PauliString


class Decoder(Protocol):
    """Batch decoder interface driven by the memory loop."""

    name: str

    def reset(self, batch: int) -> None: ...

    def observe(self, m: np.ndarray) -> None: ...

    def predict(self, sigma_star: np.ndarray) -> np.ndarray: ...

    def keep(self, mask: np.ndarray) -> None: ...


class PauliFrame:
    """Accumulated Pauli error of ``batch`` independent runs."""

    def __init__(self, n_qubits: int, batch: int = 1):
        self.n_qubits = n_qubits
        self.x = np.zeros((batch, n_qubits + 1), np.uint8)
        self.z = np.zeros((batch, n_qubits + 1), np.uint8)

    @classmethod
    def from_pauli(cls, p: PauliString) -> PauliFrame:
        f = cls(p.n)
        f.x[0, : p.n] = p.x
        f.z[0, : p.n] = p.z
        return f

    @property
    def batch(self) -> int:
        return self.x.shape[0]

    def pauli(self, b: int = 0) -> PauliString:
        return PauliString(self.x[b, : self.n_qubits], self.z[b, : self.n_qubits])

    def keep(self, mask: np.ndarray) -> None:
        self.x = self.x[mask]
        self.z = self.z[mask]

    def copy(self) -> PauliFrame:
        f = PauliFrame(self.n_qubits, 0)
        f.x, f.z = self.x.copy(), self.z.copy()
        return f


@dataclass
class _Step:
    prep: np.ndarray
    had: np.ndarray
    ctrl: np.ndarray
    targ: np.ndarray
    # fault locations: operands (L, 2) padded with the scratch column
    ops: np.ndarray
    total: np.ndarray  # (L,) probability of any fault
    cum: np.ndarray  # (L, A) cumulative alternative probabilities, padded with +inf
    fx: np.ndarray  # (L, A, 2)
    fz: np.ndarray
    meas_z: np.ndarray = field(default_factory=lambda: np.zeros(0, np.intp))
    meas_x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.intp))


class FrameSimulator:
    """One round of ``circuit`` under ``model`` compiled to index arrays."""

    def __init__(self, circuit: ExtractionCircuit, model: NoiseModel | None):
        self.circuit = circuit
        self.code = circuit.code
        self.model = model
        nq = self.nq = circuit.n_qubits
        locs = round_locations(model, circuit) if model is not None else []
        by_step: dict[int, list] = {}
        for loc in locs:
            by_step.setdefault(loc.step, []).append(loc)
        self.steps: list[_Step] = []
        n = self.code.n
        for s, step in enumerate(circuit.steps):
            kinds: dict[GateKind, list] = {}
            for g in step.gates:
                kinds.setdefault(g.kind, []).append(g.qubits)
            arr = lambda k, j=0: np.array([q[j] for q in kinds.get(k, [])], np.intp)  # noqa: E731
            here = by_step.get(s, [])
            A = max((len(l.dist.alternatives) for l in here), default=0)
            L = len(here)
            ops = np.full((L, 2), nq, np.intp)
            cum = np.full((L, max(A, 1)), np.inf)
            fx = np.zeros((L, max(A, 1), 2), np.uint8)
            fz = np.zeros_like(fx)
            for i, loc in enumerate(here):
                ops[i, : loc.gate.arity] = loc.gate.qubits
                acc = 0.0
                for a, (f, prob) in enumerate(loc.dist.alternatives):
                    acc += prob
                    cum[i, a] = acc
                    fx[i, a, : f.n] = f.x
                    fz[i, a, : f.n] = f.z
            total = np.array([l.dist.total for l in here])
            st = _Step(prep=np.concatenate([arr(GateKind.PREP_Z), arr(GateKind.PREP_X)]), had=arr(GateKind.H),
                       ctrl=arr(GateKind.CNOT, 0), targ=arr(GateKind.CNOT, 1),
                       ops=ops, total=total, cum=cum, fx=fx, fz=fz)
            st.meas_z = arr(GateKind.MEAS_Z)
            st.meas_x = arr(GateKind.MEAS_X)
            self.steps.append(st)
        self.anc = np.arange(n, nq)

    @staticmethod
    def _gates(st: _Step, x: np.ndarray, z: np.ndarray) -> None:
        if st.prep.size:
            x[:, st.prep] = 0
            z[:, st.prep] = 0
        if st.had.size:
            x[:, st.had], z[:, st.had] = z[:, st.had], x[:, st.had].copy()
        if st.ctrl.size:
            x[:, st.targ] ^= x[:, st.ctrl]
            z[:, st.ctrl] ^= z[:, st.targ]

    def _readout(self, st: _Step, x: np.ndarray, z: np.ndarray, m: np.ndarray) -> None:
        n = self.code.n
        if st.meas_z.size:
            m[:, st.meas_z - n] = x[:, st.meas_z]
        if st.meas_x.size:
            m[:, st.meas_x - n] = z[:, st.meas_x]

    def run_round(self, frame: PauliFrame, rng: np.random.Generator) -> np.ndarray:
        """Advance every frame by one noisy round; returns measured syndromes ``(B, n_a)``."""
        x, z = frame.x, frame.z
        B = x.shape[0]
        m = np.zeros((B, self.code.n_a), np.uint8)
        for st in self.steps:
            self._gates(st, x, z)
            if st.total.size and B:
                u = rng.random((B, st.total.size))
                b, l = np.nonzero(u < st.total)
                if b.size:
                    alt = (u[b, l][:, None] >= st.cum[l]).sum(axis=1)
                    for j in range(2):
                        q = st.ops[l, j]
                        x[b, q] ^= st.fx[l, alt, j]
                        z[b, q] ^= st.fz[l, alt, j]
            self._readout(st, x, z, m)
        return m

    def inject_round(self, frame: PauliFrame, faults: Sequence[tuple[int, Sequence[int], PauliString]]) -> np.ndarray:
        """Noiseless round except for explicit ``(step, operands, fault)`` insertions (applied to every frame)."""
        x, z = frame.x, frame.z
        m = np.zeros((x.shape[0], self.code.n_a), np.uint8)
        per_step: dict[int, list] = {}
        for s, qubits, f in faults:
            per_step.setdefault(s, []).append((tuple(qubits), f))
        for s, st in enumerate(self.steps):
            self._gates(st, x, z)
            for qubits, f in per_step.get(s, []):
                for j, q in enumerate(qubits):
                    x[:, q] ^= f.x[j]
                    z[:, q] ^= f.z[j]
            self._readout(st, x, z, m)
        return m

    def ideal(self, frame: PauliFrame) -> tuple[np.ndarray, np.ndarray]:
        """Exact data syndrome and logical class of every frame (the virtual perfect readout)."""
        n = self.code.n
        xd, zd = frame.x[:, :n], frame.z[:, :n]
        return self.code.syndromes(xd, zd), self.code.logical_classes(xd, zd)


def run_cycle(frame: PauliFrame, circuit: ExtractionCircuit, model: NoiseModel | None,
              rng: np.random.Generator | None = None, faults=None) -> np.ndarray:
    """One round on ``frame``.  With ``faults`` (``(location index, fault)`` pairs as
    returned by :func:`~qecml.noise.sample_faults`) the given faults are injected
    instead of sampled."""
    sim = FrameSimulator(circuit, model if faults is None else None)
    if faults is None:
        m = sim.run_round(frame, rng)
    else:
        locs = round_locations(model, circuit)
        m = sim.inject_round(frame, [(locs[i].step, locs[i].gate.qubits, f) for i, f in faults])
    return m[0] if frame.batch == 1 else m


@dataclass(frozen=True)
class RunResult:
    t_L: int
    censored: bool
    seed: int | None
    decoder: str
    params: dict = field(default_factory=dict)


def run_trials(sim: FrameSimulator, decoder: Decoder, trials: int, max_cycles: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep memory experiments; returns ``(t_L, censored)`` arrays of length ``trials``.

    Every cycle the decoder sees the new record and is asked for the logical
    class given the exact final syndrome; the first wrong answer ends a run.
    """
    frame = PauliFrame(sim.nq, trials)
    decoder.reset(trials)
    alive = np.arange(trials)
    t_L = np.full(trials, max_cycles, np.int64)
    censored = np.zeros(trials, bool)
    for t in range(1, max_cycles + 1):
        if not alive.size:
            break
        m = sim.run_round(frame, rng)
        decoder.observe(m)
        sigma, lam = sim.ideal(frame)
        fail = decoder.predict(sigma) != lam
        if fail.any():
            t_L[alive[fail]] = t
            ok = ~fail
            alive = alive[ok]
            frame.keep(ok)
            decoder.keep(ok)
    censored[alive] = True
    return t_L, censored


def run_memory_experiment(code: SurfaceCode, circuit: ExtractionCircuit, model: NoiseModel, decoder: Decoder,
                          max_cycles: int, rng: np.random.Generator, seed: int | None = None) -> RunResult:
    if circuit.code is not code:
        raise ValueError("circuit was built for a different code")
    t_L, cens = run_trials(FrameSimulator(circuit, model), decoder, 1, max_cycles, rng)
    return RunResult(int(t_L[0]), bool(cens[0]), seed, decoder.name, {"model": repr(model), "max_cycles": max_cycles})
