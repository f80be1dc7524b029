import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qecml.circuit import build_circuit
from qecml.noise import (FaultDistribution, IndependentXZ, Phenomenological, TwirledAmpDamp, WangFowler,
                         avg_xy_rate, fault_distribution, round_locations, sample_faults)
from qecml.pauli import Gate, GateKind, PauliString, cnot

H0 = Gate(GateKind.H, (0,))
ID0 = Gate(GateKind.IDLE, (0,))
CX = cnot(0, 1)
MODELS = [WangFowler(0.01), IndependentXZ(0.01), Phenomenological(0.01, 0.02), TwirledAmpDamp.from_gamma(0.01)]


def probs(dist):
    return {str(f): p for f, p in dist.alternatives}


def test_wang_fowler_cnot():
    d = fault_distribution(WangFowler(0.15), CX, "cnot")
    assert len(d.alternatives) == 15
    assert all(p == pytest.approx(0.01, abs=1e-15) for _, p in d.alternatives)
    assert d.no_fault == pytest.approx(0.85)


@pytest.mark.parametrize("gate, role", [(H0, "hadamard"), (ID0, "cnot"), (Gate(GateKind.PREP_Z, (0,)), "prep"),
                                        (Gate(GateKind.MEAS_X, (0,)), "meas")])
def test_wang_fowler_single(gate, role):
    assert probs(fault_distribution(WangFowler(0.03), gate, role)) == pytest.approx({"X": 0.01, "Y": 0.01, "Z": 0.01})


def test_independent_xz_single():
    assert probs(fault_distribution(IndependentXZ(0.1), H0, "hadamard")) == pytest.approx(
        {"X": 0.09, "Y": 0.01, "Z": 0.09})


def test_independent_xz_cnot_is_product():
    p = 0.1
    d = probs(fault_distribution(IndependentXZ(p), CX, "cnot"))
    one = {"I": 0.81, "X": 0.09, "Y": 0.01, "Z": 0.09}
    for k, v in d.items():
        assert v == pytest.approx(one[k[0]] * one[k[1]])


def test_twirl_probabilities_normalised():
    for t1 in (5.0, 100.0, 1e4):
        m = TwirledAmpDamp(t1)
        for t in (20.0, 30.0, 300.0):
            px, py, pz = m.probabilities(t)
            gamma = 1 - math.exp(-t / t1)
            p_i = (1 + math.sqrt(1 - gamma)) ** 2 / 4
            assert p_i + px + py + pz == pytest.approx(1.0, abs=1e-12)
            assert px == py == pytest.approx(gamma / 4)


def test_twirl_zero_limit():
    m = TwirledAmpDamp.from_gamma(0.0)
    assert fault_distribution(m, CX, "cnot").alternatives == ()
    assert TwirledAmpDamp.from_gamma(1e-12).probabilities(300)[0] < 1e-9


def test_twirl_from_gamma_and_durations():
    m = TwirledAmpDamp.from_gamma(0.02)
    assert 4 * m.probabilities(20.0)[0] == pytest.approx(0.02)
    assert m.duration("meas") == 300 and m.duration("cnot") == 30 and m.duration("prep") == 20
    # idle through a measurement step is charged 300 us
    slow = probs(fault_distribution(m, ID0, "meas"))
    fast = probs(fault_distribution(m, ID0, "prep"))
    assert slow["X"] > 10 * fast["X"]


def test_phenomenological_only_in_designated_step(code3, sn3):
    m = Phenomenological(0.05, 0.1)
    locs = round_locations(m, sn3)
    last = sn3.n_steps - 1
    for loc in locs:
        if loc.gate.kind in (GateKind.MEAS_Z, GateKind.MEAS_X):
            assert loc.step == last
            (f, q), = loc.dist.alternatives
            assert q == 0.1
            assert str(f) == ("X" if loc.gate.kind is GateKind.MEAS_Z else "Z")
        else:
            assert loc.step == last - 1
            for f, _ in loc.dist.alternatives:
                for j, q in enumerate(loc.gate.qubits):
                    if q >= code3.n:
                        assert f.letter(j) == "I"
    data = [l for l in locs if l.step == last - 1]
    # every data qubit flips X (or Y) with total probability p
    per_qubit = {}
    for l in data:
        for j, q in enumerate(l.gate.qubits):
            if q < code3.n:
                per_qubit[q] = per_qubit.get(q, 0.0) + l.dist.xy_marginal(j)
    assert sorted(per_qubit) == list(range(code3.n))
    assert all(v == pytest.approx(0.05) for v in per_qubit.values())


def test_phenomenological_default_q():
    assert Phenomenological(0.03).q == 0.03


def test_avg_xy_rate(sn3):
    assert avg_xy_rate(IndependentXZ(0.01), sn3) == pytest.approx(0.01)
    assert avg_xy_rate(WangFowler(0.0), sn3) == 0.0
    d = fault_distribution(WangFowler(0.03), H0, "hadamard")
    assert d.xy_marginal(0) == pytest.approx(0.02)
    # CNOT operand: 8 of 15 two-qubit Paulis carry X or Y on it
    assert fault_distribution(WangFowler(0.15), CX, "cnot").xy_marginal(0) == pytest.approx(0.08)


def test_distribution_validation():
    with pytest.raises(ValueError):
        FaultDistribution(H0, ((PauliString.from_str("I"), 0.1),))
    with pytest.raises(ValueError):
        FaultDistribution(H0, ((PauliString.from_str("X"), 0.7), (PauliString.from_str("Z"), 0.7)))
    with pytest.raises(ValueError):
        FaultDistribution(H0, ((PauliString.from_str("XX"), 0.1),))
    with pytest.raises(ValueError):
        fault_distribution(WangFowler(4.0), H0, "hadamard")


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_rate_scale_exact(model, sn3):
    for a, b in zip(round_locations(model, sn3), round_locations(model.scaled(1.1), sn3)):
        for (fa, pa), (fb, pb) in zip(a.dist.alternatives, b.dist.alternatives):
            assert fa == fb and pb == 1.1 * pa


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_every_location_normalised(model, sn3):
    for loc in round_locations(model, sn3, keep_silent=True):
        assert 0 <= loc.dist.total <= 1
        assert loc.dist.no_fault == pytest.approx(1 - loc.dist.total)


def test_sampling_zero_and_saturated(sn3, rng):
    assert sample_faults(WangFowler(0.0), sn3, rng) == []
    faults = sample_faults(IndependentXZ(1.0), sn3, rng)
    locs = round_locations(IndependentXZ(1.0), sn3)
    assert len(faults) == len(locs)
    for i, f in faults:
        assert str(f) == "Y" * locs[i].gate.arity


@given(st.integers(0, 2 ** 32 - 1))
def test_sampling_deterministic(seed):
    from qecml.code import SurfaceCode
    c = build_circuit(SurfaceCode(2), "SN", 6)
    a = sample_faults(WangFowler(0.2), c, np.random.default_rng(seed))
    b = sample_faults(WangFowler(0.2), c, np.random.default_rng(seed))
    assert a == b


def test_sampling_frequencies(code2):
    """Per-alternative counts within 4 sigma (about 10^6 location draws in total)."""
    c = build_circuit(code2, "SN", 6)
    model = WangFowler(0.3)
    locs = round_locations(model, c)
    rng = np.random.default_rng(7)
    reps = 30000
    counts = {}
    for _ in range(reps):
        for i, f in sample_faults(model, c, rng, locs):
            counts[i, f] = counts.get((i, f), 0) + 1
    assert reps * len(locs) > 10 ** 6
    for i, loc in enumerate(locs):
        for f, p in loc.dist.alternatives:
            n = counts.get((i, f), 0)
            assert abs(n - reps * p) < 4 * math.sqrt(reps * p * (1 - p))
