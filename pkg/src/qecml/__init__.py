"""Rotated surface-code memory simulation with matching and maximum-likelihood decoders."""
from .circuit import ExtractionCircuit, Schedule, build_circuit, validate
from .code import SurfaceCode, build_rotated_code, coset_label, syndrome_of
from .ml import MLDecoder, build_kernel
from .mwpm import MWPMDecoder, min_weight_perfect_matching
from .noise import IndependentXZ, NoiseModel, Phenomenological, TwirledAmpDamp, WangFowler
from .pauli import Gate, GateKind, PauliString
from .sim import FrameSimulator, PauliFrame, run_memory_experiment, run_trials

__version__ = "0.1.0"

__all__ = [
    "ExtractionCircuit", "Schedule", "build_circuit", "validate",
    "SurfaceCode", "build_rotated_code", "coset_label", "syndrome_of",
    "MLDecoder", "build_kernel", "MWPMDecoder", "min_weight_perfect_matching",
    "IndependentXZ", "NoiseModel", "Phenomenological", "TwirledAmpDamp", "WangFowler",
    "Gate", "GateKind", "PauliString", "FrameSimulator", "PauliFrame", "run_memory_experiment", "run_trials",
]
