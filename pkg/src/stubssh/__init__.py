"""Simulation of photonic entanglement distribution through a multidomain stub-SSH cavity lattice."""

from .dynamics import DecaySpec, JointBasis, NumericalError, evolve, photonic_transfer_phase, zeta
from .entanglement import concurrence, witness_ghz, witness_w
from .lattice import DisorderMode, DisorderSpec, LatticeSpec, build_static_hamiltonian, sample_disorder
from .protocols import ProtocolPlan, ProtocolResult, expected_final_state, run_protocol
from .pulses import ControlSchedule, PulseSegment, TransferTimings

__all__ = [
    "ControlSchedule", "DecaySpec", "DisorderMode", "DisorderSpec", "JointBasis", "LatticeSpec",
    "NumericalError", "ProtocolPlan", "ProtocolResult", "PulseSegment", "TransferTimings",
    "build_static_hamiltonian", "concurrence", "evolve", "expected_final_state",
    "photonic_transfer_phase", "run_protocol", "sample_disorder", "witness_ghz", "witness_w", "zeta",
]
