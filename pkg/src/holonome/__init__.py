"""Holonomic quantum computation on stabilizer and subsystem codes.

Subpackages follow the pipeline: Pauli algebra and code tracking, interpolation
schedules, segment evolution, discrete holonomy, gate compilation, and fault
injection with ideal recovery.
"""

from .codes import CodeSpec, TrackedGroup, build_bacon_shor, track
from .evolution import SegmentHamiltonian, evolve_segment, exact_adiabatic_transport, pauli_segment
from .fault_injection import ErrorEvent, FaultReport, fault_scan, run_with_fault
from .gate_programs import PathProgram, compile, verify, weight_audit
from .holonomy import EigenFramePath, HolonomyMatrix, transport, z_gate_holonomy
from .pauli_algebra import PauliOperator, PauliSum
from .schedules import Schedule

__version__ = "0.1.0"

__all__ = [
    "CodeSpec", "ErrorEvent", "EigenFramePath", "FaultReport", "HolonomyMatrix", "PathProgram",
    "PauliOperator", "PauliSum", "Schedule", "SegmentHamiltonian", "TrackedGroup", "build_bacon_shor",
    "compile", "evolve_segment", "exact_adiabatic_transport", "fault_scan", "pauli_segment",
    "run_with_fault", "track", "transport", "verify", "weight_audit", "z_gate_holonomy",
]
