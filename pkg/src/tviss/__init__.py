"""Stability tools for time-varying linear and semilinear evolution equations.

Comparison functions, input signals, evolution families and their stability
classification, mild solutions, Lyapunov certificates, and the two PDE
examples (Kuramoto-Sivashinsky with clamped ends and a heat equation with a
time-varying reaction term).
"""

from .comparison import ComparisonFunction, comparison_integrate, corollary_bound
from .evolution import EvolutionFamily, StabilityReport, TimeVaryingOperator, classify_stability
from .lyapunov import LyapunovCertificate, build_P, build_V, build_Z, lie_derivative
from .semilinear import NonlinearTerm, Trajectory, solve_mild
from .signals import InputSignal

__all__ = [
    "ComparisonFunction", "comparison_integrate", "corollary_bound", "EvolutionFamily", "StabilityReport",
    "TimeVaryingOperator", "classify_stability", "LyapunovCertificate", "build_P", "build_V", "build_Z",
    "lie_derivative", "NonlinearTerm", "Trajectory", "solve_mild", "InputSignal",
]
__version__ = "0.1.0"
