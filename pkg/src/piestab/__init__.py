"""Stability analysis of coupled linear PDEs in one spatial dimension.

A PDE in standardized form is converted to a partial-integral equation
(PIE) on L2, and exponential or neutral stability is tested by searching
for a positive partial-integral Lyapunov operator with a semidefinite
program.
"""
from .convert import PIESystem, convert, verify_conversion
from .pde import PDEFamily, PDESystem, check_wellposed, diffusion_channels, load_family, load_pde, serialize
from .pi_operator import PIOperator, pi_adjoint, pi_compose
from .polynomial import PolyMat
from .stability import Certificate, StabilityQuery, bisect_margin, check_stability, discretization_oracle

__all__ = [
    "PolyMat",
    "PIOperator",
    "pi_compose",
    "pi_adjoint",
    "PDESystem",
    "PDEFamily",
    "load_pde",
    "load_family",
    "serialize",
    "check_wellposed",
    "diffusion_channels",
    "PIESystem",
    "convert",
    "verify_conversion",
    "StabilityQuery",
    "Certificate",
    "check_stability",
    "bisect_margin",
    "discretization_oracle",
]

__version__ = "0.1.0"
