"""Certified inner approximations of regions of attraction.

Pipeline: sparse polynomial arithmetic (poly), SOS-to-SDP compilation (sos)
over a conic solver contract (sdp), the V-s iteration with fixed or adaptive
shape functions (vsiter), shifted shape functions in rounds of shifts
(rcomssf), R-function composition of certified level sets (rcomp), an
independent simulation oracle (oracle), benchmark fixtures (bench), and a
batch CLI (cli).
"""

from .poly import (MonomialBasis, Polynomial, affine_shift_expand,
                   lie_derivative, monomial_basis)
from .sdp import SdpProblem, SdpSolution, SolveOptions, SolveStatus, min_eigenvalue
from .sos import (PolyExpr, PolyVar, SosCertificate, SosProgram, check_sos,
                  s_procedure, validate)

__all__ = [
    "MonomialBasis", "Polynomial", "affine_shift_expand", "lie_derivative",
    "monomial_basis", "SdpProblem", "SdpSolution", "SolveOptions",
    "SolveStatus", "min_eigenvalue", "PolyExpr", "PolyVar", "SosCertificate",
    "SosProgram", "check_sos", "s_procedure", "validate",
]
