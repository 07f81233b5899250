"""Coupling of independently solved subproblems through interface multipliers.

The package reduces a block saddle-point system built from black-box local
solvers to an interface Schur problem, solves it by deflated preconditioned
conjugate gradients (with an optional coarse-projection stabilization for
over-rich multiplier spaces), and ships a 1D/2D P1 finite element kit plus a
config-driven experiment harness used to validate the solver properties.
"""

from . import coupling, fem, numerics, reduction, stabilization

__all__ = ["coupling", "fem", "numerics", "reduction", "stabilization"]
__version__ = "0.1.0"
