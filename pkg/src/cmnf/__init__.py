"""Exact-arithmetic normal forms for Levi-nondegenerate real hypersurfaces.

Subpackages: series (truncated exact jets), levi (signature pairing and the
trace operator), hyperquadric (the isotropy group of v = <z,z>), chains
(chain ODEs, numeric and formal), normalize (the three-stage normalization
pipeline), normal_forms (condition checkers for the (alpha, beta) family),
cli (command-line front end).
"""

from .scalar import Scalar, srat
from .levi import Signature

__all__ = ["Scalar", "srat", "Signature"]
__version__ = "0.1.0"
