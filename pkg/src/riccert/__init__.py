"""Certification toolkit for second-order Riccati-type equations.

The equation handled is ``y'' + 3 a y y' + b y' + a^2 y^3 + c y^2 + d y + e = 0``
with coefficient functions of ``t``, together with three-dimensional linear
systems that reduce to it.
"""

__version__ = "0.1.0"

from .expr import parse, to_string, evaluate, differentiate  # noqa: E402
from .riccati import RiccatiCoefficients, DiscriminantMode  # noqa: E402
from .transform import LinearSystem3  # noqa: E402
from .criteria import (THEOREMS, CERTIFIED, REFUTED, INCONCLUSIVE, Problem, Comparison,  # noqa: E402
                       certify, certify_nonoscillation)
from .harness import sample_admissible_ics, verify_conclusion  # noqa: E402

__all__ = ["__version__", "parse", "to_string", "evaluate", "differentiate", "RiccatiCoefficients",
           "DiscriminantMode", "LinearSystem3", "THEOREMS", "CERTIFIED", "REFUTED", "INCONCLUSIVE",
           "Problem", "Comparison", "certify", "certify_nonoscillation", "sample_admissible_ics",
           "verify_conclusion"]
