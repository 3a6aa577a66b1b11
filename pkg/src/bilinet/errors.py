"""Exception hierarchy.

Three families, matching the CLI exit-code contract:

* :class:`InvalidInput` -- malformed graphs, files or arguments (exit 2).
* :class:`Unsolvable` -- the bilinear system has no stabilizing Gramian, or
  an optimization has no admissible candidate (exit 3).
* :class:`NumericalFailure` -- a computation blew up for reasons unrelated
  to the input being invalid (exit 5).
"""


class BilinetError(Exception):
    """Base class for all package errors."""


class InvalidInput(BilinetError, ValueError):
    pass


class InvalidNode(InvalidInput):
    pass


class InvalidVulnerableEdge(InvalidInput):
    pass


class NonFiniteWeight(InvalidInput):
    pass


class BadSign(InvalidInput):
    pass


class AttackOutsideGroundSet(InvalidInput):
    pass


class TooLarge(InvalidInput):
    """Requested enumeration or quadrature exceeds the supported size."""


class TooManySubsets(TooLarge):
    pass


class Unsolvable(BilinetError):
    """No finite, physically meaningful Gramian exists for the system."""


class NotHurwitz(Unsolvable):
    pass


class SingularOperator(Unsolvable):
    pass


class NotPSD(Unsolvable):
    pass


class MaxIterations(Unsolvable):
    pass


class NonConvergent(Unsolvable):
    pass


class NoSolvableSubset(Unsolvable):
    pass


class NoSolvableExtension(Unsolvable):
    pass


class NumericalFailure(BilinetError):
    pass


class Diverged(NumericalFailure):
    pass
