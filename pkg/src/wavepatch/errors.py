"""Exception types shared across the package.

Everything derives from :class:`WavepatchError` so callers can catch the
package's failures with a single except clause.  Builtin exceptions
(``OverflowError``, ``ValueError``) are still used where they are the
natural fit.
"""


class WavepatchError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(WavepatchError, ValueError):
    """Argument outside the mathematical domain of the routine."""


class MultipleRootError(WavepatchError):
    """Dispersion polynomial has a (near-)multiple root; residues blow up."""


class MultiplePositiveRootsError(WavepatchError):
    """More than one positive real dispersion root; not a supported regime."""


class NotApplicableError(WavepatchError):
    """Requested quantity does not exist for this dispersion spec."""


class DegenerateCurveError(WavepatchError):
    """Boundary curve has a (numerically) vanishing tangent somewhere."""


class NotStarShapedError(WavepatchError):
    """Curve is not star-shaped about the requested center."""


class PointOutsideMeshError(WavepatchError):
    """Point-location query fell outside the meshed region."""


class NonConvergenceError(WavepatchError):
    """Adaptive quadrature failed to reach tolerance.

    Carries optional ``element`` / ``target`` attributes identifying the
    offending pair when raised during operator assembly.
    """

    def __init__(self, message, element=None, target=None):
        super().__init__(message)
        self.element = element
        self.target = target


class IllConditionedError(WavepatchError):
    """A local solve/pseudo-inverse lost all significant modes."""


class GridTooSmallError(WavepatchError):
    """FFT grid does not cover the sources plus the required margin."""


class TooCloseToBoundaryError(WavepatchError):
    """Field evaluation point is too close to an interface for the
    smooth-quadrature path to be trustworthy."""


class MaxIterationsError(WavepatchError):
    """Iterative solver hit its iteration cap.

    The best iterate found so far is attached as ``best_x`` together with
    its residual norm ``best_residual``.
    """

    def __init__(self, message, best_x=None, best_residual=None,
                 residual_history=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_residual = best_residual
        self.residual_history = residual_history


class DimensionMismatchError(WavepatchError, ValueError):
    """Operand shapes are inconsistent."""


class UnsupportedKernelError(WavepatchError):
    """Kernel requires a discretization option that is switched off."""
