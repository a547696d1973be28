"""Exception types shared across the package.

Every error raised on a contract violation is a subclass of GreenlabError,
so callers can catch the package's failures without catching unrelated bugs.
"""


class GreenlabError(Exception):
    """Base class for all package-level failures."""


class DegenerateMap(GreenlabError):
    """Numerator and denominator share a root: the map drops degree."""


class DegreeTooLow(GreenlabError):
    """Algebraic degree is below 2; the equilibrium theory needs d >= 2."""


class RootFindingFailed(GreenlabError):
    """Polynomial solver could not meet the backward-residual tolerance."""


class ExceptionalStart(GreenlabError):
    """Backward orbits from this point never leave a finite invariant set."""


class TooManySingularHits(GreenlabError):
    """More than the allowed fraction of evaluations were non-finite."""

    def __init__(self, n_bad, n_total, msg=None):
        self.n_bad = n_bad
        self.n_total = n_total
        super().__init__(
            msg or f"{n_bad} of {n_total} evaluations were singular/non-finite"
        )


class InsufficientTailData(GreenlabError):
    """Too few grid points passed the significance filter to fit a slope."""


class NoDecayDetected(GreenlabError):
    """Transfer-operator norms refused to shrink; no martingale truncation."""


class CoboundaryDetected(GreenlabError):
    """Asymptotic variance vanished: the observable is (numerically) a
    coboundary and the normalized Birkhoff sums have no Gaussian limit."""

    def __init__(self, sigma2, msg=None):
        self.sigma2 = sigma2
        super().__init__(msg or f"asymptotic variance {sigma2!r} is consistent with zero")


class InvalidParams(GreenlabError):
    """Caller-supplied parameters are out of the documented range."""


class DepthUnsupported(GreenlabError):
    """Exact enumeration for this cylinder depth exceeds the budget."""


class ConfigError(GreenlabError):
    """A config file failed validation; message names the offending field."""
