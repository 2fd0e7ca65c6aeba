"""Exception hierarchy shared by all bfem modules."""


class BFEMError(Exception):
    """Base class for errors raised by this package."""


class DegenerateCovariance(BFEMError):
    """A variance estimate is non-positive and flooring is disabled."""


class EmptyCluster(BFEMError):
    """A cluster has (numerically) zero soft count."""


class NonFinite(BFEMError):
    """A NaN or infinite value appeared in a computation."""


class SingularScatter(BFEMError):
    """The total scatter matrix is numerically zero."""


class AllRestartsFailed(BFEMError):
    """Every restart of a fit hit a fatal degeneracy."""


class LengthMismatch(BFEMError, ValueError):
    pass


class DimensionMismatch(BFEMError, ValueError):
    pass


class PatchTooLarge(BFEMError, ValueError):
    pass


class CoverageGap(BFEMError):
    """Some pixel is not covered by any patch."""


class MalformedFile(BFEMError, ValueError):
    pass


class UnsupportedMaxval(BFEMError, ValueError):
    pass
