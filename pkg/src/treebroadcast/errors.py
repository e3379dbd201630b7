"""Exception hierarchy shared by all modules."""


class TreeBroadcastError(Exception):
    """Base class for every error raised by this package."""


# channels
class RowSumError(TreeBroadcastError, ValueError):
    pass


class NegativeEntry(TreeBroadcastError, ValueError):
    pass


class NonErgodic(TreeBroadcastError, ValueError):
    pass


# trees
class CycleError(TreeBroadcastError, ValueError):
    pass


class CapExceeded(TreeBroadcastError, ValueError):
    pass


class NotACutset(TreeBroadcastError, ValueError):
    pass


class NotMinimal(TreeBroadcastError, ValueError):
    pass


class NotFoundWithinCap(TreeBroadcastError, LookupError):
    pass


# exact engine
class AtomBudgetExceeded(TreeBroadcastError, RuntimeError):
    pass


# inference
class ZeroLikelihood(TreeBroadcastError, ValueError):
    pass


# discrepancy
class DivergentSeries(TreeBroadcastError, ValueError):
    pass


# certify
class CertificateFailure(TreeBroadcastError):
    """A certificate could not be produced or failed re-verification."""


class AboveThreshold(CertificateFailure, ValueError):
    pass


class ZeroEntry(CertificateFailure, ValueError):
    pass


class DegenerateNu(CertificateFailure, ValueError):
    pass


class RatioViolation(CertificateFailure):
    pass


class BoundViolation(CertificateFailure):
    pass


class ConfigError(TreeBroadcastError, ValueError):
    pass
