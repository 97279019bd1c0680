"""
Exception hierarchy shared by all services
"""
from typing import Any, Dict, Optional, Tuple


class BmPriorError(ValueError):
    """Base class for data errors (CLI exit code 2)"""


class PgmFormatError(BmPriorError):
    """Malformed PGM header, truncated payload or bad maxval"""


class PatchFileError(BmPriorError):
    """Corrupt or inconsistent patch file"""


class ImageTooSmallError(BmPriorError):
    """Image is smaller than the requested patch side"""


class EmptyPatchSetError(BmPriorError):
    """Moments requested for a set without patches"""


class SingularCovarianceError(BmPriorError):
    """Connected correlation matrix cannot be inverted"""


class BetheDomainError(BmPriorError):
    """Bethe formula left the atanh domain for a pair of sites"""

    def __init__(self, message: str, pair: Tuple[int, int]):
        super().__init__(message)
        self.pair = pair


class FitDomainError(BmPriorError):
    """Profile cannot be fitted in log space"""

    def __init__(self, message: str, partial: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.partial = partial or {}


class FitFailedError(FitDomainError):
    """Fitted decay length is not positive and finite"""


class LinkClassError(BmPriorError):
    """Pair of sites is neither a NN nor a NNN link"""


class ConvergenceError(BmPriorError):
    """Fixed-point iteration diverged"""


class ModelValidationError(BmPriorError):
    """Model or parameter set violates its invariants"""


class UsageError(Exception):
    """Bad command line (CLI exit code 1)"""
