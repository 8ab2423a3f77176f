"""Exception hierarchy shared by every module of the package."""


class AquaStereoError(Exception):
    """Base class for all package errors."""


class TotalInternalReflection(AquaStereoError):
    pass


class NoForwardIntersection(AquaStereoError):
    pass


class DegenerateRays(AquaStereoError):
    pass


class BehindCamera(AquaStereoError):
    """Closest approach of two rays lies behind one of the ray origins."""


class PointBehindCamera(AquaStereoError):
    pass


class DistortionInversionFailed(AquaStereoError):
    pass


class IndexOutOfPhysicalRange(AquaStereoError):
    pass


class DepthNotReachable(AquaStereoError):
    pass


class ConvergenceFailure(AquaStereoError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EmptyLocus(AquaStereoError):
    pass


class EmptyDomain(AquaStereoError):
    pass


class WindowOutOfBounds(AquaStereoError):
    pass


class ImageSizeMismatch(AquaStereoError):
    pass


class SingularNormalEquations(AquaStereoError):
    pass


class NotConverged(AquaStereoError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(AquaStereoError):
    """Malformed configuration; ``path`` and ``line`` locate the problem."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class FileFormatError(AquaStereoError):
    """A data file exists but does not follow its format."""
