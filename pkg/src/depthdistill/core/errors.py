class DepthDistillError(Exception):
    """Generic depth-distill Exception"""


class DomainError(DepthDistillError, ValueError):
    """Input outside an operation's domain (shapes, signs, sizes)"""


class BehindCameraError(DomainError):
    """Point projected with non-positive depth"""


class EmptyDomainError(DomainError):
    """No valid pixels left to reduce over"""


class DegenerateFitError(DepthDistillError):
    """Fit has no unique solution (constant data, zero median)"""


class NoConsensusError(DepthDistillError):
    """RANSAC never reached the required inlier fraction"""


class ConfigurationError(DepthDistillError, ValueError):
    """Invalid configuration value or combination"""


class UnknownPresetError(ConfigurationError):
    """Scene preset name is not registered"""


class FormatError(DepthDistillError):
    """Malformed or out-of-range file content"""


class UsageError(DepthDistillError):
    """Bad command-line usage"""


class NumericalFailure(DepthDistillError):
    """A loss term went non-finite

    Parameters:
        term (str): name of the offending loss term
        message (str): diagnostic text
    """

    def __init__(self, term: str, message: str):
        super(NumericalFailure, self).__init__(f"{term}: {message}")
        self.term = term


class ReproducibilityError(DepthDistillError):
    """A rerun produced outputs whose hashes differ from its manifest"""
