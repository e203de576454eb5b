class RGMsFEMError(Exception):
    exit_code = 3


class ConfigError(RGMsFEMError, ValueError):
    exit_code = 2


class InadmissibleParameterError(RGMsFEMError, ValueError):
    exit_code = 2


class SamplingError(RGMsFEMError):
    pass


class SolverError(RGMsFEMError):
    """Raised when an iterative or factorized solve fails."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalRankError(RGMsFEMError):
    pass


class FitError(RGMsFEMError):
    pass


class DegenerateBasisError(RGMsFEMError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ArtifactError(RGMsFEMError):
    exit_code = 4
