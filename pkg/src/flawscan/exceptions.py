"""Exception hierarchy. Everything derives from ``ValueError`` so callers
that only care about bad input can catch that."""


class FlawScanError(ValueError):
    pass


class FormatError(FlawScanError):
    """An input file does not parse under its declared format."""


class DataError(FlawScanError):
    """Image data contains non-finite values or has the wrong shape."""


class ManifestError(FlawScanError):
    pass


class ParameterError(FlawScanError):
    pass


class DimensionError(FlawScanError):
    pass


class DegenerateRegionError(FlawScanError):
    """A region (or its complement) covers no pixels."""


class ExtractionError(FlawScanError):
    pass


class UndefinedSNRError(FlawScanError):
    """Noise peak equals noise average, so the SNR ratio is undefined."""


class CalibrationError(FlawScanError):
    pass


class LikelihoodDomainError(FlawScanError):
    pass


class FitError(FlawScanError):
    pass


class NoA90Error(FlawScanError):
    def __init__(self, message, pod_range=None):
        super().__init__(message)
        self.pod_range = pod_range


class PlacementError(FlawScanError):
    pass


class ConfigError(FlawScanError):
    pass
