"""Exception hierarchy shared by every stage of the package."""


class VsadError(Exception):
    """Base class; ``stage`` names the pipeline step that raised it, if known."""

    stage = None


# data model
class MismatchedRows(VsadError, ValueError):
    pass


class NonFinite(VsadError, ValueError):
    pass


class DegenerateRow(VsadError, ValueError):
    pass


class InconsistentDim(VsadError, ValueError):
    pass


class DimMismatch(VsadError, ValueError):
    pass


class EmptyImage(VsadError, ValueError):
    pass


# file formats
class BadMagic(VsadError, ValueError):
    pass


class UnsupportedVersion(VsadError, ValueError):
    pass


class TruncatedFile(VsadError, ValueError):
    pass


class IoError(VsadError, OSError):
    pass


class ParseError(VsadError, ValueError):
    pass


class InvariantViolation(VsadError, ValueError):
    pass


# sampling / synthesis
class ScaleTooLarge(VsadError, ValueError):
    pass


class EmptyScales(VsadError, ValueError):
    pass


class InvalidModel(VsadError, ValueError):
    pass


# codebooks and encoders
class EmptyPopulation(VsadError, ValueError):
    pass


class InactiveSelected(VsadError, ValueError):
    pass


class TooFewPoints(VsadError, ValueError):
    pass


class RankDeficientWarning(UserWarning):
    """Requested PCA output exceeds the numerical rank of the data."""


# selection
class MissingLabels(VsadError, ValueError):
    pass


class KTooLarge(VsadError, ValueError):
    pass


# classifier
class SingleClass(VsadError, ValueError):
    pass


class EmptyFeatures(VsadError, ValueError):
    pass


class PipelineError(VsadError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
