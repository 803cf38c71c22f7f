"""Exception types shared across the pipeline stages."""


class UZoomError(Exception):
    """Base class for all pipeline errors."""


class DegenerateInput(UZoomError):
    """Input does not determine a transform (too few / coincident points)."""


class NoConsensus(UZoomError):
    """RANSAC found no model with enough inliers."""


class EmptyChain(UZoomError):
    """A transform chain needs at least one element."""


class InvalidGrid(UZoomError):
    pass


class InvalidSplit(UZoomError):
    pass


class EmptySequence(UZoomError):
    pass


class TooFewValidTracks(UZoomError):
    pass


class EmptyRegion(UZoomError):
    pass


class OutputTooSmall(UZoomError):
    pass


class TooSmall(UZoomError):
    pass


class FootprintOutsideImage(UZoomError):
    pass


class PatchTooLarge(UZoomError):
    pass


class DegradedPatchTooSmall(UZoomError):
    pass


class ManifestCorrupt(UZoomError):
    pass


class InputTooLarge(UZoomError):
    pass


class EmptyManifest(UZoomError):
    pass


class EmptyBank(UZoomError):
    pass


class DimensionMismatch(UZoomError):
    pass


class ProtocolError(UZoomError):
    """External worker sent a malformed or mismatched frame."""


class WorkerExit(UZoomError):
    """External worker terminated unexpectedly."""


class Timeout(UZoomError):
    pass


class WindowLargerThanCanvas(UZoomError):
    pass


class InvalidRange(UZoomError):
    pass


class InvalidMargin(UZoomError):
    pass


class ScheduleCoverageGap(UZoomError):
    pass


class MissingTile(UZoomError):
    pass


class CorruptStream(UZoomError):
    pass


class NotPSD(UZoomError):
    pass


class TooFewSamples(UZoomError):
    pass


class ConfigError(UZoomError):
    """Bad or incomplete pipeline configuration."""


class StageFailure(UZoomError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
