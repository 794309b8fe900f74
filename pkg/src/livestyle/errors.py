"""Exception types shared across the engine.

Every failure mode raised by the library is a subclass of ``LiveStyleError``
so callers (service, CLI) can catch one base type and map it to a transport
error.
"""

from __future__ import annotations


class LiveStyleError(Exception):
    """Base class for all library errors."""


class UnsupportedFormat(LiveStyleError):
    """Byte stream is neither PNG nor JPEG."""


class CorruptImage(LiveStyleError):
    """Recognized image format but the decoder failed."""


class InvalidSize(LiveStyleError):
    """Requested image size is out of range."""


class RangeMismatch(LiveStyleError):
    """Tensor range tag does not match what the operation requires."""


class ShapeMismatch(LiveStyleError):
    """Operands have incompatible shapes."""


class MissingTensor(LiveStyleError):
    """Weight archive lacks a tensor the model spec requires."""


class CorruptArchive(LiveStyleError):
    """Weight archive fails its manifest invariants."""


class UnknownLayer(LiveStyleError):
    """Requested layer id does not exist in the model."""


class DimensionMismatch(LiveStyleError):
    """Style embeddings of different dimension were combined."""


class InvalidWeights(LiveStyleError):
    """Blend weights are negative or do not sum to one."""


class InvalidStrength(LiveStyleError):
    """Stylization strength outside [0, 1]."""


class DivergedLoss(LiveStyleError):
    """Training or optimization loss became NaN/inf.

    ``iteration`` is the step index at which divergence was detected.
    """

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class EmptyDataset(LiveStyleError):
    """A training dataset directory or list contains no images."""


class UnknownModel(LiveStyleError):
    """Service request named a model that is not registered."""


class InvalidParams(LiveStyleError):
    """Job parameters fail the model's parameter schema."""


class UnknownJob(LiveStyleError):
    """Job id was never seen by this service instance."""


class JobGone(LiveStyleError):
    """Job existed but was evicted after the retention window."""


class PayloadTooLarge(LiveStyleError):
    """Uploaded payload exceeds the configured limit."""
