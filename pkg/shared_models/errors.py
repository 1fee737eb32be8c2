from __future__ import annotations

from typing import Any, Dict, Optional


class FipError(Exception):
    """
    Root of every error raised by the framework.
    `code` is stable and machine readable, `details` carries whatever the caller needs to act on it.
    """
    code: str = "fip-error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_payload(self) -> Dict[str, Any]:
        return {
            "error": self.code,
            "message": self.message,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return str(value)


# ━━━━━━━━━━━━━━━━━━    Network / data shape    ━━━━━━━━━━━━━━━━━━ #
class DimensionMismatchError(FipError):
    code = "dimension-mismatch"

    def __init__(self, message: str, layer: Optional[int] = None, **details: Any):
        super().__init__(message, layer=layer, **details)
        self.layer = layer


class NonFiniteError(FipError):
    code = "non-finite"


class MissingLabelsError(FipError):
    code = "missing-labels"


class LabelRangeError(FipError):
    code = "label-out-of-range"


class DuplicateTaskError(FipError):
    code = "duplicate-task"


class UnknownTaskError(FipError):
    code = "unknown-task"


class CapExceededError(FipError):
    code = "cap-exceeded"


class EmptyBatchError(FipError):
    code = "empty-batch"


class InvalidLayerError(FipError):
    code = "invalid-layer"


# ━━━━━━━━━━━━━━━━━━    Metric / path    ━━━━━━━━━━━━━━━━━━ #
class NotPositiveSemidefiniteError(FipError):
    code = "not-psd"


class InvalidObjectiveError(FipError):
    code = "invalid-objective"


class InvalidPathConfigError(FipError):
    code = "invalid-path-config"


class PathAbortedError(FipError):
    """Raised when a path produces non-finite weights. `partial_path` holds the finite prefix."""
    code = "path-aborted"

    def __init__(self, message: str, partial_path: Any = None, **details: Any):
        super().__init__(message, **details)
        self.partial_path = partial_path


class InsufficientStepsError(FipError):
    code = "insufficient-steps"


class ZeroGradientError(FipError):
    code = "zero-gradient"


class AttackInfeasibleError(FipError):
    code = "attack-infeasible"


# ━━━━━━━━━━━━━━━━━━    IO / experiments    ━━━━━━━━━━━━━━━━━━ #
class DatasetError(FipError):
    code = "dataset-error"


class BadMagicError(DatasetError):
    code = "bad-magic"


class TruncatedFileError(DatasetError):
    code = "truncated-file"


class CountMismatchError(DatasetError):
    code = "count-mismatch"


class InfeasiblePackingError(DatasetError):
    code = "infeasible-packing"


class CheckpointError(FipError):
    code = "checkpoint-error"


class ChecksumMismatchError(CheckpointError):
    code = "checksum-mismatch"


class UnsupportedVersionError(CheckpointError):
    code = "unsupported-version"


class TruncatedCheckpointError(CheckpointError):
    code = "truncated-checkpoint"


class BadCheckpointMagicError(CheckpointError):
    code = "bad-checkpoint-magic"


class TrainingDivergedError(FipError):
    """Loss went non-finite. `last_finite_weights` is the last weight array with a finite loss."""
    code = "training-diverged"

    def __init__(self, message: str, last_finite_weights: Any = None, **details: Any):
        super().__init__(message, **details)
        self.last_finite_weights = last_finite_weights


class EmptyRunLogError(FipError):
    code = "empty-run-log"


class OutputLockedError(FipError):
    code = "output-locked"


class InvalidConfigError(FipError):
    """The config file parses but cannot drive the requested experiment."""
    code = "invalid-config"
