from typing import Optional, Sequence
from src.constants import *


class ToolkitBaseException(Exception):
    def __init__(self, exit_code: int, error_type: str, message: str, error_code: Optional[str] = None):
        self.exit_code = exit_code
        self.error_type = error_type
        self.error_msg = message
        self.error_code = error_code
        super().__init__(self.error_msg)


class ValidationError(ToolkitBaseException):
    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            error_type=VALIDATION_ERROR,
            message=message,
            error_code=error_code
        )


class NumericError(ToolkitBaseException):
    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(
            exit_code=EXIT_NUMERIC_FAILURE,
            error_type=NUMERIC_ERROR,
            message=message,
            error_code=error_code
        )


class CollectiveError(ToolkitBaseException):
    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(
            exit_code=EXIT_NUMERIC_FAILURE,
            error_type=COLLECTIVE_ERROR,
            message=message,
            error_code=error_code
        )


class ArtifactError(ToolkitBaseException):
    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(
            exit_code=EXIT_CORRUPT_ARTIFACT,
            error_type=ARTIFACT_ERROR,
            message=message,
            error_code=error_code
        )


class ContractError(ToolkitBaseException):
    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(
            exit_code=EXIT_VERIFICATION_FAILED,
            error_type=CONTRACT_ERROR,
            message=message,
            error_code=error_code
        )


class StorageError(ToolkitBaseException):
    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(
            exit_code=EXIT_NUMERIC_FAILURE,
            error_type=STORAGE_ERROR,
            message=message,
            error_code=error_code
        )


class GridSizeError(ValidationError):
    def __init__(self, nlat: int, nlon: int, reason: str):
        super().__init__(
            message=f"Invalid grid size {nlat}x{nlon}: {reason}",
            error_code=GRID_SIZE_INVALID
        )


class ResolutionError(ValidationError):
    def __init__(self, requested: int, supported: int, what: str = "lmax"):
        super().__init__(
            message=f"Requested {what}={requested} exceeds supported resolution {what}={supported}",
            error_code=RESOLUTION_EXCEEDED
        )


class ShapeError(ValidationError):
    def __init__(self, expected, actual, context: str = "tensor"):
        super().__init__(
            message=f"Shape mismatch for {context}. Expected: {expected}, Actual: {actual}",
            error_code=SHAPE_MISMATCH
        )


class DomainError(ValidationError):
    def __init__(self, message: str):
        super().__init__(message=message, error_code=DOMAIN_ERROR)


class ConfigError(ValidationError):
    def __init__(self, message: str):
        super().__init__(message=message, error_code=CONFIG_INVALID)


class GridKindMismatchError(ValidationError):
    def __init__(self, checkpoint_grid: str, dataset_grid: str):
        super().__init__(
            message=f"Checkpoint grid {checkpoint_grid} does not match dataset grid {dataset_grid}. "
                    f"Use --allow-grid-change to evaluate on a different grid",
            error_code=GRID_KIND_MISMATCH
        )


class ConvergenceError(NumericError):
    def __init__(self, what: str, iterations: int, residual: float):
        super().__init__(
            message=f"{what} did not converge after {iterations} iterations (residual {residual:.3e})",
            error_code=NON_CONVERGENCE
        )


class NaNDetectedError(NumericError):
    def __init__(self, where: str, step: Optional[int] = None):
        self.where = where
        location = f" at step {step}" if step is not None else ""
        super().__init__(
            message=f"NaN encountered in {where}{location}",
            error_code=NAN_DETECTED
        )
        self.step = step


class ZeroNormTargetError(NumericError):
    def __init__(self, channel: int):
        super().__init__(
            message=f"Target channel {channel} has zero norm; relative loss is undefined",
            error_code=ZERO_NORM_TARGET
        )


class UndefinedACCError(NumericError):
    def __init__(self, channel: int):
        super().__init__(
            message=f"ACC undefined for channel {channel}: anomaly field is identically zero",
            error_code=UNDEFINED_ACC
        )


class CollectiveAbortError(CollectiveError):
    def __init__(self, rank: int, reason: str):
        super().__init__(
            message=f"Collective aborted (rank {rank}): {reason}",
            error_code=COLLECTIVE_ABORT
        )


class CollectiveTimeoutError(CollectiveError):
    def __init__(self, rank: int, peer: int, timeout: float):
        super().__init__(
            message=f"Rank {rank} timed out after {timeout}s waiting for rank {peer}",
            error_code=COLLECTIVE_TIMEOUT
        )


class TapeConsumedError(ContractError):
    def __init__(self):
        super().__init__(
            message="Tape already consumed by a previous backward pass",
            error_code=TAPE_CONSUMED
        )


class NonScalarLossError(ContractError):
    def __init__(self, shape):
        super().__init__(
            message=f"Backward requires a scalar loss, got shape {shape}",
            error_code=NON_SCALAR_LOSS
        )


class UnregisteredOpError(ContractError):
    def __init__(self, op_name: str):
        super().__init__(
            message=f"Operation '{op_name}' has no registered adjoint",
            error_code=UNREGISTERED_OP
        )


class CheckpointCorruptError(ArtifactError):
    def __init__(self, path: str, differences: Sequence[str]):
        self.differences = list(differences)
        super().__init__(
            message=f"Checkpoint {path} is corrupt or inconsistent with its manifest: " + "; ".join(self.differences),
            error_code=CHECKPOINT_CORRUPT
        )


class DatasetCorruptError(ArtifactError):
    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"Dataset {path} is corrupt: {reason}",
            error_code=DATASET_CORRUPT
        )


class TableCacheCorruptError(ArtifactError):
    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"Legendre cache {path} is corrupt: {reason}",
            error_code=TABLE_CACHE_CORRUPT
        )


class WriteFailedError(StorageError):
    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"Could not write {path}: {reason}",
            error_code=WRITE_FAILED
        )


class VerificationFailedError(ToolkitBaseException):
    def __init__(self, failed: Sequence[str]):
        self.failed = list(failed)
        super().__init__(
            exit_code=EXIT_VERIFICATION_FAILED,
            error_type=VERIFICATION_ERROR,
            message="Failed invariants: " + ", ".join(self.failed),
            error_code=VERIFICATION_FAILED
        )


class StabilityWarning(UserWarning):
    pass
