"""
Custom exception classes for GaitForge
"""


class GaitForgeException(Exception):
    """Base exception class for all GaitForge errors"""
    pass


class ConfigurationError(GaitForgeException):
    """Raised when configuration is invalid or missing"""
    pass


class ShapeError(GaitForgeException):
    """Raised when tensor shapes, strides or windows are incompatible"""
    pass


class TapeError(GaitForgeException):
    """Raised when the differentiation tape is misused"""
    pass


class GradientCheckError(GaitForgeException):
    """Raised when a gradient check cannot be carried out"""
    pass


class NormalizationError(GaitForgeException):
    """Raised when a normalization layer lacks the statistics it needs"""
    pass


class CheckpointError(GaitForgeException):
    """Raised when a checkpoint cannot be read, written or applied"""
    pass


class WarmStartError(CheckpointError):
    """Raised when a checkpoint does not match the model being warm-started"""
    pass


class DatasetError(GaitForgeException):
    """Raised when silhouette data is malformed or inconsistent"""
    pass


class EmptySilhouetteError(DatasetError):
    """Raised when a silhouette frame has no foreground pixel"""
    pass


class SamplingError(DatasetError):
    """Raised when a batch cannot be drawn from a dataset"""
    pass


class LossError(GaitForgeException):
    """Raised when a loss cannot be evaluated on the given batch"""
    pass


class OptimizationError(GaitForgeException):
    """Raised when an optimizer step cannot be applied"""
    pass


class ScheduleError(GaitForgeException):
    """Raised when a learning-rate schedule is queried out of range"""
    pass


class TrainingDivergedError(GaitForgeException):
    """Raised when the training loss becomes non-finite"""
    pass


class EvaluationError(GaitForgeException):
    """Raised when retrieval evaluation cannot be carried out"""
    pass


class ReportGenerationError(GaitForgeException):
    """Raised when report generation fails"""
    pass
