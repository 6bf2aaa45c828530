"""Models package initialization."""
from mixtts.models.run import CheckpointRecord, RunStatus, TrainingRun  # noqa: F401
