"""SQLAlchemy models for training-run and checkpoint lineage."""
from datetime import datetime, timezone
from enum import Enum
from typing import List, Optional

from sqlalchemy import DateTime, Float, ForeignKey, Index, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column, relationship

from mixtts.extensions import Base


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class RunStatus(str, Enum):
    """Enum for training-run status."""
    RUNNING = 'running'
    COMPLETED = 'completed'
    FAILED = 'failed'


# PUBLIC_INTERFACE
class TrainingRun(Base):
    """One invocation of a training regime.

    Attributes:
        id: Unique identifier for the run
        name: Human-readable run name
        regime: Regime kind (AVM_POOLED, ...)
        seed: Seed the run was started with
        config_json: Resolved model and schedule configuration
        status: running, completed or failed
        created_at: Timestamp when the run started
        finished_at: Timestamp when the run ended
        checkpoints: Checkpoints written by the run
    """
    __tablename__ = 'training_runs'

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    name: Mapped[str] = mapped_column(String(200), nullable=False)
    regime: Mapped[str] = mapped_column(String(40), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    config_json: Mapped[str] = mapped_column(Text, nullable=False, default='{}')
    status: Mapped[str] = mapped_column(String(10), nullable=False, default=RunStatus.RUNNING.value)
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), nullable=False, default=utc_now)
    finished_at: Mapped[Optional[datetime]] = mapped_column(DateTime(timezone=True), nullable=True)

    # Relationships
    checkpoints: Mapped[List['CheckpointRecord']] = relationship(
        'CheckpointRecord',
        back_populates='run',
        cascade='all, delete-orphan',
        order_by='CheckpointRecord.id'
    )

    # Indexes
    __table_args__ = (
        Index('ix_training_runs_status', 'status'),
        Index('ix_training_runs_created_at', 'created_at')
    )

    def __repr__(self) -> str:
        """String representation of the TrainingRun model."""
        return f'<TrainingRun {self.id} {self.regime} ({self.status})>'


# PUBLIC_INTERFACE
class CheckpointRecord(Base):
    """A checkpoint written during a run.

    Attributes:
        id: Unique identifier
        run_id: Owning run
        phase: Training phase (1, or 2 for the retrain phase)
        step: Optimizer steps completed in the phase
        sha256: Digest of the checkpoint bytes
        path: Where the checkpoint was written
        loss: Last recorded training loss
        created_at: Timestamp of the write
    """
    __tablename__ = 'checkpoints'

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey('training_runs.id'), nullable=False)
    phase: Mapped[int] = mapped_column(Integer, nullable=False, default=1)
    step: Mapped[int] = mapped_column(Integer, nullable=False)
    sha256: Mapped[str] = mapped_column(String(64), nullable=False)
    path: Mapped[str] = mapped_column(String(500), nullable=False)
    loss: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), nullable=False, default=utc_now)

    # Relationships
    run: Mapped['TrainingRun'] = relationship('TrainingRun', back_populates='checkpoints')

    # Indexes
    __table_args__ = (
        Index('ix_checkpoints_run_id', 'run_id'),
        Index('ix_checkpoints_sha256', 'sha256')
    )

    def __repr__(self) -> str:
        """String representation of the CheckpointRecord model."""
        return f'<CheckpointRecord {self.sha256[:12]} (run {self.run_id}, phase {self.phase}, step {self.step})>'
