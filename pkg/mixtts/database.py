"""Run-registry persistence: training runs and checkpoint lineage."""
import json
from typing import List, Optional, Tuple

from sqlalchemy import select
from sqlalchemy.exc import SQLAlchemyError

from mixtts.extensions import db
from mixtts.models.run import CheckpointRecord, RunStatus, TrainingRun, utc_now


def init_db(url: str) -> None:
    """Bind the registry to ``url`` and create all tables.

    Args:
        url: SQLAlchemy database URL
    """
    db.init_app(url)
    db.create_all()


# PUBLIC_INTERFACE
def create_run(name: str, regime: str, seed: int,
               config: Optional[dict] = None) -> Tuple[Optional[TrainingRun], Optional[str]]:
    """Register a new training run.

    Args:
        name: Run name
        regime: Regime kind
        seed: Seed the run uses
        config: Resolved configuration to store alongside the run

    Returns:
        Tuple containing the created run and error message (if any)
    """
    try:
        run = TrainingRun(name=name, regime=regime, seed=seed,
                          config_json=json.dumps(config or {}, sort_keys=True))
        db.session.add(run)
        db.session.commit()
        return run, None
    except SQLAlchemyError as e:
        db.session.rollback()
        return None, str(e)


# PUBLIC_INTERFACE
def get_run(run_id: int) -> Optional[TrainingRun]:
    """Retrieve a run by its ID.

    Args:
        run_id: ID of the run to retrieve

    Returns:
        TrainingRun object if found, None otherwise
    """
    return db.session.get(TrainingRun, run_id)


# PUBLIC_INTERFACE
def record_checkpoint(run: TrainingRun, phase: int, step: int, sha256: str, path: str,
                      loss: Optional[float] = None) -> Tuple[Optional[CheckpointRecord], Optional[str]]:
    """Append a checkpoint to a run's lineage.

    Returns:
        Tuple containing the created record and error message (if any)
    """
    try:
        record = CheckpointRecord(run_id=run.id, phase=phase, step=step, sha256=sha256,
                                  path=path, loss=loss)
        db.session.add(record)
        db.session.commit()
        return record, None
    except SQLAlchemyError as e:
        db.session.rollback()
        return None, str(e)


# PUBLIC_INTERFACE
def finish_run(run: TrainingRun, status: RunStatus = RunStatus.COMPLETED) -> Tuple[bool, Optional[str]]:
    """Mark a run as completed or failed.

    Returns:
        Tuple of (success boolean, error message if any)
    """
    try:
        run.status = RunStatus(status).value
        run.finished_at = utc_now()
        db.session.commit()
        return True, None
    except SQLAlchemyError as e:
        db.session.rollback()
        return False, str(e)


# PUBLIC_INTERFACE
def get_lineage(run: TrainingRun) -> List[CheckpointRecord]:
    """Checkpoints of a run in the order they were written."""
    query = select(CheckpointRecord).where(CheckpointRecord.run_id == run.id).order_by(CheckpointRecord.id)
    return list(db.session.scalars(query))
