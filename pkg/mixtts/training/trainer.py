"""Training loop, training log and regime orchestration."""
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from mixtts.autodiff import ops
from mixtts.autodiff.optim import Adam, clip_grad_norm, global_grad_norm
from mixtts.autodiff.tensor import Tape, Tensor
from mixtts.database import create_run, finish_run, record_checkpoint
from mixtts.dsp.features import FeatureNormalizer
from mixtts.errors import ConfigurationError, DataError, VerificationError
from mixtts.frontend.inventory import PhonemeInventory
from mixtts.frontend.manifest import UtteranceRecord
from mixtts.models.run import RunStatus
from mixtts.network.checkpoint import Checkpoint, save_checkpoint
from mixtts.network.config import ModelConfig, SpeakerPlacement
from mixtts.network.parameters import exclude, init_parameters, parameter_digest, to_numpy
from mixtts.network.tacotron import compute_loss, forward_teacher_forced
from mixtts.training.data import load_corpus_by_manifest, sample_batch
from mixtts.training.diagnostics import attention_diagnostics
from mixtts.training.regime import RegimeKind, Schedule, TrainingRegime, manifests_for_phase

logger = logging.getLogger(__name__)


# PUBLIC_INTERFACE
@dataclass
class StepRecord:
    """Metrics of one optimizer step."""
    phase: int
    step: int
    loss: float
    mel_loss: float
    linear_loss: float
    stop_loss: float
    grad_norm: float
    learning_rate: float
    entropy: float
    forward_motion: float

    def to_dict(self) -> dict:
        return {'event': 'step', **asdict(self)}


@dataclass
class CheckpointEntry:
    phase: int
    step: int
    sha256: str
    path: str
    loss: Optional[float] = None

    def to_dict(self) -> dict:
        return {'event': 'checkpoint', **asdict(self)}


# PUBLIC_INTERFACE
class TrainingLog:
    """Per-step metrics and checkpoint lineage, mirrored to a JSON-lines file.

    Step indices are strictly increasing within a phase and phases never go back.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.steps: List[StepRecord] = []
        self.checkpoints: List[CheckpointEntry] = []
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text('')

    def _write(self, payload: dict) -> None:
        if self.path is not None:
            with self.path.open('a', encoding='utf-8') as handle:
                handle.write(json.dumps(payload, sort_keys=True) + '\n')

    def append_step(self, record: StepRecord) -> None:
        if self.steps:
            last = self.steps[-1]
            if (record.phase, record.step) <= (last.phase, last.step):
                raise DataError(
                    f'training log must advance: ({record.phase}, {record.step}) after ({last.phase}, {last.step})'
                )
        self.steps.append(record)
        self._write(record.to_dict())

    def append_checkpoint(self, entry: CheckpointEntry) -> None:
        self.checkpoints.append(entry)
        self._write(entry.to_dict())

    def losses(self, phase: Optional[int] = None) -> List[float]:
        return [s.loss for s in self.steps if phase is None or s.phase == phase]

    @classmethod
    def read(cls, path: Union[str, Path]) -> 'TrainingLog':
        log = cls()
        for line in Path(path).read_text().splitlines():
            payload = json.loads(line)
            event = payload.pop('event')
            if event == 'step':
                log.steps.append(StepRecord(**payload))
            else:
                log.checkpoints.append(CheckpointEntry(**payload))
        return log


# PUBLIC_INTERFACE
@dataclass
class TrainingResult:
    """Final checkpoint, its digest and path, the trained tensors and the log."""
    checkpoint: Checkpoint
    sha256: str
    checkpoint_path: Path
    params: Dict[str, Tensor]
    log: TrainingLog
    phase_checkpoints: Dict[int, Path] = field(default_factory=dict)


# PUBLIC_INTERFACE
class Trainer:
    """Owns the parameters and applies Adam steps to the unfrozen ones.

    Args:
        config: model configuration
        params: parameters (updated in place)
        schedule: optimisation schedule
        phase: phase number recorded in the log
        frozen_groups: parameter groups excluded from updates
        excluded_speaker: speaker whose embedding row must stay untouched
        debug_freeze_checks: hash frozen groups and check the excluded row after every step
        log: training log to append to
    """

    def __init__(self, config: ModelConfig, params: Mapping[str, Tensor], schedule: Schedule,
                 phase: int = 1, frozen_groups: Sequence[str] = (),
                 excluded_speaker: Optional[int] = None, debug_freeze_checks: bool = False,
                 log: Optional[TrainingLog] = None):
        self.config = config
        self.params = params
        self.schedule = schedule
        self.phase = phase
        self.frozen_groups = tuple(frozen_groups)
        self.excluded_speaker = excluded_speaker
        self.debug_freeze_checks = debug_freeze_checks
        self.log = log or TrainingLog()
        self.trainable = exclude(params, self.frozen_groups)
        self.optimizer = Adam(self.trainable, lr=schedule.learning_rate)
        self.rng = np.random.default_rng([schedule.seed, phase])
        self.step_index = 0
        self._frozen_digest = parameter_digest(params, self.frozen_groups) if self.frozen_groups else None

    def _check_invariants(self) -> None:
        if self._frozen_digest is not None:
            if parameter_digest(self.params, self.frozen_groups) != self._frozen_digest:
                raise VerificationError(f'frozen groups {list(self.frozen_groups)} changed at step {self.step_index}')
        if self.excluded_speaker is not None:
            table = self.params.get('speaker_embedding.table')
            if table is not None and table.grad is not None and self.excluded_speaker < table.shape[0] \
                    and np.any(table.grad[self.excluded_speaker] != 0):
                raise VerificationError(f'excluded speaker {self.excluded_speaker} received a gradient')

    def train_step(self, batch: Sequence[UtteranceRecord]) -> StepRecord:
        """Forward, backward, clip and update on one batch."""
        for p in self.params.values():
            p.zero_grad()
        with Tape() as tape:
            losses = []
            diagnostics = []
            for record in batch:
                result = forward_teacher_forced(record, self.params, self.config, training=True, rng=self.rng,
                                                teacher_forcing_ratio=self.schedule.teacher_forcing_ratio)
                losses.append(compute_loss(result, record.features, self.config))
                diagnostics.append(attention_diagnostics(result.traces))
            total = losses[0].total
            for breakdown in losses[1:]:
                total = ops.add(total, breakdown.total)
            total = ops.mul(total, 1.0 / len(losses))
        tape.backward(total)

        trainable = [p for p in self.trainable.values()]
        if self.schedule.grad_clip > 0:
            grad_norm = clip_grad_norm(trainable, self.schedule.grad_clip)
        else:
            grad_norm = global_grad_norm(trainable)
        lr = self.schedule.learning_rate_at(self.step_index)
        self.optimizer.step(lr=lr)
        self.step_index += 1
        if self.debug_freeze_checks:
            self._check_invariants()

        record = StepRecord(
            phase=self.phase,
            step=self.step_index,
            loss=float(total.item()),
            mel_loss=float(np.mean([b.mel for b in losses])),
            linear_loss=float(np.mean([b.linear for b in losses])),
            stop_loss=float(np.mean([b.stop for b in losses])),
            grad_norm=float(grad_norm),
            learning_rate=lr,
            entropy=float(np.mean([d.entropy for d in diagnostics])),
            forward_motion=float(np.mean([d.forward_motion for d in diagnostics])),
        )
        self.log.append_step(record)
        return record

    def run(self, records: Sequence[UtteranceRecord], steps: int, show_progress: bool = False,
            on_step=None) -> List[StepRecord]:
        if steps and not records:
            raise DataError(f'phase {self.phase} has no training utterances')
        history = []
        bar = tqdm(range(steps), desc=f'phase {self.phase}', file=sys.stderr, disable=not show_progress)
        for _ in bar:
            record = self.train_step(sample_batch(records, self.schedule.batch_size, self.rng))
            bar.set_postfix(loss=f'{record.loss:.4f}')
            history.append(record)
            if on_step is not None:
                on_step(record)
        return history


def evaluation_loss(records: Iterable[UtteranceRecord], params: Mapping[str, Tensor], config: ModelConfig) -> float:
    """Mean teacher-forced loss in inference mode (no dropout, no tape)."""
    values = [compute_loss(forward_teacher_forced(r, params, config), r.features, config).total.item()
              for r in records]
    return float(np.mean(values)) if values else 0.0


def _check_exclusion(regime: TrainingRegime, records: Sequence[UtteranceRecord]) -> None:
    offending = sorted({r.utterance_id for r in records if r.speaker_id == regime.target_speaker_id})
    if offending:
        raise ConfigurationError(
            f'{regime.regime.value}: target speaker {regime.target_speaker_id} appears in the AVM phase '
            f'({len(offending)} utterances, e.g. {offending[:3]})'
        )


def _metadata(regime: TrainingRegime, phase: int, step: int, inventory: Optional[PhonemeInventory],
              normalizer: Optional[FeatureNormalizer]) -> dict:
    return {
        'inventory': inventory.to_dict() if inventory is not None else None,
        'normalizer': normalizer.to_dict() if normalizer is not None else None,
        'provenance': {'name': regime.name, 'regime': regime.regime.value, 'phase': phase, 'step': step,
                       'seed': regime.schedule.seed, 'target_speaker_id': regime.target_speaker_id,
                       'target_set': regime.target_set.value if regime.target_set else None},
    }


# PUBLIC_INTERFACE
def train_records(regime: TrainingRegime, config: ModelConfig, phase_one: Sequence[UtteranceRecord],
                  out_dir: Union[str, Path], phase_two: Sequence[UtteranceRecord] = (),
                  inventory: Optional[PhonemeInventory] = None,
                  normalizer: Optional[FeatureNormalizer] = None, debug_freeze_checks: bool = False,
                  show_progress: bool = False, use_registry: bool = False) -> TrainingResult:
    """Run a regime on in-memory records (features attached and normalised).

    AVM_POOLED trains with speaker placement NONE. AVM_EXCLUDE_THEN_RETRAIN
    trains phase 1 without the target speaker, then retrains on ``phase_two``
    with ``regime.freeze_groups`` frozen; an empty ``phase_two`` leaves the
    AVM as the result.

    Raises:
        ConfigurationError: if the target speaker appears in the exclusion phase
            (checked before any step) or lies outside the speaker table
        DataError: for an empty phase-1 corpus with steps requested
    """
    schedule = regime.schedule
    out_dir = Path(out_dir)
    if regime.regime is RegimeKind.AVM_POOLED and config.speaker_placement is not SpeakerPlacement.NONE:
        logger.info('AVM_POOLED pools all speakers: speaker placement forced to NONE')
        config = config.with_overrides(speaker_placement=SpeakerPlacement.NONE)
    excluding = regime.regime is RegimeKind.AVM_EXCLUDE_THEN_RETRAIN
    if excluding:
        _check_exclusion(regime, phase_one)
    if config.speaker_placement is not SpeakerPlacement.NONE:
        for record in list(phase_one) + list(phase_two):
            if record.speaker_id >= config.speaker_count:
                raise ConfigurationError(
                    f'{record.utterance_id}: speaker {record.speaker_id} outside table of {config.speaker_count}'
                )

    params = init_parameters(config, seed=schedule.seed)
    log = TrainingLog(out_dir / 'train_log.jsonl')
    run = None
    if use_registry:
        run, error = create_run(regime.name, regime.regime.value, schedule.seed,
                                {'regime': regime.to_dict(), 'model': config.to_dict()})
        if error:
            logger.warning('run registry unavailable: %s', error)

    phases = [(1, phase_one, schedule.steps, (), regime.target_speaker_id if excluding else None)]
    if excluding and phase_two:
        phases.append((2, phase_two, schedule.phase_two_steps, regime.freeze_groups, None))
    elif excluding:
        logger.info('no target-speaker utterances: AVM-only training')

    phase_checkpoints: Dict[int, Path] = {}
    sha256 = ''
    try:
        for phase, records, steps, frozen, excluded in phases:
            trainer = Trainer(config, params, schedule, phase=phase, frozen_groups=frozen,
                              excluded_speaker=excluded, debug_freeze_checks=debug_freeze_checks, log=log)
            logger.info('phase %d: %d utterances, %d steps, frozen=%s', phase, len(records), steps, list(frozen))

            def save(step: int) -> None:
                nonlocal sha256
                path = out_dir / 'checkpoints' / f'phase{phase}_step{step:06d}.ptck'
                metadata = _metadata(regime, phase, step, inventory, normalizer)
                sha256 = save_checkpoint(path, config, params, metadata)
                last_loss = log.steps[-1].loss if log.steps else None
                log.append_checkpoint(CheckpointEntry(phase, step, sha256, str(path), last_loss))
                if run is not None:
                    record_checkpoint(run, phase, step, sha256, str(path), last_loss)
                phase_checkpoints[phase] = path

            def on_step(record: StepRecord) -> None:
                every = schedule.checkpoint_every
                if every and record.step % every == 0 and record.step != steps:
                    save(record.step)

            trainer.run(records, steps, show_progress=show_progress, on_step=on_step)
            save(steps)
    except Exception:
        if run is not None:
            finish_run(run, RunStatus.FAILED)
        raise
    if run is not None:
        finish_run(run, RunStatus.COMPLETED)

    final_path = phase_checkpoints[max(phase_checkpoints)]
    checkpoint = Checkpoint(config=config, params=to_numpy(params),
                            metadata=_metadata(regime, max(phase_checkpoints), log.checkpoints[-1].step,
                                               inventory, normalizer))
    return TrainingResult(checkpoint=checkpoint, sha256=sha256, checkpoint_path=final_path,
                          params=params, log=log, phase_checkpoints=phase_checkpoints)


# PUBLIC_INTERFACE
def train(regime: TrainingRegime, config: ModelConfig, inventory: PhonemeInventory,
          out_dir: Union[str, Path], deterministic: bool = True, debug_freeze_checks: bool = False,
          show_progress: bool = False, use_registry: bool = True) -> TrainingResult:
    """Load the regime's manifests and cached features, then run ``train_records``.

    One normaliser is fitted over every utterance the regime trains on and is
    stored in the checkpoint metadata.
    """
    if regime.features_dir is None:
        raise ConfigurationError('regime needs features_dir (precompute with `mixtts features`)')
    first, second = manifests_for_phase(regime, 1), manifests_for_phase(regime, 2)
    every = first + [m for m in second if m not in first]
    grouped, normalizer = load_corpus_by_manifest(every, inventory, regime.features_dir,
                                                  deterministic=deterministic)
    phase_one = [r for manifest in first for r in grouped[manifest]]
    phase_two: List[UtteranceRecord] = []
    if regime.regime is RegimeKind.AVM_EXCLUDE_THEN_RETRAIN:
        phase_two = [r for manifest in second for r in grouped[manifest]]
    return train_records(regime, config, phase_one, out_dir, phase_two=phase_two, inventory=inventory,
                         normalizer=normalizer, debug_freeze_checks=debug_freeze_checks,
                         show_progress=show_progress, use_registry=use_registry)
