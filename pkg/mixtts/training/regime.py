"""Training regime declarations (schema-versioned JSON)."""
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

from mixtts.errors import ConfigurationError
from mixtts.frontend.manifest import UtteranceLanguage
from mixtts.network.config import ModelConfig
from mixtts.network.parameters import RETRAIN_FROZEN_GROUPS, validate_groups

SCHEMA_VERSION = 1


class RegimeKind(str, Enum):
    """Average-voice-model strategies."""
    AVM_POOLED = 'AVM_POOLED'
    AVM_SPK_EMB_INCLUDE_TARGET = 'AVM_SPK_EMB_INCLUDE_TARGET'
    AVM_EXCLUDE_THEN_RETRAIN = 'AVM_EXCLUDE_THEN_RETRAIN'


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class Schedule:
    """Optimisation schedule.

    Attributes:
        steps: optimizer steps (phase 1)
        learning_rate: Adam step size
        lr_half_life: steps per halving of the learning rate (0 disables decay)
        batch_size: utterances per step
        teacher_forcing_ratio: probability of feeding ground-truth frames
        seed: sampling, dropout and initialisation seed
        grad_clip: global gradient-norm cap (0 disables clipping)
        retrain_steps: phase-2 steps for AVM_EXCLUDE_THEN_RETRAIN (defaults to ``steps``)
        checkpoint_every: also checkpoint every N steps (0: only at phase end)
    """
    steps: int = 200
    learning_rate: float = 1e-3
    lr_half_life: int = 0
    batch_size: int = 8
    teacher_forcing_ratio: float = 1.0
    seed: int = 1234
    grad_clip: float = 1.0
    retrain_steps: Optional[int] = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.steps < 0 or (self.retrain_steps is not None and self.retrain_steps < 0):
            raise ConfigurationError('step counts must be >= 0')
        if self.learning_rate <= 0:
            raise ConfigurationError(f'learning_rate must be > 0, got {self.learning_rate}')
        if self.batch_size < 1:
            raise ConfigurationError(f'batch_size must be >= 1, got {self.batch_size}')
        if not 0.0 <= self.teacher_forcing_ratio <= 1.0:
            raise ConfigurationError(f'teacher_forcing_ratio must be in [0, 1], got {self.teacher_forcing_ratio}')
        if self.lr_half_life < 0 or self.grad_clip < 0 or self.checkpoint_every < 0:
            raise ConfigurationError('lr_half_life, grad_clip and checkpoint_every must be >= 0')

    def learning_rate_at(self, step: int) -> float:
        if self.lr_half_life <= 0:
            return self.learning_rate
        return self.learning_rate * 0.5 ** (step / self.lr_half_life)

    @property
    def phase_two_steps(self) -> int:
        return self.steps if self.retrain_steps is None else self.retrain_steps


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class TrainingRegime:
    """What to train on and which parameter groups stay fixed.

    Manifest and directory paths are resolved against the regime file's
    directory when loaded with ``load_regime``.

    Attributes:
        regime: strategy
        avm_manifests: multi-speaker manifests
        target_speaker_id: speaker the voice is built for
        target_manifest: target-speaker manifest (AVM_SPK_EMB_INCLUDE_TARGET, AVM_EXCLUDE_THEN_RETRAIN)
        target_set: MAN, ENG or MIX corpus the target manifest was built from
        features_dir: directory of cached ``<utterance id>.ptfp`` features
        freeze_groups: groups frozen in the retrain phase
        schedule: optimisation schedule
        model: model configuration overrides (ModelConfig fields)
        name: run name
    """
    regime: RegimeKind
    avm_manifests: Tuple[str, ...]
    target_speaker_id: int = 0
    target_manifest: Optional[str] = None
    target_set: Optional[UtteranceLanguage] = None
    features_dir: Optional[str] = None
    freeze_groups: Tuple[str, ...] = RETRAIN_FROZEN_GROUPS
    schedule: Schedule = field(default_factory=Schedule)
    model: dict = field(default_factory=dict)
    name: str = 'run'

    def __post_init__(self):
        object.__setattr__(self, 'regime', RegimeKind(self.regime))
        object.__setattr__(self, 'avm_manifests', tuple(str(p) for p in self.avm_manifests))
        object.__setattr__(self, 'freeze_groups', validate_groups(self.freeze_groups))
        if self.target_set is not None:
            object.__setattr__(self, 'target_set', UtteranceLanguage(self.target_set))
        if not self.avm_manifests:
            raise ConfigurationError('a regime needs at least one AVM manifest')
        if self.target_speaker_id < 0:
            raise ConfigurationError(f'target_speaker_id must be >= 0, got {self.target_speaker_id}')

    def model_config(self, base: Optional[ModelConfig] = None) -> ModelConfig:
        """Model config with this regime's overrides applied (placement NONE when pooled)."""
        merged = (base or ModelConfig()).to_dict()
        merged.update(self.model)
        if self.regime is RegimeKind.AVM_POOLED:
            merged['speaker_placement'] = 'NONE'
        return ModelConfig.from_dict(merged)

    def resolved(self, base_dir: Path) -> 'TrainingRegime':
        def resolve(value: Optional[str]) -> Optional[str]:
            if value is None:
                return None
            path = Path(value)
            return str(path if path.is_absolute() else (base_dir / path).resolve())
        return replace(self, avm_manifests=tuple(resolve(p) for p in self.avm_manifests),
                       target_manifest=resolve(self.target_manifest),
                       features_dir=resolve(self.features_dir))

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload['schema_version'] = SCHEMA_VERSION
        payload['regime'] = self.regime.value
        payload['avm_manifests'] = list(self.avm_manifests)
        payload['freeze_groups'] = list(self.freeze_groups)
        payload['target_set'] = self.target_set.value if self.target_set is not None else None
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> 'TrainingRegime':
        payload = dict(payload)
        version = payload.pop('schema_version', None)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f'regime schema_version must be {SCHEMA_VERSION}, got {version!r}')
        unknown = sorted(set(payload) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigurationError(f'unknown regime keys: {unknown}')
        try:
            schedule = Schedule(**payload.pop('schedule', {}))
            return cls(schedule=schedule, **payload)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f'invalid regime: {exc}') from exc


# PUBLIC_INTERFACE
def load_regime(path: Union[str, Path]) -> TrainingRegime:
    """Parse a regime JSON file and resolve its paths against the file's directory."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f'cannot read regime {path}: {exc}') from exc
    return TrainingRegime.from_dict(payload).resolved(path.parent.resolve())


def save_regime(path: Union[str, Path], regime: TrainingRegime) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(regime.to_dict(), indent=2, sort_keys=True) + '\n')
    return path


def manifests_for_phase(regime: TrainingRegime, phase: int) -> List[str]:
    """Manifests trained on in ``phase`` (1 or 2)."""
    if regime.regime is RegimeKind.AVM_EXCLUDE_THEN_RETRAIN:
        if phase == 1:
            return list(regime.avm_manifests)
        return [regime.target_manifest] if regime.target_manifest else []
    manifests = list(regime.avm_manifests)
    if regime.regime is RegimeKind.AVM_SPK_EMB_INCLUDE_TARGET and regime.target_manifest:
        manifests.append(regime.target_manifest)
    return manifests
