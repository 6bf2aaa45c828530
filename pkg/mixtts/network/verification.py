"""End-to-end finite-difference checks of the teacher-forced loss on toy models."""
import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from mixtts.autodiff.gradcheck import GradCheckReport, check_gradients
from mixtts.autodiff.tensor import precision
from mixtts.dsp.features import FeaturePair
from mixtts.frontend.manifest import UtteranceLanguage, UtteranceRecord
from mixtts.network.config import AttentionVariant, ModelConfig, SpeakerPlacement
from mixtts.network.parameters import init_parameters
from mixtts.network.tacotron import compute_loss, forward_teacher_forced

logger = logging.getLogger(__name__)

END_TO_END_TOLERANCE = 1e-3
MAX_ELEMENTS = 24


def toy_config(variant: AttentionVariant, placement: SpeakerPlacement, **overrides) -> ModelConfig:
    """A model small enough to finite-difference every parameter tensor."""
    settings = dict(
        phoneme_vocab=12, embedding_dim=6, encoder_dim=6, decoder_dim=8, speaker_count=2, speaker_dim=3,
        attention_variant=variant, speaker_placement=placement, reduction_factor=2, prenet_dims=(6, 4),
        attention_dim=5, encoder_conv_layers=1, conv_kernel=3, postnet_dim=6, n_mels=4, n_linear=5,
        max_decoder_steps=20, prenet_dropout=0.0,
    )
    settings.update(overrides)
    return ModelConfig(**settings)


def toy_record(config: ModelConfig, n_frames: int = 5, seed: int = 0,
               phoneme_ids: Sequence[int] = (4, 7, 9, 1)) -> UtteranceRecord:
    """Seeded utterance with random normalised targets for ``config``."""
    rng = np.random.default_rng(seed)
    features = FeaturePair(mel=rng.uniform(0.0, 1.0, (n_frames, config.n_mels)),
                           linear=rng.uniform(0.0, 1.0, (n_frames, config.n_linear)))
    return UtteranceRecord(utterance_id=f'toy{seed}', speaker_id=min(1, config.speaker_count - 1),
                           language=UtteranceLanguage.MAN, phoneme_ids=tuple(phoneme_ids), features=features)


# PUBLIC_INTERFACE
def end_to_end_gradcheck(variant: AttentionVariant, placement: SpeakerPlacement, seed: int = 1234,
                         tolerance: float = END_TO_END_TOLERANCE,
                         max_elements: Optional[int] = MAX_ELEMENTS) -> GradCheckReport:
    """Check d(loss)/d(parameter) for every parameter tensor of one toy configuration at 64-bit."""
    config = toy_config(AttentionVariant(variant), SpeakerPlacement(placement))
    with precision('f64'):
        params = init_parameters(config, seed=seed)
        record = toy_record(config, seed=seed)

        def loss():
            return compute_loss(forward_teacher_forced(record, params, config), record.features, config).total

        return check_gradients(loss, params, tolerance=tolerance, max_elements=max_elements, seed=seed,
                               label=f'{config.attention_variant.value} x {config.speaker_placement.value}')


@dataclass
class GridOutcome:
    variant: AttentionVariant
    placement: SpeakerPlacement
    report: GradCheckReport

    def as_dict(self) -> dict:
        return {'variant': self.variant.value, 'placement': self.placement.value,
                'passed': self.report.passed, 'max_rel_error': self.report.max_rel_error}


# PUBLIC_INTERFACE
def gradcheck_grid(variants: Sequence[AttentionVariant] = tuple(AttentionVariant),
                   placements: Sequence[SpeakerPlacement] = tuple(SpeakerPlacement),
                   seed: int = 1234, tolerance: float = END_TO_END_TOLERANCE) -> List[GridOutcome]:
    """Run ``end_to_end_gradcheck`` over variant x placement."""
    outcomes = []
    for variant, placement in itertools.product(variants, placements):
        report = end_to_end_gradcheck(variant, placement, seed=seed, tolerance=tolerance)
        logger.info('%s: max rel err %.3e (%s)', report.label, report.max_rel_error,
                    'ok' if report.passed else 'FAIL')
        outcomes.append(GridOutcome(AttentionVariant(variant), SpeakerPlacement(placement), report))
    return outcomes
