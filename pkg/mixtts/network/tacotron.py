"""Full encoder-attention-decoder passes: teacher-forced training and free-running synthesis."""
import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from mixtts.autodiff import ops
from mixtts.autodiff.tensor import Tensor
from mixtts.dsp.audio import AudioClip, AudioConfig
from mixtts.dsp.features import FeatureNormalizer, FeaturePair
from mixtts.dsp.spectral import griffin_lim
from mixtts.errors import ConfigurationError, DataError, DimensionError
from mixtts.network.attention import AttentionStepTrace, attention_step, memory_keys
from mixtts.network.config import ModelConfig
from mixtts.network.decoder import decode_step, go_frame, initial_decoder_state, postnet
from mixtts.network.encoder import EncodedUtterance, check_speaker, encode, speaker_embedding

logger = logging.getLogger(__name__)

STOP_THRESHOLD = 0.5


# PUBLIC_INTERFACE
@dataclass
class ForwardResult:
    """Teacher-forced predictions for one utterance.

    mel [T_frames, n_mels] and linear [T_frames, n_linear] are truncated to the
    target length; stop_logits [steps, 1] has one entry per decoder step.
    """
    mel: Tensor
    linear: Tensor
    stop_logits: Tensor
    traces: List[AttentionStepTrace]
    encoded: EncodedUtterance

    @property
    def steps(self) -> int:
        return len(self.traces)


# PUBLIC_INTERFACE
@dataclass
class LossBreakdown:
    """Total loss tensor and its float components."""
    total: Tensor
    mel: float
    linear: float
    stop: float

    def as_dict(self) -> dict:
        return {'loss': float(self.total.item()), 'mel_loss': self.mel,
                'linear_loss': self.linear, 'stop_loss': self.stop}


# PUBLIC_INTERFACE
@dataclass
class SynthesisResult:
    """Free-running output.

    Attributes:
        mel: predicted mel [frames, n_mels] (normalised units)
        linear: predicted linear spectrogram [frames, n_linear] (normalised units)
        traces: one attention trace per decoder step
        clip: Griffin-Lim waveform, None when vocoding was skipped
        hit_max_steps: decoding stopped at the step cap instead of the stop token
        gl_errors: Griffin-Lim spectral convergence per iteration
    """
    mel: np.ndarray
    linear: np.ndarray
    traces: List[AttentionStepTrace]
    clip: Optional[AudioClip] = None
    hit_max_steps: bool = False
    gl_errors: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.traces)

    def alignment(self) -> np.ndarray:
        if not self.traces:
            return np.zeros((0, 0))
        return np.stack([trace.alignment for trace in self.traces])


def stop_targets(n_frames: int, reduction_factor: int) -> np.ndarray:
    """1 on the decoder step that emits the last target frame, 0 before it."""
    steps = -(-n_frames // reduction_factor)
    targets = np.zeros((steps, 1))
    targets[-1, 0] = 1.0
    return targets


def _check_features(features: FeaturePair, config: ModelConfig) -> None:
    if features.n_frames == 0:
        raise DataError('utterance has no feature frames')
    if features.mel.shape[1] != config.n_mels:
        raise DimensionError('mel features do not match n_mels', features.mel.shape, (features.n_frames, config.n_mels))
    if features.linear.shape[1] != config.n_linear:
        raise DimensionError('linear features do not match n_linear',
                             features.linear.shape, (features.n_frames, config.n_linear))


# PUBLIC_INTERFACE
def forward_teacher_forced(record, params: Mapping[str, Tensor], config: ModelConfig,
                           training: bool = False, rng: Optional[np.random.Generator] = None,
                           teacher_forcing_ratio: float = 1.0) -> ForwardResult:
    """Unroll the decoder over a record's target frames.

    Step i is fed the last frame of target group i-1 (a zero go-frame at i=0).
    With ``teacher_forcing_ratio`` < 1 the model's own previous frame is fed
    instead with probability 1 - ratio (requires ``rng``).

    Args:
        record: UtteranceRecord with features
        params: model parameters
        config: model configuration
        training: enables prenet dropout
        rng: generator for dropout and teacher-forcing draws
        teacher_forcing_ratio: probability of feeding ground truth

    Raises:
        DataError: if the record has no features or zero frames
    """
    features = record.features
    if features is None:
        raise DataError(f'{record.utterance_id}: teacher forcing needs features')
    _check_features(features, config)
    if teacher_forcing_ratio < 1.0 and rng is None:
        raise ConfigurationError('teacher_forcing_ratio < 1 needs a seeded generator')

    dtype = params['phoneme_embedding.table'].dtype.type
    target_mel = np.asarray(features.mel, dtype=dtype)
    n_frames = features.n_frames
    r = config.reduction_factor
    steps = -(-n_frames // r)

    encoded = encode(record.phoneme_ids, record.speaker_id, params, config)
    keys = memory_keys(encoded, params)
    speaker = speaker_embedding(record.speaker_id, params, config) if config.conditions_decoder else None
    state = initial_decoder_state(config, dtype)

    prev = go_frame(config, dtype)
    groups: List[Tensor] = []
    stops: List[Tensor] = []
    traces: List[AttentionStepTrace] = []
    for step in range(steps):
        trace = attention_step(state.h, encoded, params, config, keys=keys)
        frames, stop, state = decode_step(prev, state, trace.combined, speaker, params, config, training, rng)
        traces.append(trace)
        groups.append(frames)
        stops.append(stop)
        last = min((step + 1) * r, n_frames) - 1
        if teacher_forcing_ratio >= 1.0 or rng.random() < teacher_forcing_ratio:
            prev = Tensor(target_mel[last:last + 1])
        else:
            prev = frames[r - 1:r]

    mel = ops.concat(groups, axis=0)
    if mel.shape[0] != n_frames:
        mel = mel[:n_frames]
    linear = postnet(mel, params)
    return ForwardResult(mel=mel, linear=linear, stop_logits=ops.concat(stops, axis=0),
                         traces=traces, encoded=encoded)


# PUBLIC_INTERFACE
def prediction_loss(mel: Tensor, linear: Tensor, stop_logits: Tensor, mel_target: np.ndarray,
                    linear_target: np.ndarray, stop_target: np.ndarray) -> LossBreakdown:
    """L1(mel) + L1(linear) + BCE(stop), equally weighted."""
    mel_loss = ops.l1_loss(mel, np.asarray(mel_target, dtype=mel.dtype))
    linear_loss = ops.l1_loss(linear, np.asarray(linear_target, dtype=linear.dtype))
    stop_loss = ops.bce_with_logits(stop_logits, np.asarray(stop_target, dtype=stop_logits.dtype))
    total = ops.add(ops.add(mel_loss, linear_loss), stop_loss)
    return LossBreakdown(total=total, mel=mel_loss.item(), linear=linear_loss.item(), stop=stop_loss.item())


# PUBLIC_INTERFACE
def compute_loss(result: ForwardResult, features: FeaturePair, config: ModelConfig) -> LossBreakdown:
    """Loss of a teacher-forced pass against its target features."""
    return prediction_loss(result.mel, result.linear, result.stop_logits, features.mel, features.linear,
                           stop_targets(features.n_frames, config.reduction_factor))


# PUBLIC_INTERFACE
def synthesize(phoneme_ids: Sequence[int], speaker_id: int, params: Mapping[str, Tensor],
               config: ModelConfig, normalizer: Optional[FeatureNormalizer] = None,
               audio_config: Optional[AudioConfig] = None, vocode: bool = True,
               max_steps: Optional[int] = None, griffin_lim_iters: Optional[int] = None,
               seed: int = 0) -> SynthesisResult:
    """Decode autoregressively until sigmoid(stop) > 0.5 or the step cap, then vocode.

    Reaching the cap sets ``hit_max_steps`` and logs a warning; it is not an error.

    Raises:
        ConfigurationError: for a speaker outside the table, or a linear
            dimension that does not match the audio settings when vocoding
    """
    check_speaker(speaker_id, config)
    max_steps = config.max_decoder_steps if max_steps is None else max_steps
    dtype = params['phoneme_embedding.table'].dtype.type
    audio_config = audio_config or AudioConfig()
    if vocode and config.n_linear != audio_config.n_linear:
        raise ConfigurationError(
            f'model predicts {config.n_linear} linear bins but n_fft={audio_config.n_fft} '
            f'needs {audio_config.n_linear}'
        )

    encoded = encode(phoneme_ids, speaker_id, params, config)
    keys = memory_keys(encoded, params)
    speaker = speaker_embedding(speaker_id, params, config) if config.conditions_decoder else None
    state = initial_decoder_state(config, dtype)
    prev = go_frame(config, dtype)
    r = config.reduction_factor

    groups: List[np.ndarray] = []
    traces: List[AttentionStepTrace] = []
    hit_max_steps = True
    for _ in range(max_steps):
        trace = attention_step(state.h, encoded, params, config, keys=keys)
        frames, stop, state = decode_step(prev, state, trace.combined, speaker, params, config)
        traces.append(trace)
        groups.append(frames.data)
        prev = Tensor(frames.data[r - 1:r])
        if expit(stop.item()) > STOP_THRESHOLD:
            hit_max_steps = False
            break
    if hit_max_steps:
        logger.warning('synthesis reached max_decoder_steps=%d without a stop token', max_steps)

    mel = np.concatenate(groups, axis=0) if groups else np.zeros((0, config.n_mels), dtype=dtype)
    linear = postnet(Tensor(mel), params).data if mel.shape[0] else np.zeros((0, config.n_linear), dtype=dtype)
    result = SynthesisResult(mel=mel, linear=linear, traces=traces, hit_max_steps=hit_max_steps)
    if vocode and mel.shape[0]:
        normalizer = normalizer or FeatureNormalizer.default(audio_config)
        magnitude = normalizer.linear_magnitude(linear)
        rebuilt = griffin_lim(magnitude, audio_config, n_iters=griffin_lim_iters, seed=seed)
        result.clip = rebuilt.clip
        result.gl_errors = rebuilt.errors
    return result
