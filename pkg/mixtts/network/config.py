"""Model hyper-parameters."""
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Tuple

from mixtts.errors import ConfigurationError


class AttentionVariant(str, Enum):
    """How phoneme identity enters the attention context."""
    BASE = 'BASE'
    PECV = 'PECV'
    RES = 'RES'


class SpeakerPlacement(str, Enum):
    """Where the speaker embedding is concatenated."""
    NONE = 'NONE'
    SE_ENC = 'SE_ENC'
    SE_DEC = 'SE_DEC'


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class ModelConfig:
    """Encoder-decoder dimensions and variant switches.

    Attributes:
        phoneme_vocab: inventory size V
        embedding_dim: phoneme embedding width d_p
        encoder_dim: encoder output width d_h (split across the two GRU directions)
        decoder_dim: decoder LSTM width d_s
        speaker_count: rows of the speaker table N_s
        speaker_dim: speaker embedding width d_spk (0 disables conditioning)
        attention_variant: BASE, PECV or RES
        speaker_placement: NONE, SE_ENC or SE_DEC
        reduction_factor: mel frames emitted per decoder step r
        prenet_dims: widths of the prenet layers
        attention_dim: hidden width of the additive scorer
        encoder_conv_layers: conv layers before the recurrence
        conv_kernel: odd kernel size shared by encoder and post-net convolutions
        postnet_dim: post-net conv width
        n_mels: mel channels
        n_linear: linear-spectrogram bins
        max_decoder_steps: synthesis cap
        prenet_dropout: dropout rate inside the prenet (training only)
    """
    phoneme_vocab: int = 239
    embedding_dim: int = 128
    encoder_dim: int = 128
    decoder_dim: int = 256
    speaker_count: int = 1
    speaker_dim: int = 16
    attention_variant: AttentionVariant = AttentionVariant.BASE
    speaker_placement: SpeakerPlacement = SpeakerPlacement.NONE
    reduction_factor: int = 2
    prenet_dims: Tuple[int, ...] = field(default=(128, 64))
    attention_dim: int = 128
    encoder_conv_layers: int = 2
    conv_kernel: int = 5
    postnet_dim: int = 128
    n_mels: int = 80
    n_linear: int = 1025
    max_decoder_steps: int = 200
    prenet_dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, 'attention_variant', AttentionVariant(self.attention_variant))
        object.__setattr__(self, 'speaker_placement', SpeakerPlacement(self.speaker_placement))
        object.__setattr__(self, 'prenet_dims', tuple(int(d) for d in self.prenet_dims))
        positive = {
            'phoneme_vocab': self.phoneme_vocab, 'embedding_dim': self.embedding_dim,
            'encoder_dim': self.encoder_dim, 'decoder_dim': self.decoder_dim,
            'speaker_count': self.speaker_count, 'attention_dim': self.attention_dim,
            'postnet_dim': self.postnet_dim, 'n_mels': self.n_mels, 'n_linear': self.n_linear,
            'max_decoder_steps': self.max_decoder_steps, 'reduction_factor': self.reduction_factor,
            'conv_kernel': self.conv_kernel,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigurationError(f'{name} must be > 0, got {value}')
        if self.speaker_dim < 0:
            raise ConfigurationError(f'speaker_dim must be >= 0, got {self.speaker_dim}')
        if self.encoder_conv_layers < 0:
            raise ConfigurationError('encoder_conv_layers must be >= 0')
        if not self.prenet_dims or any(d <= 0 for d in self.prenet_dims):
            raise ConfigurationError(f'prenet_dims must be positive, got {self.prenet_dims}')
        if self.encoder_dim % 2:
            raise ConfigurationError(f'encoder_dim must be even (bidirectional halves), got {self.encoder_dim}')
        if self.conv_kernel % 2 == 0:
            raise ConfigurationError(f'conv_kernel must be odd, got {self.conv_kernel}')
        if not 0.0 <= self.prenet_dropout < 1.0:
            raise ConfigurationError(f'prenet_dropout must be in [0, 1), got {self.prenet_dropout}')
        if self.attention_variant is AttentionVariant.RES and self.embedding_dim != self.encoder_dim:
            raise ConfigurationError(
                f'RES adds phoneme embeddings to encoder outputs: embedding_dim ({self.embedding_dim}) '
                f'must equal encoder_dim ({self.encoder_dim})'
            )

    @property
    def conditions_encoder(self) -> bool:
        return self.speaker_placement is SpeakerPlacement.SE_ENC

    @property
    def conditions_decoder(self) -> bool:
        return self.speaker_placement is SpeakerPlacement.SE_DEC

    @property
    def has_speaker_table(self) -> bool:
        return self.speaker_placement is not SpeakerPlacement.NONE and self.speaker_dim > 0

    @property
    def memory_dim(self) -> int:
        """Width of attention keys/values: encoder outputs plus the SE-ENC speaker block."""
        return self.encoder_dim + (self.speaker_dim if self.conditions_encoder else 0)

    @property
    def context_dim(self) -> int:
        """Width of the context C_i fed to the decoder."""
        if self.attention_variant is AttentionVariant.PECV:
            return self.encoder_dim
        return self.memory_dim

    @property
    def decoder_input_dim(self) -> int:
        speaker = self.speaker_dim if self.conditions_decoder else 0
        return self.prenet_dims[-1] + speaker + self.context_dim

    def with_overrides(self, **changes) -> 'ModelConfig':
        return replace(self, **changes)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload['attention_variant'] = self.attention_variant.value
        payload['speaker_placement'] = self.speaker_placement.value
        payload['prenet_dims'] = list(self.prenet_dims)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> 'ModelConfig':
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigurationError(f'unknown model config keys: {unknown}')
        try:
            return cls(**payload)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f'invalid model config: {exc}') from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
