"""Phoneme embedding, conv + bidirectional-GRU encoder and speaker conditioning."""
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from mixtts.autodiff import ops
from mixtts.autodiff.layers import CellKind, bidirectional
from mixtts.autodiff.tensor import Tensor
from mixtts.errors import ConfigurationError, DataError
from mixtts.network.config import AttentionVariant, ModelConfig, SpeakerPlacement


# PUBLIC_INTERFACE
@dataclass
class EncodedUtterance:
    """Encoder products for one utterance.

    Attributes:
        phoneme_embeddings: p [T, d_p]
        encoder_outputs: h [T, d_h]; includes p when the variant is RES
        memory: attention keys/values, [T, d_h + d_spk] under SE_ENC else h
        base_outputs: recurrent outputs before the residual addition
    """
    phoneme_embeddings: Tensor
    encoder_outputs: Tensor
    memory: Tensor
    base_outputs: Tensor

    @property
    def length(self) -> int:
        return self.memory.shape[0]


def _gru(params: Mapping[str, Tensor], prefix: str) -> dict:
    return {key.split('.')[-1]: value for key, value in params.items() if key.startswith(prefix + '.')}


def check_speaker(speaker_id: int, config: ModelConfig) -> None:
    if not 0 <= speaker_id < config.speaker_count:
        raise ConfigurationError(
            f'speaker id {speaker_id} is outside the valid range [0, {config.speaker_count - 1}]'
        )


# PUBLIC_INTERFACE
def speaker_embedding(speaker_id: int, params: Mapping[str, Tensor], config: ModelConfig) -> Optional[Tensor]:
    """Row [1, d_spk] of the speaker table, or None when the model is unconditioned."""
    if config.speaker_placement is SpeakerPlacement.NONE:
        return None
    check_speaker(speaker_id, config)
    if not config.has_speaker_table:
        return Tensor(np.zeros((1, 0), dtype=params['phoneme_embedding.table'].dtype))
    return ops.embedding_lookup(params['speaker_embedding.table'], [speaker_id])


def broadcast_rows(row: Tensor, count: int) -> Tensor:
    """Repeat a [1, d] row ``count`` times (differentiable)."""
    return ops.matmul(Tensor(np.ones((count, 1), dtype=row.dtype)), row)


# PUBLIC_INTERFACE
def encode(phoneme_ids: Sequence[int], speaker_id: int, params: Mapping[str, Tensor],
           config: ModelConfig) -> EncodedUtterance:
    """Embed phonemes, run the encoder and build the attention memory.

    Raises:
        DataError: for an empty id sequence
        EmbeddingIndexError: for ids outside the inventory
        ConfigurationError: for a speaker outside the table
    """
    ids = list(phoneme_ids)
    if not ids:
        raise DataError('cannot encode an empty phoneme sequence')
    p = ops.embedding_lookup(params['phoneme_embedding.table'], ids)
    x = p
    for layer in range(config.encoder_conv_layers):
        x = ops.relu(ops.conv1d(x, params[f'encoder.conv{layer}.weight'],
                                params[f'encoder.conv{layer}.bias']))
    base = bidirectional(CellKind.GRU, x, _gru(params, 'encoder.gru_fw'), _gru(params, 'encoder.gru_bw'))
    h = ops.add(base, p) if config.attention_variant is AttentionVariant.RES else base

    memory = h
    if config.conditions_encoder:
        spk = speaker_embedding(speaker_id, params, config)
        memory = ops.concat([h, broadcast_rows(spk, len(ids))], axis=1)
    return EncodedUtterance(phoneme_embeddings=p, encoder_outputs=h, memory=memory, base_outputs=base)
