"""Additive attention with optional phoneme-embedding context (PECV)."""
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from mixtts.autodiff import ops
from mixtts.autodiff.tensor import Tensor
from mixtts.errors import DataError, DimensionError
from mixtts.network.config import AttentionVariant, ModelConfig
from mixtts.network.encoder import EncodedUtterance


# PUBLIC_INTERFACE
@dataclass
class AttentionStepTrace:
    """One decoder step of attention.

    All fields are row tensors: scores and weights [1, T], context [1, d_mem],
    pecv [1, d_p] (PECV only, otherwise None), combined [1, d_ctx].
    """
    scores: Tensor
    weights: Tensor
    context: Tensor
    pecv: Optional[Tensor]
    combined: Tensor

    @property
    def alignment(self) -> np.ndarray:
        return self.weights.data[0]


def memory_keys(encoded: EncodedUtterance, params: Mapping[str, Tensor]) -> Tensor:
    """U h_j for every memory row, [T, attention_dim]; reused by every step of an utterance."""
    return ops.matmul(encoded.memory, params['attention.memory'])


# PUBLIC_INTERFACE
def attention_step(query: Tensor, encoded: EncodedUtterance, params: Mapping[str, Tensor],
                   config: ModelConfig, keys: Optional[Tensor] = None,
                   forced_weights: Optional[np.ndarray] = None) -> AttentionStepTrace:
    """Score the memory against the previous decoder state and build the context.

    e_j = v^T tanh(W s + U m_j + b), alpha = softmax(e), c = sum_j alpha_j m_j.
    With PECV, c' = sum_j alpha_j p_j reuses the same alpha and C is an affine
    reduction of [c; c'] to d_h; otherwise C = c.

    Args:
        query: previous decoder state s_{i-1} [1, d_s]
        encoded: encoder products
        params: model parameters
        config: model configuration
        keys: precomputed ``memory_keys`` (computed here when omitted)
        forced_weights: use these attention weights instead of the softmax

    Raises:
        DataError: for empty memory
        DimensionError: for a query or forced weights of the wrong shape
    """
    length = encoded.length
    if length == 0:
        raise DataError('attention over an empty memory')
    if query.shape != (1, config.decoder_dim):
        raise DimensionError('attention query does not match decoder_dim', query.shape, (1, config.decoder_dim))
    keys = memory_keys(encoded, params) if keys is None else keys

    projected = ops.matmul(query, params['attention.query'])
    hidden = ops.tanh(ops.add(ops.add(keys, projected), params['attention.bias']))
    scores = ops.transpose(ops.matmul(hidden, params['attention.score']))
    if forced_weights is None:
        weights = ops.softmax(scores, axis=1)
    else:
        forced = np.asarray(forced_weights, dtype=scores.dtype).reshape(1, -1)
        if forced.shape != (1, length):
            raise DimensionError('forced attention weights do not match memory length', forced.shape, (1, length))
        weights = Tensor(forced)

    context = ops.matmul(weights, encoded.memory)
    pecv = None
    combined = context
    if config.attention_variant is AttentionVariant.PECV:
        pecv = ops.matmul(weights, encoded.phoneme_embeddings)
        combined = ops.affine(ops.concat([context, pecv], axis=1),
                              params['attention.reduce.weight'], params['attention.reduce.bias'])
    return AttentionStepTrace(scores=scores, weights=weights, context=context, pecv=pecv, combined=combined)


def recompute_pecv(trace: AttentionStepTrace, phoneme_embeddings: np.ndarray) -> np.ndarray:
    """Offline c' = alpha @ p from a stored trace."""
    return trace.weights.data @ np.asarray(phoneme_embeddings)
