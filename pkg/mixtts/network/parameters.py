"""Parameter naming, shapes, initialisation and freeze groups.

Every parameter is named ``<group>.<layer>.<tensor>``; the group prefix is what
freeze masks refer to. Initial values are drawn from a generator seeded with
(seed, crc32(name)), so a tensor's initial value depends only on its name and
shape, never on which other tensors the configuration allocates.
"""
import hashlib
import zlib
from collections import OrderedDict
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from mixtts.autodiff.layers import CellKind, cell_shapes
from mixtts.autodiff.tensor import Tensor, get_default_dtype
from mixtts.errors import ConfigurationError
from mixtts.network.config import AttentionVariant, ModelConfig

PARAMETER_GROUPS = (
    'phoneme_embedding',
    'encoder',
    'speaker_embedding',
    'attention',
    'prenet',
    'decoder',
    'postnet',
)

# "retrain the decoder": everything except the phoneme embeddings and encoder is updated
RETRAIN_FROZEN_GROUPS = ('phoneme_embedding', 'encoder')

Params = Dict[str, Tensor]


def _cell(prefix: str, kind: CellKind, input_dim: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    return {f'{prefix}.{key}': shape for key, shape in cell_shapes(kind, input_dim, hidden).items()}


# PUBLIC_INTERFACE
def parameter_shapes(config: ModelConfig) -> 'OrderedDict[str, Tuple[int, ...]]':
    """Every parameter of ``config`` in a fixed order."""
    shapes: 'OrderedDict[str, Tuple[int, ...]]' = OrderedDict()
    shapes['phoneme_embedding.table'] = (config.phoneme_vocab, config.embedding_dim)

    width = config.embedding_dim
    for layer in range(config.encoder_conv_layers):
        shapes[f'encoder.conv{layer}.weight'] = (config.conv_kernel, width, config.encoder_dim)
        shapes[f'encoder.conv{layer}.bias'] = (config.encoder_dim,)
        width = config.encoder_dim
    half = config.encoder_dim // 2
    shapes.update(_cell('encoder.gru_fw', CellKind.GRU, width, half))
    shapes.update(_cell('encoder.gru_bw', CellKind.GRU, width, half))

    if config.has_speaker_table:
        shapes['speaker_embedding.table'] = (config.speaker_count, config.speaker_dim)

    shapes['attention.query'] = (config.decoder_dim, config.attention_dim)
    shapes['attention.memory'] = (config.memory_dim, config.attention_dim)
    shapes['attention.bias'] = (config.attention_dim,)
    shapes['attention.score'] = (config.attention_dim, 1)
    if config.attention_variant is AttentionVariant.PECV:
        shapes['attention.reduce.weight'] = (config.memory_dim + config.embedding_dim, config.encoder_dim)
        shapes['attention.reduce.bias'] = (config.encoder_dim,)

    width = config.n_mels
    for layer, dim in enumerate(config.prenet_dims):
        shapes[f'prenet.fc{layer}.weight'] = (width, dim)
        shapes[f'prenet.fc{layer}.bias'] = (dim,)
        width = dim

    shapes.update(_cell('decoder.lstm', CellKind.LSTM, config.decoder_input_dim, config.decoder_dim))
    projected = config.decoder_dim + config.context_dim
    shapes['decoder.mel.weight'] = (projected, config.reduction_factor * config.n_mels)
    shapes['decoder.mel.bias'] = (config.reduction_factor * config.n_mels,)
    shapes['decoder.stop.weight'] = (projected, 1)
    shapes['decoder.stop.bias'] = (1,)

    shapes['postnet.conv0.weight'] = (config.conv_kernel, config.n_mels, config.postnet_dim)
    shapes['postnet.conv0.bias'] = (config.postnet_dim,)
    shapes['postnet.conv1.weight'] = (config.conv_kernel, config.postnet_dim, config.postnet_dim)
    shapes['postnet.conv1.bias'] = (config.postnet_dim,)
    shapes['postnet.linear.weight'] = (config.postnet_dim, config.n_linear)
    shapes['postnet.linear.bias'] = (config.n_linear,)
    return shapes


def _initial_value(name: str, shape: Tuple[int, ...], seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, zlib.crc32(name.encode('utf-8'))])
    if name.endswith('.table'):
        return rng.normal(0.0, 0.3, size=shape)
    if len(shape) == 1:
        return np.zeros(shape)
    fan_in = int(np.prod(shape[:-1]))
    fan_out = shape[-1]
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=shape)


# PUBLIC_INTERFACE
def init_parameters(config: ModelConfig, seed: int = 1234, dtype: Optional[type] = None) -> Params:
    """Fresh trainable parameters (Glorot-uniform matrices, zero biases, N(0, 0.3) tables)."""
    dtype = dtype or get_default_dtype()
    return OrderedDict(
        (name, Tensor(_initial_value(name, shape, seed).astype(dtype), requires_grad=True, name=name))
        for name, shape in parameter_shapes(config).items()
    )


def parameter_group(name: str) -> str:
    return name.split('.', 1)[0]


def validate_groups(groups: Iterable[str]) -> Tuple[str, ...]:
    groups = tuple(groups)
    unknown = sorted(set(groups) - set(PARAMETER_GROUPS))
    if unknown:
        raise ConfigurationError(f'unknown parameter groups {unknown}; valid groups: {list(PARAMETER_GROUPS)}')
    return groups


def select(params: Mapping[str, Tensor], groups: Sequence[str]) -> Params:
    """Parameters belonging to ``groups``."""
    groups = set(validate_groups(groups))
    return OrderedDict((name, p) for name, p in params.items() if parameter_group(name) in groups)


def exclude(params: Mapping[str, Tensor], groups: Sequence[str]) -> Params:
    groups = set(validate_groups(groups))
    return OrderedDict((name, p) for name, p in params.items() if parameter_group(name) not in groups)


def check_shapes(params: Mapping[str, object], config: ModelConfig) -> None:
    """Raise unless ``params`` holds exactly the tensors ``config`` expects."""
    expected = parameter_shapes(config)
    missing = [n for n in expected if n not in params]
    extra = [n for n in params if n not in expected]
    if missing or extra:
        raise ConfigurationError(f'parameter set mismatch: missing {missing}, unexpected {extra}')
    for name, shape in expected.items():
        actual = tuple(np.shape(params[name].data if isinstance(params[name], Tensor) else params[name]))
        if actual != tuple(shape):
            raise ConfigurationError(f'{name}: shape {actual} does not match config {tuple(shape)}')


# PUBLIC_INTERFACE
def parameter_digest(params: Mapping[str, Tensor], groups: Optional[Sequence[str]] = None) -> str:
    """sha256 over names and raw bytes, optionally restricted to ``groups``."""
    chosen = select(params, groups) if groups is not None else params
    digest = hashlib.sha256()
    for name in sorted(chosen):
        digest.update(name.encode('utf-8'))
        digest.update(np.ascontiguousarray(chosen[name].data).tobytes())
    return digest.hexdigest()


def to_numpy(params: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
    return OrderedDict((name, p.data.copy()) for name, p in params.items())


def from_numpy(arrays: Mapping[str, np.ndarray], dtype: Optional[type] = None) -> Params:
    dtype = dtype or get_default_dtype()
    return OrderedDict(
        (name, Tensor(np.asarray(value, dtype=dtype), requires_grad=True, name=name))
        for name, value in arrays.items()
    )
