"""Prenet, LSTM decoder step and the mel-to-linear post-net."""
from typing import Mapping, Optional, Tuple

import numpy as np

from mixtts.autodiff import ops
from mixtts.autodiff.layers import CellKind, RecurrentState, initial_state, recurrent_cell_step, stack
from mixtts.autodiff.tensor import Tensor, get_default_dtype
from mixtts.errors import ConfigurationError, DimensionError
from mixtts.network.config import ModelConfig


def initial_decoder_state(config: ModelConfig, dtype: Optional[type] = None) -> RecurrentState:
    return initial_state(CellKind.LSTM, config.decoder_dim, dtype)


def go_frame(config: ModelConfig, dtype: Optional[type] = None) -> Tensor:
    return Tensor(np.zeros((1, config.n_mels)), dtype=dtype or get_default_dtype())


def prenet(frame: Tensor, params: Mapping[str, Tensor], config: ModelConfig,
           training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    layers = [(params[f'prenet.fc{i}.weight'], params[f'prenet.fc{i}.bias'])
              for i in range(len(config.prenet_dims))]
    return stack(frame, layers, ops.relu, config.prenet_dropout, training, rng)


def _lstm(params: Mapping[str, Tensor]) -> dict:
    return {'weight': params['decoder.lstm.weight'], 'bias': params['decoder.lstm.bias']}


# PUBLIC_INTERFACE
def decode_step(prev_frame: Tensor, state: RecurrentState, context: Tensor,
                speaker: Optional[Tensor], params: Mapping[str, Tensor], config: ModelConfig,
                training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor, RecurrentState]:
    """One autoregressive step.

    The LSTM consumes [prenet(prev_frame); speaker (SE_DEC); C_i]; the mel
    group and stop logit are projected from [s_i; C_i].

    Args:
        prev_frame: last frame of the previous group [1, n_mels]
        state: decoder LSTM state
        context: combined attention context C_i [1, d_ctx]
        speaker: speaker row [1, d_spk] for SE_DEC, ignored otherwise
        params: model parameters
        config: model configuration
        training: enables prenet dropout
        rng: dropout generator

    Returns:
        Tuple of (mel frames [r, n_mels], stop logit [1, 1], new state)

    Raises:
        ConfigurationError: when the state or context width does not match the config
    """
    if state.h.shape != (1, config.decoder_dim):
        raise DimensionError('decoder state does not match decoder_dim', state.h.shape, (1, config.decoder_dim))
    if context.shape != (1, config.context_dim):
        raise DimensionError('attention context does not match context_dim', context.shape, (1, config.context_dim))
    if prev_frame.shape != (1, config.n_mels):
        raise DimensionError('previous frame does not match n_mels', prev_frame.shape, (1, config.n_mels))

    pieces = [prenet(prev_frame, params, config, training, rng)]
    if config.conditions_decoder:
        if speaker is None:
            raise ConfigurationError('SE_DEC decoding needs a speaker embedding')
        pieces.append(speaker)
    pieces.append(context)
    s, state = recurrent_cell_step(CellKind.LSTM, ops.concat(pieces, axis=1), state, _lstm(params))

    projected = ops.concat([s, context], axis=1)
    mel = ops.affine(projected, params['decoder.mel.weight'], params['decoder.mel.bias'])
    stop = ops.affine(projected, params['decoder.stop.weight'], params['decoder.stop.bias'])
    return ops.reshape(mel, (config.reduction_factor, config.n_mels)), stop, state


# PUBLIC_INTERFACE
def postnet(mel: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Two relu convolutions then an affine map from mel [T, n_mels] to linear [T, n_linear]."""
    x = ops.relu(ops.conv1d(mel, params['postnet.conv0.weight'], params['postnet.conv0.bias']))
    x = ops.relu(ops.conv1d(x, params['postnet.conv1.weight'], params['postnet.conv1.bias']))
    return ops.affine(x, params['postnet.linear.weight'], params['postnet.linear.bias'])
