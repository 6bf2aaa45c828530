"""Gated recurrent cells and layer-stacking helpers built from differentiable ops."""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from mixtts.autodiff import ops
from mixtts.autodiff.tensor import Tensor, get_default_dtype
from mixtts.errors import DimensionError


class CellKind(str, Enum):
    """Recurrent cell types."""
    GRU = 'GRU'
    LSTM = 'LSTM'


@dataclass
class RecurrentState:
    """Hidden state [1, H]; ``c`` is the LSTM cell state and None for GRU."""
    h: Tensor
    c: Optional[Tensor] = None


def cell_shapes(kind: CellKind, input_dim: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    """Parameter shapes of one recurrent cell."""
    if CellKind(kind) is CellKind.LSTM:
        return {'weight': (input_dim + hidden, 4 * hidden), 'bias': (4 * hidden,)}
    return {
        'weight_gates': (input_dim + hidden, 2 * hidden),
        'bias_gates': (2 * hidden,),
        'weight_input': (input_dim, hidden),
        'weight_hidden': (hidden, hidden),
        'bias_input': (hidden,),
        'bias_hidden': (hidden,),
    }


def initial_state(kind: CellKind, hidden: int, dtype: Optional[type] = None) -> RecurrentState:
    dtype = dtype or get_default_dtype()
    zeros = lambda: Tensor(np.zeros((1, hidden), dtype=dtype))  # noqa: E731
    if CellKind(kind) is CellKind.LSTM:
        return RecurrentState(h=zeros(), c=zeros())
    return RecurrentState(h=zeros())


def _hidden_size(kind: CellKind, weights: Mapping[str, Tensor]) -> int:
    if kind is CellKind.LSTM:
        return weights['bias'].shape[0] // 4
    return weights['bias_input'].shape[0]


# PUBLIC_INTERFACE
def recurrent_cell_step(kind: CellKind, x: Tensor, state: RecurrentState,
                        weights: Mapping[str, Tensor]) -> Tuple[Tensor, RecurrentState]:
    """Advance a GRU or LSTM cell by one step.

    Args:
        kind: cell type
        x: input row [1, d_in]
        state: previous state
        weights: cell parameters keyed as in ``cell_shapes``

    Returns:
        Tuple of (output [1, H], new state)

    Raises:
        DimensionError: if the state or input does not match the weights
    """
    kind = CellKind(kind)
    hidden = _hidden_size(kind, weights)
    if state.h.shape != (1, hidden):
        raise DimensionError(f'{kind.value} state does not match hidden size {hidden}',
                             state.h.shape, (1, hidden))
    gate_weight = weights['weight'] if kind is CellKind.LSTM else weights['weight_gates']
    if x.ndim != 2 or x.shape[0] != 1 or x.shape[1] + hidden != gate_weight.shape[0]:
        raise DimensionError(f'{kind.value} input does not match weights',
                             x.shape, gate_weight.shape)

    if kind is CellKind.LSTM:
        if state.c is None or state.c.shape != (1, hidden):
            raise DimensionError('LSTM cell state missing or mis-shaped',
                                 (1, hidden), state.c.shape if state.c is not None else ())
        z = ops.affine(ops.concat([x, state.h], axis=1), weights['weight'], weights['bias'])
        i, f, g, o = ops.split(z, [hidden] * 4, axis=1)
        c = ops.add(ops.mul(ops.sigmoid(f), state.c), ops.mul(ops.sigmoid(i), ops.tanh(g)))
        h = ops.mul(ops.sigmoid(o), ops.tanh(c))
        return h, RecurrentState(h=h, c=c)

    gates = ops.sigmoid(ops.affine(ops.concat([x, state.h], axis=1),
                                   weights['weight_gates'], weights['bias_gates']))
    update, reset = ops.split(gates, [hidden, hidden], axis=1)
    candidate = ops.tanh(ops.add(
        ops.affine(x, weights['weight_input'], weights['bias_input']),
        ops.mul(reset, ops.affine(state.h, weights['weight_hidden'], weights['bias_hidden'])),
    ))
    h = ops.add(ops.mul(ops.sub(1.0, update), candidate), ops.mul(update, state.h))
    return h, RecurrentState(h=h)


def run_recurrence(kind: CellKind, inputs: Tensor, weights: Mapping[str, Tensor],
                   reverse: bool = False) -> Tensor:
    """Unroll a cell over the rows of ``inputs`` [T, d_in]; returns [T, H] in input order."""
    kind = CellKind(kind)
    state = initial_state(kind, _hidden_size(kind, weights), inputs.dtype.type)
    order = range(inputs.shape[0] - 1, -1, -1) if reverse else range(inputs.shape[0])
    outputs = {}
    for t in order:
        out, state = recurrent_cell_step(kind, inputs[t:t + 1], state, weights)
        outputs[t] = out
    return ops.concat([outputs[t] for t in range(inputs.shape[0])], axis=0)


def bidirectional(kind: CellKind, inputs: Tensor, forward: Mapping[str, Tensor],
                  backward: Mapping[str, Tensor]) -> Tensor:
    """Concatenate forward and reverse recurrences along the feature axis."""
    return ops.concat([run_recurrence(kind, inputs, forward),
                       run_recurrence(kind, inputs, backward, reverse=True)], axis=1)


def stack(x: Tensor, layers: Sequence, activation=ops.relu, dropout_rate: float = 0.0,
          training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Apply (weight, bias) affine layers with activation and dropout between them."""
    for weight, bias in layers:
        x = ops.dropout(activation(ops.affine(x, weight, bias)), dropout_rate, training, rng)
    return x
