"""Tensor type and the computation tape that records differentiable operations.

Operations are recorded only while a ``Tape`` is active on the current thread
and at least one input requires a gradient. ``Tape.backward`` replays the
recorded entries in reverse creation order, which is a valid reverse
topological order because every entry's inputs were created before it.
"""
import contextlib
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from mixtts.errors import AutodiffError, ConfigurationError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_PRECISIONS = {'f32': np.float32, 'f64': np.float64}

_state = threading.local()


def _tape_stack() -> List['Tape']:
    if not hasattr(_state, 'tapes'):
        _state.tapes = []
    return _state.tapes


# PUBLIC_INTERFACE
def get_default_dtype() -> type:
    """Return the floating point dtype used for new tensors on this thread."""
    return getattr(_state, 'dtype', np.float32)


# PUBLIC_INTERFACE
def set_default_dtype(precision: Union[str, type]) -> None:
    """Set the default dtype for new tensors on this thread.

    Args:
        precision: 'f32', 'f64' or a numpy float type
    """
    if isinstance(precision, str):
        if precision not in _PRECISIONS:
            raise ConfigurationError(
                f'Unknown precision {precision!r}. Must be one of: {sorted(_PRECISIONS)}'
            )
        precision = _PRECISIONS[precision]
    _state.dtype = np.dtype(precision).type


# PUBLIC_INTERFACE
@contextlib.contextmanager
def precision(value: Union[str, type]) -> Iterator[None]:
    """Temporarily switch the default dtype (e.g. 'f64' for gradient checks)."""
    previous = get_default_dtype()
    set_default_dtype(value)
    try:
        yield
    finally:
        _state.dtype = previous


def current_tape() -> Optional['Tape']:
    stack = _tape_stack()
    return stack[-1] if stack else None


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so that ``grad`` matches ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# PUBLIC_INTERFACE
class Tensor:
    """Dense n-dimensional array with an optional gradient.

    Attributes:
        data: numpy array holding the values
        requires_grad: whether gradients are tracked for this tensor
        grad: accumulated gradient (same shape as data) or None
        name: optional label used in reports
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 dtype: Optional[type] = None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and not (isinstance(data, np.ndarray)
                                  and np.issubdtype(data.dtype, np.floating)):
            dtype = get_default_dtype()
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional['Tape'] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False)

    # PUBLIC_INTERFACE
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Back-propagate from this tensor through the tape that recorded it."""
        if self._tape is None:
            raise AutodiffError(
                'tensor was not produced on an active tape; wrap the forward pass in `with Tape()`'
            )
        self._tape.backward(self, grad)

    def __repr__(self) -> str:
        label = f' {self.name!r}' if self.name else ''
        return f'<Tensor{label} shape={self.shape} dtype={self.dtype} requires_grad={self.requires_grad}>'

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from mixtts.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from mixtts.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from mixtts.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from mixtts.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from mixtts.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from mixtts.autodiff import ops
        return ops.mul(other, self)

    def __neg__(self):
        from mixtts.autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from mixtts.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from mixtts.autodiff import ops
        return ops.index(self, index)

    @property
    def T(self) -> 'Tensor':
        from mixtts.autodiff import ops
        return ops.transpose(self)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> 'Tensor':
        from mixtts.autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> 'Tensor':
        from mixtts.autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> 'Tensor':
        from mixtts.autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


@dataclass
class TapeEntry:
    """One recorded operation."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


# PUBLIC_INTERFACE
class Tape:
    """Ordered record of operations for reverse-mode differentiation.

    Use as a context manager around a forward pass::

        with Tape() as tape:
            loss = model_loss(...)
        tape.backward(loss)

    Tapes are thread-local; independent tapes may run on different threads.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor,
               backward: BackwardFn) -> None:
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward))
        output._tape = self

    # PUBLIC_INTERFACE
    def backward(self, root: Tensor, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(root)/d(x) into ``x.grad`` for every reachable leaf.

        Args:
            root: tensor to differentiate (usually a scalar loss)
            grad: seed gradient; defaults to ones shaped like root
        """
        if not root.requires_grad:
            raise AutodiffError('root tensor does not require a gradient')
        seed = np.ones_like(root.data) if grad is None else np.asarray(grad, dtype=root.dtype)
        grads: Dict[int, np.ndarray] = {id(root): seed}
        leaves: Dict[int, Tensor] = {}
        produced = {id(entry.output) for entry in self.entries}

        for entry in reversed(self.entries):
            out_grad = grads.pop(id(entry.output), None)
            if out_grad is None:
                continue
            entry.output.grad = out_grad
            input_grads = entry.backward(out_grad)
            for tensor, in_grad in zip(entry.inputs, input_grads):
                if in_grad is None or not tensor.requires_grad:
                    continue
                in_grad = unbroadcast(np.asarray(in_grad, dtype=tensor.dtype), tensor.shape)
                key = id(tensor)
                if key in grads:
                    # fan-out: sum contributions of every path
                    grads[key] = grads[key] + in_grad
                else:
                    grads[key] = in_grad
                if key not in produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            leaf_grad = grads.get(key)
            if leaf_grad is None:
                continue
            tensor.grad = leaf_grad.copy() if tensor.grad is None else tensor.grad + leaf_grad


def record_op(op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
              backward: BackwardFn) -> Tensor:
    """Wrap ``out_data`` in a Tensor and record it on the active tape if needed."""
    tape = current_tape()
    requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires_grad)
    if requires_grad:
        tape.record(op, inputs, out, backward)
    return out


def as_tensor(value: Union['Tensor', ArrayLike], like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(value, dtype=dtype))
