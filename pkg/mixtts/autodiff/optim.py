"""Adam optimizer and gradient clipping."""
from typing import Dict, Iterable, Mapping, Optional

import numpy as np

from mixtts.autodiff.tensor import Tensor


def global_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return float(np.sqrt(total))


# PUBLIC_INTERFACE
def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``.

    Returns:
        float: the norm before clipping
    """
    params = list(params)
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * p.grad.dtype.type(scale)
    return norm


# PUBLIC_INTERFACE
class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8 by default).

    Only the tensors passed at construction are updated; frozen parameters are
    simply left out. Updates are lazy: an entry whose gradient is exactly zero
    keeps its value and its moment estimates for that step.
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params: Dict[str, Tensor] = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            live = g != 0
            if not live.any():
                continue
            m = self._m[name]
            v = self._v[name]
            m[live] = self.beta1 * m[live] + (1.0 - self.beta1) * g[live]
            v[live] = self.beta2 * v[live] + (1.0 - self.beta2) * g[live] * g[live]
            update = lr * (m[live] / correction1) / (np.sqrt(v[live] / correction2) + self.eps)
            p.data[live] -= update.astype(p.dtype)
