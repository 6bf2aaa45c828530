"""Central finite-difference verification of analytic gradients."""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional

import numpy as np

from mixtts.autodiff import ops
from mixtts.autodiff.tensor import Tape, Tensor

logger = logging.getLogger(__name__)

ERROR_FLOOR = 1e-3


@dataclass
class GradCheckRow:
    name: str
    checked: int
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    """Per-tensor comparison of analytic and numeric gradients."""
    label: str
    tolerance: float
    rows: List[GradCheckRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def max_rel_error(self) -> float:
        return max((row.max_rel_error for row in self.rows), default=0.0)

    def to_table(self) -> str:
        width = max([len(r.name) for r in self.rows] + [len('tensor')])
        lines = [f'{self.label} (tolerance {self.tolerance:g})',
                 f'{"tensor":<{width}}  {"checked":>7}  {"max rel err":>12}  status']
        for row in self.rows:
            status = 'ok' if row.passed else 'FAIL'
            lines.append(f'{row.name:<{width}}  {row.checked:>7d}  {row.max_rel_error:>12.3e}  {status}')
        return '\n'.join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ERROR_FLOOR) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _scalar(value: Tensor) -> float:
    return float(np.sum(value.data, dtype=np.float64))


# PUBLIC_INTERFACE
def check_gradients(fn: Callable[[], Tensor], inputs: Mapping[str, Tensor],
                    eps: float = 1e-5, tolerance: float = 1e-4,
                    max_elements: Optional[int] = None, seed: int = 0,
                    label: str = 'gradient check') -> GradCheckReport:
    """Compare tape gradients of ``sum(fn())`` against central differences.

    Run under ``precision('f64')``; finite differences are meaningless at 32-bit.

    Args:
        fn: closure recomputing the output from the current values of ``inputs``
        inputs: tensors to differentiate with respect to (modified in place, then restored)
        eps: finite-difference step
        tolerance: maximum allowed relative error
        max_elements: check at most this many seeded-random elements per tensor
        seed: seed for element sampling
        label: title used in the report

    Returns:
        GradCheckReport: one row per input tensor
    """
    for tensor in inputs.values():
        tensor.requires_grad = True
        tensor.zero_grad()
    with Tape() as tape:
        out = fn()
        total = ops.sum(out) if out.data.size != 1 else out
    tape.backward(total)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(label=label, tolerance=tolerance)
    for name, tensor in inputs.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat_count = tensor.data.size
        positions = np.arange(flat_count)
        if max_elements is not None and flat_count > max_elements:
            positions = np.sort(rng.choice(flat_count, size=max_elements, replace=False))
        worst = 0.0
        for flat in positions:
            idx = np.unravel_index(flat, tensor.shape)
            original = tensor.data[idx].copy()
            tensor.data[idx] = original + eps
            plus = _scalar(fn())
            tensor.data[idx] = original - eps
            minus = _scalar(fn())
            tensor.data[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            err = float(relative_error(np.asarray(analytic[idx]), np.asarray(numeric)))
            worst = max(worst, err)
        report.rows.append(GradCheckRow(name, int(len(positions)), worst, worst < tolerance))
        logger.debug('gradcheck %s: %d elements, max rel err %.3e', name, len(positions), worst)
    return report
