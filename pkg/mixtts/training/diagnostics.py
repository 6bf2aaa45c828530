"""Attention alignment health metrics."""
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.stats import entropy

from mixtts.network.attention import AttentionStepTrace


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class AttentionDiagnostics:
    """entropy: mean per-step entropy of alpha (nats, in [0, ln T]);
    forward_motion: fraction of step transitions whose argmax does not move back."""
    entropy: float
    forward_motion: float

    def as_dict(self) -> dict:
        return {'entropy': self.entropy, 'forward_motion': self.forward_motion}


def alignment_matrix(traces: Union[Sequence[AttentionStepTrace], np.ndarray]) -> np.ndarray:
    """Stack per-step weights into [steps, T]."""
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(traces)
    if len(traces) == 0:
        return np.zeros((0, 0))
    return np.stack([np.asarray(t.alignment if isinstance(t, AttentionStepTrace) else t).reshape(-1)
                     for t in traces])


# PUBLIC_INTERFACE
def attention_diagnostics(traces: Union[Sequence[AttentionStepTrace], np.ndarray]) -> AttentionDiagnostics:
    """Entropy and forward-motion score of an alignment; zeros for an empty trace list."""
    weights = alignment_matrix(traces)
    if weights.size == 0:
        return AttentionDiagnostics(0.0, 0.0)
    per_step = entropy(np.asarray(weights, dtype=np.float64), axis=1)
    peaks = np.argmax(weights, axis=1)
    if peaks.size < 2:
        motion = 1.0
    else:
        motion = float(np.mean(np.diff(peaks) >= 0))
    return AttentionDiagnostics(entropy=float(np.mean(per_step)), forward_motion=motion)
