"""Exact t-SNE for small point sets (a few hundred phoneme types)."""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from mixtts.analysis.embeddings import EmbeddingDump
from mixtts.errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

MACHINE_EPSILON = np.finfo(np.float64).eps
ENTROPY_TOLERANCE = 1e-6
MAX_SEARCH_STEPS = 200
KL_LOG_EVERY = 50


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class TsneConfig:
    """Optimiser settings; the output is always two-dimensional."""
    perplexity: float = 15.0
    n_iters: int = 1000
    learning_rate: float = 100.0
    seed: int = 1234
    exaggeration: float = 4.0
    exaggeration_iters: int = 100
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    min_gain: float = 0.01

    n_components = 2

    def __post_init__(self):
        if self.perplexity <= 1.0:
            raise ConfigurationError(f'perplexity must exceed 1, got {self.perplexity}')
        if self.n_iters < 250:
            raise ConfigurationError(f'n_iters must be >= 250, got {self.n_iters}')
        if self.learning_rate <= 0:
            raise ConfigurationError('learning_rate must be positive')
        if not 0 <= self.exaggeration_iters < self.n_iters:
            raise ConfigurationError('exaggeration_iters must lie in [0, n_iters)')

    def check_points(self, n_points: int) -> None:
        if self.perplexity >= n_points / 3.0:
            raise ConfigurationError(
                f'perplexity {self.perplexity} too large for {n_points} points (must be < {n_points / 3.0:.2f})'
            )


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_history: List[Tuple[int, float]] = field(default_factory=list)
    betas: np.ndarray = None


def _row_distribution(distances: np.ndarray, beta: float) -> Tuple[np.ndarray, float]:
    """Gaussian conditional over one row (self excluded) and its entropy in nats."""
    shifted = distances - distances.min()
    weights = np.exp(-beta * shifted)
    total = weights.sum()
    probs = weights / total
    return probs, float(np.log(total) + beta * np.dot(probs, shifted))


# PUBLIC_INTERFACE
def conditional_affinities(sq_distances: np.ndarray, perplexity: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row Gaussian conditionals calibrated by binary search on the precision.

    Each row's entropy matches ``log(perplexity)`` to within ``ENTROPY_TOLERANCE``
    unless the row's distances cannot reach it (then the closest precision is kept).

    Returns:
        Tuple of (conditional matrix [n, n] with zero diagonal, precisions [n])
    """
    n = sq_distances.shape[0]
    target = np.log(perplexity)
    conditional = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        others = np.delete(sq_distances[i], i)
        beta, low, high = 1.0, 0.0, np.inf
        probs, entropy = _row_distribution(others, beta)
        for _ in range(MAX_SEARCH_STEPS):
            diff = entropy - target
            if abs(diff) <= ENTROPY_TOLERANCE:
                break
            if diff > 0:
                low = beta
                beta = beta * 2.0 if high == np.inf else (beta + high) / 2.0
            else:
                high = beta
                beta = (beta + low) / 2.0
            probs, entropy = _row_distribution(others, beta)
        conditional[i, np.arange(n) != i] = probs
        betas[i] = beta
    return conditional, betas


def joint_affinities(conditional: np.ndarray) -> np.ndarray:
    n = conditional.shape[0]
    joint = (conditional + conditional.T) / (2.0 * n)
    return np.maximum(joint, MACHINE_EPSILON)


def _student_t(embedding: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    kernel = 1.0 / (1.0 + squareform(pdist(embedding, 'sqeuclidean')))
    np.fill_diagonal(kernel, 0.0)
    q = np.maximum(kernel / kernel.sum(), MACHINE_EPSILON)
    return q, kernel


def kl_divergence(joint: np.ndarray, embedding: np.ndarray) -> float:
    q, _ = _student_t(embedding)
    mask = ~np.eye(joint.shape[0], dtype=bool)
    return float(np.sum(joint[mask] * np.log(joint[mask] / q[mask])))


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Row permutation sorting points lexicographically by coordinate."""
    return np.lexsort(points.T[::-1])


# PUBLIC_INTERFACE
def tsne_with_history(points: Union[np.ndarray, EmbeddingDump], cfg: TsneConfig = TsneConfig()) -> TsneResult:
    """Embed ``points`` in 2-D and keep the KL objective every 50 iterations.

    Rows are optimised in canonical (lexicographic) order, so permuting the
    input permutes the output identically.

    Raises:
        ConfigurationError: when the perplexity is too large for the point count
        DataError: for fewer than two points or all-identical points
    """
    data = points.points if isinstance(points, EmbeddingDump) else np.asarray(points, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError(f't-SNE needs at least two points, got shape {data.shape}')
    n = data.shape[0]
    cfg.check_points(n)
    order = canonical_order(data)
    ordered = data[order]
    sq = squareform(pdist(ordered, 'sqeuclidean'))
    if not np.any(sq > 0):
        raise DataError('all points are identical; t-SNE is undefined')

    conditional, betas = conditional_affinities(sq, cfg.perplexity)
    joint = joint_affinities(conditional)

    rng = np.random.default_rng(cfg.seed)
    y = rng.standard_normal((n, cfg.n_components)) * 1e-4
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    history: List[Tuple[int, float]] = []
    for it in range(cfg.n_iters):
        exaggerating = it < cfg.exaggeration_iters
        p = joint * cfg.exaggeration if exaggerating else joint
        q, kernel = _student_t(y)
        pq = (p - q) * kernel
        grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)

        momentum = cfg.initial_momentum if exaggerating else cfg.final_momentum
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, cfg.min_gain, None, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

        if (it + 1) % KL_LOG_EVERY == 0:
            kl = kl_divergence(joint, y)
            history.append((it + 1, kl))
            logger.debug('t-SNE iteration %d: KL %.6f', it + 1, kl)

    logger.info('t-SNE on %d points: final KL %.5f', n, history[-1][1] if history else float('nan'))
    embedding = np.empty_like(y)
    embedding[order] = y
    unordered_betas = np.empty_like(betas)
    unordered_betas[order] = betas
    return TsneResult(embedding=embedding, kl_history=history, betas=unordered_betas)


# PUBLIC_INTERFACE
def tsne(points: Union[np.ndarray, EmbeddingDump], cfg: TsneConfig = TsneConfig()) -> np.ndarray:
    """2-D embedding [n, 2] of ``points`` (see ``tsne_with_history``)."""
    return tsne_with_history(points, cfg).embedding
