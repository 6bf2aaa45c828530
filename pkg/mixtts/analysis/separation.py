"""How cleanly Mandarin and English phonemes separate in an embedding space."""
import logging

import numpy as np
from sklearn.metrics import silhouette_score

from mixtts.analysis.embeddings import EmbeddingDump
from mixtts.errors import DataError

logger = logging.getLogger(__name__)


# PUBLIC_INTERFACE
def language_separation_score(dump: EmbeddingDump) -> float:
    """Mean silhouette coefficient of the language partition, clipped to [0, 1].

    Computed on the full-dimensional points with Euclidean distance, so it is
    unchanged by rotations and by swapping the two language labels.

    Raises:
        DataError: when only one language is present or there are too few points
    """
    codes = dump.language_codes
    present = np.unique(codes)
    if present.size < 2:
        raise DataError('language separation needs both Mandarin and English points')
    if len(dump) < 3:
        raise DataError(f'language separation needs at least 3 points, got {len(dump)}')
    score = float(silhouette_score(dump.points, codes, metric='euclidean'))
    logger.info('%s separation: silhouette %.4f over %d points', dump.source.value, score, len(dump))
    return max(0.0, min(1.0, score))
