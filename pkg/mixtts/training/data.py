"""Training corpus assembly from manifests and cached features."""
import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mixtts.dsp.features import FeatureNormalizer, FeaturePair, read_features
from mixtts.errors import DataError
from mixtts.frontend.inventory import PhonemeInventory
from mixtts.frontend.manifest import UtteranceRecord, load_manifest

logger = logging.getLogger(__name__)

FEATURE_SUFFIX = '.ptfp'


def feature_path(features_dir: Union[str, Path], utterance_id: str) -> Path:
    return Path(features_dir) / f'{utterance_id}{FEATURE_SUFFIX}'


def _fetch(features_dir: Path, record: UtteranceRecord) -> FeaturePair:
    path = feature_path(features_dir, record.utterance_id)
    if not path.exists():
        raise DataError(f'{record.utterance_id}: no cached features at {path}; run `mixtts features` first')
    return read_features(path)


# PUBLIC_INTERFACE
def load_corpus_by_manifest(manifests: Sequence[Union[str, Path]], inventory: PhonemeInventory,
                            features_dir: Union[str, Path], normalizer: Optional[FeatureNormalizer] = None,
                            deterministic: bool = True, workers: int = 4, n_speakers: Optional[int] = None,
                            ) -> Tuple['OrderedDict[str, List[UtteranceRecord]]', FeatureNormalizer]:
    """Records with normalised features attached, keyed by the manifest they came from.

    Every cached feature file is read once. Features are fetched in parallel
    unless ``deterministic``; record order always follows manifest order. A
    normaliser is fitted on the raw features of all manifests when none is
    given.

    Returns:
        Tuple of (records per manifest, normaliser)
    """
    grouped: 'OrderedDict[str, List[UtteranceRecord]]' = OrderedDict()
    for manifest in manifests:
        grouped[str(manifest)] = load_manifest(manifest, inventory, check_audio=False, n_speakers=n_speakers)
    records = [r for rows in grouped.values() for r in rows]
    if not records:
        return grouped, normalizer or FeatureNormalizer.default()
    features_dir = Path(features_dir)
    if deterministic or workers <= 1:
        pairs = [_fetch(features_dir, r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(lambda r: _fetch(features_dir, r), records))
    normalizer = normalizer or FeatureNormalizer.fit(pairs)
    logger.info('corpus: %d utterances, %d frames', len(records), sum(p.n_frames for p in pairs))

    attached = iter(replace(r, features=normalizer.normalize(p)) for r, p in zip(records, pairs))
    for name, rows in grouped.items():
        grouped[name] = [next(attached) for _ in rows]
    return grouped, normalizer


# PUBLIC_INTERFACE
def load_corpus(manifests: Sequence[Union[str, Path]], inventory: PhonemeInventory,
                features_dir: Union[str, Path], normalizer: Optional[FeatureNormalizer] = None,
                deterministic: bool = True, workers: int = 4,
                n_speakers: Optional[int] = None) -> Tuple[List[UtteranceRecord], FeatureNormalizer]:
    """``load_corpus_by_manifest`` flattened in manifest order."""
    grouped, normalizer = load_corpus_by_manifest(manifests, inventory, features_dir, normalizer=normalizer,
                                                  deterministic=deterministic, workers=workers,
                                                  n_speakers=n_speakers)
    return [r for rows in grouped.values() for r in rows], normalizer


def sample_batch(records: Sequence[UtteranceRecord], batch_size: int,
                 rng: np.random.Generator) -> List[UtteranceRecord]:
    """Seeded batch without replacement (the whole corpus when it is smaller than a batch)."""
    if len(records) <= batch_size:
        order = rng.permutation(len(records))
    else:
        order = rng.choice(len(records), size=batch_size, replace=False)
    return [records[i] for i in order]
