"""CORPUS-MAN / CORPUS-ENG / CORPUS-MIX target-speaker subsets."""
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from mixtts.errors import ConfigurationError, DataError
from mixtts.frontend.inventory import PhonemeInventory
from mixtts.frontend.manifest import UtteranceLanguage, UtteranceRecord, write_manifest

logger = logging.getLogger(__name__)


def corpus_name(target_set: UtteranceLanguage) -> str:
    return f'CORPUS-{UtteranceLanguage(target_set).value}'


# PUBLIC_INTERFACE
def select_corpus(records: Sequence[UtteranceRecord], target_set: UtteranceLanguage, size: int,
                  target_speaker: int, seed: int) -> List[UtteranceRecord]:
    """Seeded subset of the target speaker's utterances of one language class.

    Candidates are ordered by utterance id before sampling, so the choice does
    not depend on manifest order. The subset keeps that order.

    Raises:
        ConfigurationError: for a negative size
        DataError: when fewer than ``size`` candidates exist (states the available count)
    """
    target_set = UtteranceLanguage(target_set)
    if size < 0:
        raise ConfigurationError(f'corpus size must be >= 0, got {size}')
    candidates = sorted((r for r in records if r.speaker_id == target_speaker and r.language is target_set),
                        key=lambda r: r.utterance_id)
    if len(candidates) < size:
        raise DataError(
            f'{corpus_name(target_set)}: requested {size} utterances of speaker {target_speaker}, '
            f'only {len(candidates)} available'
        )
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(candidates), size=size, replace=False)) if size else []
    return [candidates[i] for i in chosen]


# PUBLIC_INTERFACE
def build_corpus_regime(target_set: UtteranceLanguage, size: int, records: Sequence[UtteranceRecord],
                        target_speaker: int, out_path: Union[str, Path], inventory: PhonemeInventory,
                        seed: int = 1234, source: str = '') -> Path:
    """Write the target-speaker manifest for one corpus regime.

    Every row carries a provenance tag; a ``<manifest>.provenance.json`` sidecar
    records the selection parameters. ``size=0`` writes an empty manifest.

    Returns:
        Path: the manifest written
    """
    chosen = select_corpus(records, target_set, size, target_speaker, seed)
    provenance = {'corpus': corpus_name(target_set), 'seed': seed, 'size': size,
                  'target_speaker': target_speaker, 'source': source}
    tagged = [replace(r, provenance=dict(provenance)) for r in chosen]
    out_path = write_manifest(out_path, tagged, inventory)
    sidecar = out_path.with_name(out_path.name + '.provenance.json')
    sidecar.write_text(json.dumps({**provenance, 'utterances': [r.utterance_id for r in chosen]},
                                  indent=2, sort_keys=True) + '\n')
    logger.info('%s: %d utterances of speaker %d -> %s', corpus_name(target_set), size, target_speaker, out_path)
    return out_path
