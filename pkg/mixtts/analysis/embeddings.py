"""Per-phoneme vectors taken from a trained model."""
import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from mixtts.autodiff.tensor import Tensor
from mixtts.errors import DataError
from mixtts.frontend.inventory import Language, PhonemeInventory
from mixtts.frontend.manifest import UtteranceRecord
from mixtts.network.checkpoint import Checkpoint
from mixtts.network.config import ModelConfig
from mixtts.network.encoder import encode

logger = logging.getLogger(__name__)


class EmbeddingSource(str, Enum):
    PHONEME_EMBEDDING = 'PHONEME_EMBEDDING'
    ENCODER_OUTPUT = 'ENCODER_OUTPUT'


# PUBLIC_INTERFACE
@dataclass
class EmbeddingDump:
    """One point per phoneme type.

    Attributes:
        points: [n, d] matrix
        phonemes: phoneme label of each row
        languages: language of each row
        source: where the vectors came from
        missing: covered-by-inventory phonemes absent from the sample
    """
    points: np.ndarray
    phonemes: List[str]
    languages: List[Language]
    source: EmbeddingSource
    missing: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.size == 0 and self.points.ndim != 2:
            self.points = self.points.reshape(0, 0)
        if self.points.ndim != 2 or self.points.shape[0] != len(self.phonemes):
            raise DataError(f'points of shape {self.points.shape} do not match {len(self.phonemes)} labels')
        self.languages = [Language(lang) for lang in self.languages]
        self.source = EmbeddingSource(self.source)
        if len(self.phonemes) != len(self.languages):
            raise DataError(f'{len(self.phonemes)} phoneme labels but {len(self.languages)} language labels')
        if not np.all(np.isfinite(self.points)):
            raise DataError('embedding dump contains non-finite values')

    def __len__(self) -> int:
        return len(self.phonemes)

    @property
    def language_codes(self) -> np.ndarray:
        """0 for Mandarin, 1 for English."""
        return np.array([0 if lang is Language.MAN else 1 for lang in self.languages], dtype=np.int64)

    def write_csv(self, path: Union[str, Path]) -> Path:
        """CSV with header ``phoneme,language,d0..d{d-1}``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['phoneme', 'language'] + [f'd{i}' for i in range(self.points.shape[1])])
            for label, lang, row in zip(self.phonemes, self.languages, self.points):
                writer.writerow([label, lang.value] + [repr(float(v)) for v in row])
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path], source: EmbeddingSource) -> 'EmbeddingDump':
        with Path(path).open('r', encoding='utf-8', newline='') as handle:
            rows = list(csv.reader(handle))
        if not rows or rows[0][:2] != ['phoneme', 'language']:
            raise DataError(f'{path}: not an embedding dump')
        body = rows[1:]
        points = np.array([[float(v) for v in row[2:]] for row in body]).reshape(len(body), len(rows[0]) - 2)
        return cls(points, [row[0] for row in body], [row[1] for row in body], source)


def _covered(inventory: PhonemeInventory) -> List[int]:
    return [s.id for s in inventory.symbols if s.language is not Language.SPECIAL]


def _encoder_means(records: Sequence[UtteranceRecord], params: Mapping[str, Tensor],
                   config: ModelConfig) -> Dict[int, np.ndarray]:
    sums: Dict[int, np.ndarray] = OrderedDict()
    counts: Dict[int, int] = {}
    for record in records:
        encoded = encode(record.phoneme_ids, record.speaker_id, params, config)
        outputs = encoded.encoder_outputs.data.astype(np.float64)
        for position, phoneme_id in enumerate(record.phoneme_ids):
            if phoneme_id in sums:
                sums[phoneme_id] = sums[phoneme_id] + outputs[position]
                counts[phoneme_id] += 1
            else:
                sums[phoneme_id] = outputs[position].copy()
                counts[phoneme_id] = 1
    return {i: sums[i] / counts[i] for i in sums}


# PUBLIC_INTERFACE
def dump_embeddings(checkpoint: Checkpoint, records: Sequence[UtteranceRecord], source: EmbeddingSource,
                    inventory: Optional[PhonemeInventory] = None) -> EmbeddingDump:
    """Collect one vector per non-special phoneme type seen in ``records``.

    PHONEME_EMBEDDING takes the table row; ENCODER_OUTPUT averages the
    encoder output over every occurrence in the sample. Types absent from
    the sample are left out and listed in ``missing`` (and logged).
    Rows follow inventory id order.
    """
    source = EmbeddingSource(source)
    if inventory is None:
        payload = checkpoint.metadata.get('inventory')
        if not payload:
            raise DataError('checkpoint carries no phoneme inventory; pass one explicitly')
        inventory = PhonemeInventory.from_dict(payload)
    seen = {i for r in records for i in r.phoneme_ids}
    if source is EmbeddingSource.PHONEME_EMBEDDING:
        table = np.asarray(checkpoint.params['phoneme_embedding.table'], dtype=np.float64)
        vectors = {i: table[i] for i in seen}
    else:
        vectors = _encoder_means(records, checkpoint.tensors(), checkpoint.config)

    rows, labels, languages, missing = [], [], [], []
    for phoneme_id in _covered(inventory):
        symbol = inventory[phoneme_id]
        if phoneme_id not in vectors:
            missing.append(symbol.label)
            continue
        rows.append(vectors[phoneme_id])
        labels.append(symbol.label)
        languages.append(symbol.language)
    if missing:
        logger.warning('%d phoneme types absent from the sample: %s', len(missing),
                       ', '.join(missing[:10]) + (' ...' if len(missing) > 10 else ''))
    width = checkpoint.config.embedding_dim if source is EmbeddingSource.PHONEME_EMBEDDING \
        else checkpoint.config.encoder_dim
    points = np.vstack(rows) if rows else np.zeros((0, width))
    logger.info('%s dump: %d phoneme types', source.value, len(labels))
    return EmbeddingDump(points, labels, languages, source, missing)
