"""JSON-lines corpus manifests and the records they describe."""
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from mixtts.dsp.features import FeaturePair
from mixtts.errors import DataError, ManifestError
from mixtts.frontend.inventory import (
    Language,
    PhonemeInventory,
    languages_present,
    parse_phoneme_string,
    render_phonemes,
)

logger = logging.getLogger(__name__)

_REQUIRED = {'id': str, 'speaker': int, 'phonemes': str, 'audio': str}


class UtteranceLanguage(str, Enum):
    """Language class of a whole utterance."""
    MAN = 'MAN'
    ENG = 'ENG'
    MIX = 'MIX'


# PUBLIC_INTERFACE
def classify_language(phoneme_ids: Sequence[int], inventory: PhonemeInventory) -> UtteranceLanguage:
    """MIX iff the ids contain both Mandarin and English symbols.

    Raises:
        DataError: when the ids hold only special symbols
    """
    present = languages_present(phoneme_ids, inventory)
    if present == {Language.MAN, Language.ENG}:
        return UtteranceLanguage.MIX
    if present == {Language.MAN}:
        return UtteranceLanguage.MAN
    if present == {Language.ENG}:
        return UtteranceLanguage.ENG
    raise DataError('utterance contains no Mandarin or English phonemes')


# PUBLIC_INTERFACE
@dataclass
class UtteranceRecord:
    """One training or synthesis example."""
    utterance_id: str
    speaker_id: int
    language: UtteranceLanguage
    phoneme_ids: Tuple[int, ...]
    audio_path: Optional[Path] = None
    features: Optional[FeaturePair] = None
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.phoneme_ids = tuple(int(i) for i in self.phoneme_ids)
        self.language = UtteranceLanguage(self.language)
        if not self.phoneme_ids:
            raise DataError(f'{self.utterance_id}: empty phoneme sequence')
        if self.speaker_id < 0:
            raise DataError(f'{self.utterance_id}: negative speaker id {self.speaker_id}')

    def validate(self, inventory: PhonemeInventory, n_speakers: Optional[int] = None) -> 'UtteranceRecord':
        """Check ids, trailing EOS, speaker range and the language label against ``inventory``."""
        bad = [i for i in self.phoneme_ids if not 0 <= i < len(inventory)]
        if bad:
            raise DataError(f'{self.utterance_id}: phoneme ids {bad} outside [0, {len(inventory)})')
        if self.phoneme_ids[-1] != inventory.eos_id:
            raise DataError(f'{self.utterance_id}: phoneme ids must end with EOS')
        if n_speakers is not None and self.speaker_id >= n_speakers:
            raise DataError(f'{self.utterance_id}: speaker {self.speaker_id} outside table of {n_speakers}')
        derived = classify_language(self.phoneme_ids, inventory)
        if derived is not self.language:
            raise DataError(f'{self.utterance_id}: labelled {self.language.value} but phonemes are {derived.value}')
        return self

    def to_manifest_row(self, inventory: PhonemeInventory, base_dir: Optional[Path] = None) -> dict:
        audio = self.audio_path
        if audio is not None and base_dir is not None:
            audio = Path(os.path.relpath(Path(audio).resolve(), base_dir))
        row = {
            'id': self.utterance_id,
            'speaker': self.speaker_id,
            'phonemes': render_phonemes(self.phoneme_ids, inventory),
            'audio': str(audio) if audio is not None else '',
            'language': self.language.value,
        }
        if self.provenance:
            row['provenance'] = self.provenance
        return row


def _parse_row(raw: str, line: int, inventory: PhonemeInventory, base_dir: Path) -> UtteranceRecord:
    try:
        row = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestError(f'invalid JSON: {exc.msg}', line) from exc
    if not isinstance(row, dict):
        raise ManifestError('record must be a JSON object', line)
    for key, kind in _REQUIRED.items():
        if key not in row:
            raise ManifestError(f'missing field {key!r}', line)
        value = row[key]
        if not isinstance(value, kind) or isinstance(value, bool):
            raise ManifestError(f'field {key!r} must be {kind.__name__}, got {type(value).__name__}', line)
    if row['speaker'] < 0:
        raise ManifestError(f'speaker must be >= 0, got {row["speaker"]}', line)
    try:
        ids = parse_phoneme_string(row['phonemes'], inventory)
        derived = classify_language(ids, inventory)
    except DataError as exc:
        raise ManifestError(str(exc), line) from exc
    declared = row.get('language')
    if declared is not None:
        if declared not in UtteranceLanguage.__members__:
            raise ManifestError(f'language must be MAN, ENG or MIX, got {declared!r}', line)
        if declared != derived.value:
            raise ManifestError(f'language {declared} disagrees with phonemes ({derived.value})', line)
    audio = base_dir / row['audio'] if row['audio'] else None
    return UtteranceRecord(
        utterance_id=row['id'],
        speaker_id=row['speaker'],
        language=derived,
        phoneme_ids=ids,
        audio_path=audio,
        provenance=row.get('provenance') or {},
    )


# PUBLIC_INTERFACE
def load_manifest(path: Union[str, Path], inventory: PhonemeInventory, check_audio: bool = True,
                  n_speakers: Optional[int] = None) -> List[UtteranceRecord]:
    """Read and validate a JSON-lines manifest.

    Audio paths are resolved relative to the manifest's directory. Blank lines
    are skipped. Records keep file order.

    Args:
        path: manifest file
        inventory: phoneme inventory used to parse each ``phonemes`` field
        check_audio: require every referenced audio file to exist
        n_speakers: size of the speaker table, when known

    Returns:
        List[UtteranceRecord]: one record per non-blank line

    Raises:
        ManifestError: for a schema violation (with its line number), duplicate ids,
            or dangling audio references (all listed)
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f'manifest {path} does not exist')
    base_dir = path.resolve().parent
    records: List[UtteranceRecord] = []
    seen: Dict[str, int] = {}
    with path.open('r', encoding='utf-8') as handle:
        for line, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            record = _parse_row(raw, line, inventory, base_dir)
            if record.utterance_id in seen:
                raise ManifestError(
                    f'duplicate id {record.utterance_id!r} (first seen on line {seen[record.utterance_id]})', line
                )
            if n_speakers is not None and record.speaker_id >= n_speakers:
                raise ManifestError(f'speaker {record.speaker_id} outside table of {n_speakers}', line)
            seen[record.utterance_id] = line
            records.append(record)

    if not records:
        logger.warning('manifest %s is empty', path)
        return records
    if check_audio:
        missing = [str(r.audio_path) for r in records if r.audio_path is None or not r.audio_path.exists()]
        if missing:
            raise ManifestError(f'{len(missing)} audio file(s) missing: ' + ', '.join(missing))
    stats = manifest_stats(records)
    logger.info('loaded %d utterances from %s: speakers=%s languages=%s',
                stats['utterances'], path, stats['speakers'], stats['languages'])
    return records


# PUBLIC_INTERFACE
def manifest_stats(records: Iterable[UtteranceRecord]) -> dict:
    """Per-speaker counts and language mix."""
    records = list(records)
    speakers = Counter(r.speaker_id for r in records)
    languages = Counter(r.language.value for r in records)
    return {
        'utterances': len(records),
        'speakers': dict(sorted(speakers.items())),
        'languages': {lang.value: languages.get(lang.value, 0) for lang in UtteranceLanguage},
    }


# PUBLIC_INTERFACE
def write_manifest(path: Union[str, Path], records: Iterable[UtteranceRecord],
                   inventory: PhonemeInventory) -> Path:
    """Write records as canonical JSON lines; audio paths relative to the manifest directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r.to_manifest_row(inventory, path.parent.resolve()), sort_keys=True)
             for r in records]
    path.write_text(''.join(f'{line}\n' for line in lines), encoding='utf-8')
    return path
