"""Language-tagged phoneme inventory and phoneme-string parsing."""
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from mixtts.errors import ConfigurationError, DataError, UnknownTokenError
from mixtts.frontend.phone_tables import english_phones, mandarin_phones

logger = logging.getLogger(__name__)

INVENTORY_VERSION = 1

PAD = '<pad>'
EOS = '<eos>'
SIL = '<sil>'
WORD_BOUNDARY = '<wb>'
SPECIAL_LABELS = (PAD, EOS, SIL, WORD_BOUNDARY)

_STRESS = re.compile(r'^([A-Z]+)[012]$')


class Language(str, Enum):
    """Phoneme language tags."""
    MAN = 'MAN'
    ENG = 'ENG'
    SPECIAL = 'SPECIAL'


SCOPE_TAGS = {'|MAN|': Language.MAN, '|ENG|': Language.ENG}


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class PhonemeSymbol:
    """One row of the phoneme embedding table."""
    label: str
    language: Language
    id: int


# PUBLIC_INTERFACE
class PhonemeInventory:
    """Bijection between phoneme ids [0, V) and (label, language) pairs.

    Ids are assigned in order: SPECIAL block, sorted Mandarin, sorted English.
    """

    def __init__(self, symbols: Sequence[Tuple[str, Language]]):
        self.symbols: List[PhonemeSymbol] = []
        self._ids: Dict[Tuple[str, Language], int] = {}
        for label, language in symbols:
            key = (label, Language(language))
            if key in self._ids:
                raise ConfigurationError(f'duplicate phoneme {label!r} in {key[1].value}')
            self._ids[key] = len(self.symbols)
            self.symbols.append(PhonemeSymbol(label, key[1], len(self.symbols)))
        missing = [s for s in SPECIAL_LABELS if (s, Language.SPECIAL) not in self._ids]
        if missing:
            raise ConfigurationError(f'inventory lacks special symbols: {missing}')

    def __len__(self) -> int:
        return len(self.symbols)

    def __getitem__(self, phoneme_id: int) -> PhonemeSymbol:
        return self.symbols[phoneme_id]

    def __eq__(self, other) -> bool:
        return isinstance(other, PhonemeInventory) and self.symbols == other.symbols

    @property
    def pad_id(self) -> int:
        return self._ids[(PAD, Language.SPECIAL)]

    @property
    def eos_id(self) -> int:
        return self._ids[(EOS, Language.SPECIAL)]

    def lookup(self, label: str, language: Language) -> Optional[int]:
        return self._ids.get((label, Language(language)))

    def ids_for(self, language: Language) -> List[int]:
        return [s.id for s in self.symbols if s.language is Language(language)]

    def to_dict(self) -> dict:
        return {
            'version': INVENTORY_VERSION,
            'symbols': [{'label': s.label, 'language': s.language.value} for s in self.symbols],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    @classmethod
    def from_dict(cls, payload: dict) -> 'PhonemeInventory':
        if payload.get('version') != INVENTORY_VERSION:
            raise DataError(f'unsupported inventory version {payload.get("version")!r}')
        try:
            return cls([(row['label'], Language(row['language'])) for row in payload['symbols']])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise DataError(f'invalid inventory payload: {exc}') from exc

    @classmethod
    def from_json(cls, text: str) -> 'PhonemeInventory':
        return cls.from_dict(json.loads(text))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PhonemeInventory':
        return cls.from_json(Path(path).read_text())


# PUBLIC_INTERFACE
def build_inventory(man_phones: Sequence[str], eng_phones: Sequence[str]) -> PhonemeInventory:
    """Deterministic inventory: SPECIAL block, then sorted MAN, then sorted ENG.

    Raises:
        ConfigurationError: for duplicate labels within a language
    """
    for language, phones in ((Language.MAN, man_phones), (Language.ENG, eng_phones)):
        seen = set()
        duplicates = sorted({p for p in phones if p in seen or seen.add(p)})
        if duplicates:
            raise ConfigurationError(f'duplicate {language.value} phonemes: {duplicates}')
    symbols = [(label, Language.SPECIAL) for label in SPECIAL_LABELS]
    symbols += [(label, Language.MAN) for label in sorted(man_phones)]
    symbols += [(label, Language.ENG) for label in sorted(eng_phones)]
    return PhonemeInventory(symbols)


# PUBLIC_INTERFACE
def default_inventory() -> PhonemeInventory:
    """Pinyin initials + toned finals and stress-collapsed ARPAbet."""
    return build_inventory(mandarin_phones(), english_phones())


def _normalise_token(token: str, language: Language) -> str:
    if language is Language.ENG:
        match = _STRESS.match(token)
        if match:
            return match.group(1)
    return token


# PUBLIC_INTERFACE
def parse_phoneme_string(text: str, inventory: PhonemeInventory,
                         default_language: Language = Language.MAN) -> List[int]:
    """Map a whitespace-separated phoneme string to ids, appending EOS.

    ``|MAN|`` and ``|ENG|`` switch the active language scope; special tokens
    (``<sil>``, ``<wb>``) are valid in any scope; English stress digits are
    dropped.

    Raises:
        DataError: for a string without phonemes
        UnknownTokenError: naming the token, its position and the active language
    """
    scope = Language(default_language)
    ids: List[int] = []
    for position, token in enumerate(text.split()):
        if token in SCOPE_TAGS:
            scope = SCOPE_TAGS[token]
            continue
        special = inventory.lookup(token, Language.SPECIAL)
        if special is not None and token not in (PAD, EOS):
            ids.append(special)
            continue
        phoneme_id = inventory.lookup(_normalise_token(token, scope), scope)
        if phoneme_id is None:
            raise UnknownTokenError(token, position, scope.value)
        ids.append(phoneme_id)
    if not ids:
        raise DataError(f'phoneme string {text!r} contains no phonemes')
    ids.append(inventory.eos_id)
    return ids


# PUBLIC_INTERFACE
def render_phonemes(ids: Sequence[int], inventory: PhonemeInventory) -> str:
    """Canonical string for ``ids``: scope tags only where the language changes."""
    tokens: List[str] = []
    scope: Optional[Language] = None
    for phoneme_id in ids:
        symbol = inventory[phoneme_id]
        if symbol.language is Language.SPECIAL:
            if symbol.label in (PAD, EOS):
                continue
            tokens.append(symbol.label)
            continue
        if symbol.language is not scope:
            scope = symbol.language
            tokens.append(f'|{scope.value}|')
        tokens.append(symbol.label)
    return ' '.join(tokens)


def languages_present(ids: Sequence[int], inventory: PhonemeInventory) -> set:
    return {inventory[i].language for i in ids} - {Language.SPECIAL}
