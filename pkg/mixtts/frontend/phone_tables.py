"""Shipped phone sets.

Mandarin: pinyin initials (toneless) and finals carrying tones 1-5 (5 is the
neutral tone). English: the 39 ARPAbet phonemes with lexical stress collapsed.
"""

MANDARIN_INITIALS = (
    'b', 'p', 'm', 'f', 'd', 't', 'n', 'l', 'g', 'k', 'h',
    'j', 'q', 'x', 'zh', 'ch', 'sh', 'r', 'z', 'c', 's',
)

MANDARIN_FINALS = (
    'a', 'ai', 'an', 'ang', 'ao', 'e', 'ei', 'en', 'eng', 'er',
    'i', 'ia', 'ian', 'iang', 'iao', 'ie', 'in', 'ing', 'iong', 'iu',
    'o', 'ong', 'ou', 'u', 'ua', 'uai', 'uan', 'uang', 'ui', 'un',
    'uo', 'v', 'van', 've', 'vn',
)

TONES = (1, 2, 3, 4, 5)

ARPABET = (
    'AA', 'AE', 'AH', 'AO', 'AW', 'AY', 'B', 'CH', 'D', 'DH',
    'EH', 'ER', 'EY', 'F', 'G', 'HH', 'IH', 'IY', 'JH', 'K',
    'L', 'M', 'N', 'NG', 'OW', 'OY', 'P', 'R', 'S', 'SH',
    'T', 'TH', 'UH', 'UW', 'V', 'W', 'Y', 'Z', 'ZH',
)


def mandarin_phones() -> list:
    """Initials plus every final with each tone digit appended."""
    return list(MANDARIN_INITIALS) + [f'{final}{tone}' for final in MANDARIN_FINALS for tone in TONES]


def english_phones() -> list:
    return list(ARPABET)


def is_mandarin_final(label: str) -> bool:
    return len(label) > 1 and label[-1].isdigit() and label[:-1] in MANDARIN_FINALS
