"""Synthetic two-language corpus.

Stands in for licensed recordings. Mandarin phonemes render as harmonic
segments whose pitch contour follows the tone digit; English phonemes use a
brighter harmonic family mixed with band-limited noise. Each phoneme label
gets its own fixed spectral envelope, and each speaker its own pitch.
"""
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.signal import butter, sosfilt

from mixtts.dsp.audio import AudioClip, wav_write
from mixtts.errors import ConfigurationError
from mixtts.frontend.inventory import Language, PhonemeInventory, WORD_BOUNDARY, parse_phoneme_string
from mixtts.frontend.manifest import UtteranceLanguage, UtteranceRecord, classify_language, write_manifest
from mixtts.frontend.phone_tables import ARPABET, MANDARIN_FINALS, MANDARIN_INITIALS, TONES

logger = logging.getLogger(__name__)

# relative pitch at the start, middle and end of each tone
TONE_CONTOURS = {
    1: (1.25, 1.25, 1.25),
    2: (0.95, 1.10, 1.35),
    3: (1.00, 0.80, 1.10),
    4: (1.35, 1.05, 0.80),
    5: (1.00, 1.00, 0.95),
}

INITIAL_MS = 60.0
FINAL_MS = 160.0
ENGLISH_MS = 95.0
LEAD_SILENCE_MS = 120.0
TRAIL_SILENCE_MS = 320.0
PEAK = 0.5


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Size and shape of a generated corpus.

    Attributes:
        n_speakers: speakers 0..n-1
        utterances_per_language: MAN and ENG utterances per speaker
        target_speaker: speaker that also records MIX utterances
        seed: generator seed
        sample_rate: output rate
    """
    n_speakers: int = 3
    utterances_per_language: int = 4
    target_speaker: int = 0
    seed: int = 1234
    sample_rate: int = 24000

    def __post_init__(self):
        if self.n_speakers < 1 or self.utterances_per_language < 0:
            raise ConfigurationError('need at least one speaker and a non-negative utterance count')
        if not 0 <= self.target_speaker < self.n_speakers:
            raise ConfigurationError(f'target speaker {self.target_speaker} outside [0, {self.n_speakers - 1}]')


def speaker_pitch(speaker_id: int, seed: int) -> float:
    rng = np.random.default_rng([seed, 7919, speaker_id])
    return float(100.0 + 35.0 * speaker_id + rng.uniform(-8.0, 8.0))


def _envelope(label: str, language: Language) -> Tuple[np.ndarray, np.ndarray]:
    """Formant centres (Hz) and bandwidths fixed by the label."""
    rng = np.random.default_rng(zlib.crc32(f'{language.value}:{label}'.encode('utf-8')))
    if language is Language.MAN:
        centres = np.sort(rng.uniform([300, 900, 2000], [900, 2000, 3200]))
    else:
        centres = np.sort(rng.uniform([500, 1500, 3000], [1200, 3000, 5500]))
    return centres, rng.uniform(80.0, 220.0, size=3)


def _harmonics(f0: np.ndarray, centres: np.ndarray, widths: np.ndarray, sample_rate: int,
               n_harmonics: int, tilt: float) -> np.ndarray:
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    mean_f0 = float(np.mean(f0))
    out = np.zeros_like(f0)
    for k in range(1, n_harmonics + 1):
        freq = k * mean_f0
        if freq >= sample_rate / 2.0:
            break
        gain = np.sum(np.exp(-0.5 * ((freq - centres) / widths) ** 2)) + tilt / k
        out += gain * np.sin(k * phase)
    return out


def _band_noise(count: int, low: float, high: float, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    sos = butter(4, [low, high], btype='bandpass', fs=sample_rate, output='sos')
    return sosfilt(sos, rng.standard_normal(count))


def _fade(segment: np.ndarray, sample_rate: int, ms: float = 8.0) -> np.ndarray:
    ramp = min(int(sample_rate * ms / 1000.0), segment.shape[0] // 2)
    if ramp > 0:
        window = np.hanning(2 * ramp)
        segment[:ramp] *= window[:ramp]
        segment[-ramp:] *= window[ramp:]
    return segment


def _contour(tone: int, count: int, base: float) -> np.ndarray:
    start, middle, end = TONE_CONTOURS[tone]
    half = count // 2
    return base * np.concatenate([np.linspace(start, middle, half, endpoint=False),
                                  np.linspace(middle, end, count - half)])


def render_phoneme(label: str, language: Language, pitch: float, sample_rate: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Waveform segment for one phoneme."""
    centres, widths = _envelope(label, language)
    if language is Language.SPECIAL:
        return np.zeros(int(sample_rate * 0.05))
    if language is Language.MAN and label in MANDARIN_INITIALS:
        count = int(sample_rate * INITIAL_MS / 1000.0)
        low = float(np.clip(centres[1], 400.0, 0.4 * sample_rate))
        segment = 0.6 * _band_noise(count, low * 0.7, min(low * 1.6, 0.45 * sample_rate), sample_rate, rng)
        segment += 0.3 * _harmonics(np.full(count, pitch), centres, widths, sample_rate, 10, 0.2)
        return _fade(segment, sample_rate)
    if language is Language.MAN:
        tone = int(label[-1])
        count = int(sample_rate * FINAL_MS / 1000.0)
        segment = _harmonics(_contour(tone, count, pitch), centres, widths, sample_rate, 16, 0.5)
        return _fade(segment, sample_rate)
    count = int(sample_rate * ENGLISH_MS / 1000.0)
    segment = _harmonics(np.full(count, pitch * 1.1), centres, widths, sample_rate, 32, 0.1)
    segment += 0.35 * _band_noise(count, 2500.0, min(6000.0, 0.45 * sample_rate), sample_rate, rng)
    return _fade(segment, sample_rate)


def render_utterance(phoneme_ids: Sequence[int], inventory: PhonemeInventory, speaker_id: int,
                     seed: int, sample_rate: int = 24000, noise_seed: int = 0) -> AudioClip:
    """Concatenate phoneme segments between leading and trailing silence, peak-normalised."""
    rng = np.random.default_rng([seed, noise_seed])
    pitch = speaker_pitch(speaker_id, seed)
    pieces = [np.zeros(int(sample_rate * LEAD_SILENCE_MS / 1000.0))]
    for phoneme_id in phoneme_ids:
        symbol = inventory[phoneme_id]
        if symbol.label in ('<eos>', '<pad>'):
            continue
        pieces.append(render_phoneme(symbol.label, symbol.language, pitch, sample_rate, rng))
    body = np.concatenate(pieces)
    peak = np.max(np.abs(body))
    if peak > 0:
        body = body * (PEAK / peak)
    tail = np.zeros(int(sample_rate * TRAIL_SILENCE_MS / 1000.0))
    return AudioClip(np.concatenate([body, tail]), sample_rate)


def _mandarin_words(rng: np.random.Generator, count: int) -> List[str]:
    tokens = []
    for _ in range(count):
        tokens.append(str(rng.choice(MANDARIN_INITIALS)))
        tokens.append(f'{rng.choice(MANDARIN_FINALS)}{rng.choice(TONES)}')
    return tokens


def _english_word(rng: np.random.Generator) -> List[str]:
    return [str(p) for p in rng.choice(ARPABET, size=int(rng.integers(3, 6)))]


def random_phoneme_string(language: UtteranceLanguage, rng: np.random.Generator) -> str:
    """Phoneme string of one language class, in canonical scoped form."""
    language = UtteranceLanguage(language)
    if language is UtteranceLanguage.MAN:
        return '|MAN| ' + ' '.join(_mandarin_words(rng, int(rng.integers(2, 5))))
    if language is UtteranceLanguage.ENG:
        words = [' '.join(_english_word(rng)) for _ in range(int(rng.integers(1, 3)))]
        return '|ENG| ' + f' {WORD_BOUNDARY} '.join(words)
    head = ' '.join(_mandarin_words(rng, int(rng.integers(1, 3))))
    tail = ' '.join(_mandarin_words(rng, int(rng.integers(1, 3))))
    return f'|MAN| {head} {WORD_BOUNDARY} |ENG| {" ".join(_english_word(rng))} {WORD_BOUNDARY} |MAN| {tail}'


# PUBLIC_INTERFACE
def generate_synthetic_corpus(out_dir: Union[str, Path], inventory: PhonemeInventory,
                              spec: SyntheticCorpusSpec = SyntheticCorpusSpec()) -> Path:
    """Render WAV files and a manifest under ``out_dir``.

    Every speaker records ``utterances_per_language`` MAN and ENG utterances;
    the target speaker additionally records as many MIX utterances.

    Returns:
        Path: ``out_dir/manifest.jsonl``
    """
    out_dir = Path(out_dir)
    (out_dir / 'wav').mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    records: List[UtteranceRecord] = []
    for speaker in range(spec.n_speakers):
        languages = [UtteranceLanguage.MAN, UtteranceLanguage.ENG]
        if speaker == spec.target_speaker:
            languages.append(UtteranceLanguage.MIX)
        for language in languages:
            for index in range(spec.utterances_per_language):
                utterance_id = f'spk{speaker}_{language.value.lower()}_{index:03d}'
                ids = parse_phoneme_string(random_phoneme_string(language, rng), inventory)
                clip = render_utterance(ids, inventory, speaker, spec.seed, spec.sample_rate,
                                        noise_seed=len(records))
                audio = out_dir / 'wav' / f'{utterance_id}.wav'
                wav_write(audio, clip)
                records.append(UtteranceRecord(utterance_id, speaker, classify_language(ids, inventory),
                                               ids, audio_path=audio))
    manifest = write_manifest(out_dir / 'manifest.jsonl', records, inventory)
    logger.info('synthetic corpus: %d utterances, %d speakers -> %s', len(records), spec.n_speakers, manifest)
    return manifest
