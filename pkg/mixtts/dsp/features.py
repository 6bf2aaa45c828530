"""Silence trimming, spectral feature extraction, normalisation and the feature cache."""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from mixtts.dsp.audio import AudioClip, AudioConfig
from mixtts.dsp.spectral import magnitudes, mel_filterbank
from mixtts.errors import (
    ConfigurationError,
    DataError,
    EmptyClipError,
    EmptyFeatureError,
    FeatureCacheError,
)

logger = logging.getLogger(__name__)

MEL_DIM = 80
CACHE_MAGIC = b'PTFP'
CACHE_VERSION = 1
_HEADER = struct.Struct('<4sIIII')


def _as_float(values) -> np.ndarray:
    values = np.asarray(values)
    return values if np.issubdtype(values.dtype, np.floating) else values.astype(np.float32)


# PUBLIC_INTERFACE
@dataclass
class FeaturePair:
    """Time-aligned log mel [T, n_mels] and log linear [T, n_lin] spectrograms."""
    mel: np.ndarray
    linear: np.ndarray
    frame_shift_ms: float = 12.5
    frame_length_ms: float = 50.0

    def __post_init__(self):
        self.mel = _as_float(self.mel)
        self.linear = _as_float(self.linear)
        if self.mel.ndim != 2 or self.linear.ndim != 2:
            raise DataError('mel and linear features must be matrices')
        if self.mel.shape[0] != self.linear.shape[0]:
            raise DataError(
                f'mel and linear frame counts differ: {self.mel.shape[0]} vs {self.linear.shape[0]}'
            )
        if not (np.all(np.isfinite(self.mel)) and np.all(np.isfinite(self.linear))):
            raise DataError('features must be finite')

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]

    def check_mel_dim(self, expected: int = MEL_DIM) -> 'FeaturePair':
        if self.mel.shape[1] != expected:
            raise DataError(f'mel dimension must be {expected}, got {self.mel.shape[1]}')
        return self


# PUBLIC_INTERFACE
def trim_silence(clip: AudioClip, threshold_db: float = -40.0, tail_ms: float = 200.0) -> AudioClip:
    """Drop leading silence and cut trailing silence to at most ``tail_ms``.

    Samples whose magnitude is below ``threshold_db`` dBFS count as silence.
    Nothing is padded: a clip without silence comes back unchanged.

    Raises:
        ConfigurationError: for a negative tail
        EmptyClipError: when no sample reaches the threshold
    """
    if tail_ms < 0:
        raise ConfigurationError(f'tail_ms must be >= 0, got {tail_ms}')
    threshold = 10.0 ** (threshold_db / 20.0)
    loud = np.flatnonzero(np.abs(clip.samples) >= threshold)
    if loud.size == 0:
        raise EmptyClipError(f'clip is silent below {threshold_db} dBFS')
    start, end = int(loud[0]), int(loud[-1]) + 1
    tail = int(round(tail_ms * clip.sample_rate / 1000.0))
    if start == 0 and end + tail >= len(clip):
        return clip
    return AudioClip(clip.samples[start:min(end + tail, len(clip))], clip.sample_rate)


# PUBLIC_INTERFACE
def log_compress(values: np.ndarray, floor: float = 1e-5) -> np.ndarray:
    return np.log(np.maximum(values, floor))


# PUBLIC_INTERFACE
def extract_features(clip: AudioClip, cfg: Optional[AudioConfig] = None,
                     normalizer: Optional['FeatureNormalizer'] = None,
                     trim: bool = True) -> FeaturePair:
    """Trim, then compute log mel and log linear spectrograms.

    Args:
        clip: audio at ``cfg.sample_rate``
        cfg: analysis settings (defaults to AudioConfig())
        normalizer: corpus min-max normaliser; raw log features when None
        trim: apply ``trim_silence`` first

    Raises:
        ConfigurationError: if the clip rate differs from cfg.sample_rate
        EmptyFeatureError: if nothing is left after trimming
    """
    cfg = cfg or AudioConfig()
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigurationError(
            f'clip is {clip.sample_rate} Hz, features expect {cfg.sample_rate} Hz; resample first'
        )
    if trim:
        try:
            clip = trim_silence(clip, cfg.trim_db, cfg.tail_ms)
        except EmptyClipError as exc:
            raise EmptyFeatureError(f'no features after trimming: {exc}') from exc
    mag = magnitudes(clip, cfg)
    if mag.shape[0] == 0:
        raise EmptyFeatureError('feature extraction produced no frames')
    bank = _filterbank(cfg)
    pair = FeaturePair(
        mel=log_compress(mag @ bank.T, cfg.mag_floor),
        linear=log_compress(mag, cfg.mag_floor),
        frame_shift_ms=cfg.frame_shift_ms,
        frame_length_ms=cfg.frame_length_ms,
    )
    return normalizer.normalize(pair) if normalizer is not None else pair


_BANKS = {}


def _filterbank(cfg: AudioConfig) -> np.ndarray:
    key = (cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax, cfg.sample_rate)
    if key not in _BANKS:
        _BANKS[key] = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax, cfg.sample_rate)
    return _BANKS[key]


# PUBLIC_INTERFACE
@dataclass
class FeatureNormalizer:
    """Per-corpus min-max scaling of log features to [0, 1]."""
    mel_min: float
    mel_max: float
    linear_min: float
    linear_max: float

    @classmethod
    def fit(cls, pairs: Iterable[FeaturePair]) -> 'FeatureNormalizer':
        pairs = list(pairs)
        if not pairs:
            raise DataError('cannot fit a normaliser on an empty corpus')
        return cls(
            mel_min=float(min(p.mel.min() for p in pairs)),
            mel_max=float(max(p.mel.max() for p in pairs)),
            linear_min=float(min(p.linear.min() for p in pairs)),
            linear_max=float(max(p.linear.max() for p in pairs)),
        )

    @classmethod
    def default(cls, cfg: Optional[AudioConfig] = None) -> 'FeatureNormalizer':
        """Range from the log floor to the magnitude of a full-scale sinusoid."""
        cfg = cfg or AudioConfig()
        low = float(np.log(cfg.mag_floor))
        high = float(np.log(cfg.win_length / 2.0))
        return cls(low, high, low, high)

    @staticmethod
    def _scale(values: np.ndarray, low: float, high: float) -> np.ndarray:
        span = high - low if high > low else 1.0
        return (np.asarray(values, dtype=np.float64) - low) / span

    @staticmethod
    def _unscale(values: np.ndarray, low: float, high: float) -> np.ndarray:
        span = high - low if high > low else 1.0
        return np.asarray(values, dtype=np.float64) * span + low

    def normalize(self, pair: FeaturePair) -> FeaturePair:
        return FeaturePair(
            self._scale(pair.mel, self.mel_min, self.mel_max),
            self._scale(pair.linear, self.linear_min, self.linear_max),
            pair.frame_shift_ms, pair.frame_length_ms,
        )

    def denormalize(self, pair: FeaturePair) -> FeaturePair:
        return FeaturePair(
            self.denormalize_mel(pair.mel), self.denormalize_linear(pair.linear),
            pair.frame_shift_ms, pair.frame_length_ms,
        )

    def denormalize_mel(self, mel: np.ndarray) -> np.ndarray:
        return self._unscale(mel, self.mel_min, self.mel_max)

    def denormalize_linear(self, linear: np.ndarray) -> np.ndarray:
        return self._unscale(linear, self.linear_min, self.linear_max)

    def linear_magnitude(self, linear: np.ndarray) -> np.ndarray:
        """Normalised log-linear prediction back to STFT magnitude."""
        return np.exp(self.denormalize_linear(linear))

    def to_dict(self) -> dict:
        return {'mel_min': self.mel_min, 'mel_max': self.mel_max,
                'linear_min': self.linear_min, 'linear_max': self.linear_max}

    @classmethod
    def from_dict(cls, payload: dict) -> 'FeatureNormalizer':
        try:
            return cls(**{k: float(payload[k]) for k in ('mel_min', 'mel_max', 'linear_min', 'linear_max')})
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f'invalid normaliser payload: {exc}') from exc

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n')

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'FeatureNormalizer':
        return cls.from_dict(json.loads(Path(path).read_text()))


# PUBLIC_INTERFACE
def write_features(path: Union[str, Path], pair: FeaturePair) -> None:
    """Store features as a PTFP container (header + row-major float32 mel then linear)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, pair.n_frames,
                          pair.mel.shape[1], pair.linear.shape[1])
    body = pair.mel.astype('<f4').tobytes() + pair.linear.astype('<f4').tobytes()
    path.write_bytes(header + body)


def read_feature_header(path: Union[str, Path]) -> Tuple[int, int, int]:
    """Validate a PTFP container header and return (T, mel_dim, lin_dim)."""
    path = Path(path)
    with path.open('rb') as handle:
        raw = handle.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FeatureCacheError(f'{path}: truncated header')
    magic, version, frames, mel_dim, lin_dim = _HEADER.unpack(raw)
    if magic != CACHE_MAGIC:
        raise FeatureCacheError(f'{path}: bad magic {magic!r}')
    if version != CACHE_VERSION:
        raise FeatureCacheError(f'{path}: unsupported version {version}')
    expected = _HEADER.size + 4 * frames * (mel_dim + lin_dim)
    if path.stat().st_size != expected:
        raise FeatureCacheError(f'{path}: size {path.stat().st_size} != expected {expected}')
    return frames, mel_dim, lin_dim


# PUBLIC_INTERFACE
def read_features(path: Union[str, Path]) -> FeaturePair:
    """Load a PTFP container written by ``write_features``."""
    frames, mel_dim, lin_dim = read_feature_header(path)
    raw = Path(path).read_bytes()[_HEADER.size:]
    values = np.frombuffer(raw, dtype='<f4')
    split = frames * mel_dim
    mel = values[:split].reshape(frames, mel_dim)
    linear = values[split:].reshape(frames, lin_dim)
    return FeaturePair(mel.astype(np.float32), linear.astype(np.float32))
