"""Audio clips, PCM16 WAV input/output and resampling."""
import logging
import struct
import warnings
from dataclasses import dataclass
from math import gcd
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from mixtts.errors import ConfigurationError, DataError, WavParseError

logger = logging.getLogger(__name__)

CANONICAL_SAMPLE_RATE = 24000
PCM16_SCALE = 32768.0


# PUBLIC_INTERFACE
@dataclass
class AudioClip:
    """Mono waveform.

    Attributes:
        samples: float64 samples, nominally in [-1, 1]
        sample_rate: sampling rate in Hz
    """
    samples: np.ndarray
    sample_rate: int = CANONICAL_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ConfigurationError(f'sample_rate must be positive, got {self.sample_rate}')
        if not np.all(np.isfinite(self.samples)):
            raise DataError('audio samples must be finite')

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / float(self.sample_rate)


# PUBLIC_INTERFACE
@dataclass(frozen=True)
class AudioConfig:
    """Analysis settings for the feature pipeline (24 kHz, 50 ms / 12.5 ms frames)."""
    sample_rate: int = CANONICAL_SAMPLE_RATE
    n_fft: int = 2048
    win_length: int = 1200
    hop_length: int = 300
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0
    mag_floor: float = 1e-5
    trim_db: float = -40.0
    tail_ms: float = 200.0
    griffin_lim_iters: int = 60

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigurationError('sample_rate must be positive')
        if not (0 < self.hop_length <= self.win_length <= self.n_fft):
            raise ConfigurationError(
                f'need hop <= win <= n_fft, got hop={self.hop_length} '
                f'win={self.win_length} n_fft={self.n_fft}'
            )
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ConfigurationError(
                f'need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin} fmax={self.fmax}'
            )

    @property
    def n_linear(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def frame_shift_ms(self) -> float:
        return 1000.0 * self.hop_length / self.sample_rate

    @property
    def frame_length_ms(self) -> float:
        return 1000.0 * self.win_length / self.sample_rate

    @classmethod
    def from_settings(cls, settings) -> 'AudioConfig':
        """Build from a config class (see mixtts.config)."""
        sr = settings.SAMPLE_RATE
        return cls(
            sample_rate=sr,
            n_fft=settings.N_FFT,
            win_length=int(round(settings.WIN_MS * sr / 1000.0)),
            hop_length=int(round(settings.HOP_MS * sr / 1000.0)),
            n_mels=settings.N_MELS,
            fmin=settings.FMIN,
            fmax=settings.FMAX,
            mag_floor=settings.MAG_FLOOR,
            trim_db=settings.TRIM_DB,
            tail_ms=settings.TAIL_MS,
            griffin_lim_iters=settings.GRIFFIN_LIM_ITERS,
        )


# PUBLIC_INTERFACE
def resample(clip: AudioClip, target_rate: int = CANONICAL_SAMPLE_RATE) -> AudioClip:
    """Polyphase resampling to ``target_rate``."""
    if clip.sample_rate == target_rate:
        return clip
    factor = gcd(int(clip.sample_rate), int(target_rate))
    up, down = target_rate // factor, clip.sample_rate // factor
    return AudioClip(resample_poly(clip.samples, up, down), target_rate)



# scipy's reader messages -> the chunk they concern
_CHUNK_HINTS = (
    ('not understood', 'RIFF'),
    ('Not a WAV file', 'RIFF'),
    ('RF64', 'RIFF'),
    ('fmt', 'fmt '),
    ('Binary structure', 'fmt '),
    ('wave file format', 'fmt '),
    ('bit depth', 'fmt '),
    ('WAV header', 'fmt '),
    ('end of file', 'data'),
    ('chunk ID', 'data'),
)


def _chunk_for(message: str) -> str:
    for hint, chunk in _CHUNK_HINTS:
        if hint in message:
            return chunk
    return 'RIFF'


# PUBLIC_INTERFACE
def wav_read(path: Union[str, Path], resample_to: Union[int, None] = None) -> AudioClip:
    """Read a PCM 16-bit mono WAV file.

    Args:
        path: file to read
        resample_to: resample to this rate when the file rate differs

    Returns:
        AudioClip: samples scaled by 1/32768

    Raises:
        WavParseError: for malformed headers, truncated data or unsupported encodings, naming the chunk
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', wavfile.WavFileWarning)
        try:
            sample_rate, data = wavfile.read(str(path))
        except ValueError as exc:
            raise WavParseError(_chunk_for(str(exc)), f'{path}: {exc}') from exc
        except struct.error as exc:
            raise WavParseError('chunk header', f'{path}: truncated header ({exc})') from exc
    for warning in caught:
        message = str(warning.message)
        if 'prematurely' in message:
            raise WavParseError('data', f'{path}: data chunk is truncated ({message})')
        logger.warning('%s: %s', path, message)

    if data.ndim != 1:
        raise WavParseError('fmt ', f'{path}: expected mono, found {data.shape[1]} channels')
    if data.dtype != np.int16:
        raise WavParseError('fmt ', f'{path}: unsupported encoding {data.dtype}, expected 16-bit PCM')

    clip = AudioClip(data.astype(np.float64) / PCM16_SCALE, int(sample_rate))
    if resample_to is not None and sample_rate != resample_to:
        logger.debug('resampling %s from %d to %d Hz', path, sample_rate, resample_to)
        clip = resample(clip, resample_to)
    return clip


# PUBLIC_INTERFACE
def wav_write(path: Union[str, Path], clip: AudioClip) -> None:
    """Write a clip as PCM 16-bit mono WAV (samples clipped to [-1, 1))."""
    pcm = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype(np.int16)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), int(clip.sample_rate), pcm)
