"""Short-time Fourier analysis, mel filterbank and Griffin-Lim reconstruction.

All spectrogram matrices exchanged with the rest of the package are
time-major: [T_frames, n_bins].
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import librosa
import numpy as np

from mixtts.dsp.audio import AudioClip, AudioConfig
from mixtts.errors import ConfigurationError, NumericError, TooShortError

logger = logging.getLogger(__name__)

WINDOW = 'hann'


def frame_count(n_samples: int, n_fft: int, hop_length: int) -> int:
    """Frames produced by a centered STFT: 1 + floor((len + 2*(n_fft//2) - n_fft) / hop)."""
    padded = n_samples + 2 * (n_fft // 2)
    return 1 + (padded - n_fft) // hop_length


# PUBLIC_INTERFACE
def stft(clip: AudioClip, n_fft: int, hop_length: int, win_length: int) -> np.ndarray:
    """Centered Hann-window STFT with reflect padding.

    Returns:
        np.ndarray: complex matrix [T, n_fft // 2 + 1]

    Raises:
        ConfigurationError: unless hop <= win <= n_fft
        TooShortError: if the clip is shorter than one window
    """
    if not (0 < hop_length <= win_length <= n_fft):
        raise ConfigurationError(f'need hop <= win <= n_fft, got {hop_length}/{win_length}/{n_fft}')
    if len(clip) < win_length or len(clip) <= n_fft // 2:
        raise TooShortError(
            f'clip of {len(clip)} samples is shorter than one analysis window ({win_length})'
        )
    spec = librosa.stft(clip.samples, n_fft=n_fft, hop_length=hop_length,
                        win_length=win_length, window=WINDOW, center=True, pad_mode='reflect')
    return spec.T


def istft(spec: np.ndarray, hop_length: int, win_length: int, n_fft: int,
          length: Optional[int] = None) -> np.ndarray:
    """Inverse of ``stft`` for a time-major complex matrix."""
    return librosa.istft(spec.T, hop_length=hop_length, win_length=win_length, n_fft=n_fft,
                         window=WINDOW, center=True, length=length)


def mel_center_frequencies(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Center frequencies of the filters on the mel scale m = 2595 log10(1 + f/700)."""
    return librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=True)[1:-1]


# PUBLIC_INTERFACE
def mel_filterbank(n_fft: int, n_mels: int = 80, fmin: float = 0.0, fmax: Optional[float] = None,
                   sample_rate: int = 24000) -> np.ndarray:
    """Area-normalised triangular filters on the HTK mel scale.

    The outer edges of the first and last filter sit half a bin outside
    [fmin, fmax], so the bins at exactly fmin and fmax (DC and Nyquist with
    the defaults) carry weight.

    Returns:
        np.ndarray: [n_mels, n_fft // 2 + 1]

    Raises:
        ConfigurationError: for an invalid frequency range or when a filter
            falls between FFT bins and comes out empty
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    if not (0 <= fmin < fmax <= sample_rate / 2.0):
        raise ConfigurationError(f'need fmin < fmax <= sample_rate/2, got {fmin}/{fmax}')
    freqs = librosa.fft_frequencies(sr=sample_rate, n_fft=n_fft)
    edges = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=True)
    half_bin = sample_rate / n_fft / 2.0
    edges[0] -= half_bin
    edges[-1] += half_bin

    widths = np.diff(edges)
    rising = (freqs[None, :] - edges[:-2, None]) / widths[:-1, None]
    falling = (edges[2:, None] - freqs[None, :]) / widths[1:, None]
    bank = np.maximum(0.0, np.minimum(rising, falling))
    bank *= (2.0 / (edges[2:] - edges[:-2]))[:, None]

    empty = np.flatnonzero(bank.sum(axis=1) <= 0)
    if empty.size:
        raise ConfigurationError(
            f'{n_mels} mel bands is too many for n_fft={n_fft}: '
            f'{empty.size} filters are empty (first at band {int(empty[0])})'
        )
    in_range = (freqs >= fmin) & (freqs <= fmax)
    uncovered = np.flatnonzero(in_range & (bank.sum(axis=0) <= 0))
    if uncovered.size:
        raise ConfigurationError(
            f'mel filterbank leaves {uncovered.size} bins in [{fmin}, {fmax}] Hz without weight '
            f'(first at {freqs[uncovered[0]]:.1f} Hz)'
        )
    return bank


def magnitudes(clip: AudioClip, cfg: AudioConfig) -> np.ndarray:
    return np.abs(stft(clip, cfg.n_fft, cfg.hop_length, cfg.win_length))


def spectral_convergence(estimate: np.ndarray, target: np.ndarray) -> float:
    """||estimate - target||_F / ||target||_F (0 when the target is silent)."""
    norm = np.linalg.norm(target)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(estimate - target) / norm)


@dataclass
class GriffinLimResult:
    """Reconstructed clip plus the convergence history (one value per iteration)."""
    clip: AudioClip
    errors: List[float] = field(default_factory=list)


# PUBLIC_INTERFACE
def griffin_lim(linear_mag: np.ndarray, cfg: AudioConfig, n_iters: Optional[int] = None,
                seed: int = 0) -> GriffinLimResult:
    """Estimate a waveform whose STFT magnitude matches ``linear_mag``.

    Alternates ISTFT and STFT projections starting from seeded random phase.

    Args:
        linear_mag: nonnegative magnitudes [T, n_fft // 2 + 1]
        cfg: analysis settings
        n_iters: iterations (defaults to cfg.griffin_lim_iters)
        seed: seed for the random initial phase

    Returns:
        GriffinLimResult: clip and per-iteration spectral convergence

    Raises:
        NumericError: for NaN or negative magnitudes
    """
    n_iters = cfg.griffin_lim_iters if n_iters is None else n_iters
    if n_iters < 1:
        raise ConfigurationError('griffin_lim needs at least one iteration')
    mag = np.asarray(linear_mag, dtype=np.float64)
    if np.isnan(mag).any():
        raise NumericError('griffin_lim magnitudes contain NaN')
    if (mag < 0).any():
        raise NumericError('griffin_lim magnitudes must be nonnegative')

    n_frames = mag.shape[0]
    length = (n_frames - 1) * cfg.hop_length
    if not mag.any():
        return GriffinLimResult(AudioClip(np.zeros(length), cfg.sample_rate), [0.0] * n_iters)

    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    errors: List[float] = []
    signal = istft(mag * phase, cfg.hop_length, cfg.win_length, cfg.n_fft, length=length)
    for _ in range(n_iters):
        # zero padding keeps istft the exact least-squares inverse of this stft
        rebuilt = librosa.stft(signal, n_fft=cfg.n_fft, hop_length=cfg.hop_length,
                               win_length=cfg.win_length, window=WINDOW, center=True,
                               pad_mode='constant').T
        errors.append(spectral_convergence(np.abs(rebuilt), mag))
        phase = rebuilt / np.maximum(np.abs(rebuilt), 1e-12)
        signal = istft(mag * phase, cfg.hop_length, cfg.win_length, cfg.n_fft, length=length)
    logger.debug('griffin_lim: %d iterations, final spectral convergence %.4f', n_iters, errors[-1])
    return GriffinLimResult(AudioClip(np.clip(signal, -1.0, 1.0), cfg.sample_rate), errors)
