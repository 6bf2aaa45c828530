"""Audio input/output, spectral features and Griffin-Lim reconstruction."""
from mixtts.dsp.audio import AudioClip, AudioConfig, resample, wav_read, wav_write  # noqa: F401
from mixtts.dsp.spectral import griffin_lim, mel_filterbank, stft  # noqa: F401
from mixtts.dsp.features import (  # noqa: F401
    FeatureNormalizer,
    FeaturePair,
    extract_features,
    read_features,
    trim_silence,
    write_features,
)
