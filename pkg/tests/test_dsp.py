import struct

import librosa
import numpy as np
import pytest

from mixtts.dsp.audio import AudioClip, AudioConfig, resample, wav_read, wav_write
from mixtts.dsp.features import (
    FeatureNormalizer,
    FeaturePair,
    extract_features,
    read_feature_header,
    read_features,
    trim_silence,
    write_features,
)
from mixtts.dsp.spectral import frame_count, griffin_lim, magnitudes, mel_filterbank, stft
from mixtts.errors import (
    ConfigurationError,
    DataError,
    EmptyClipError,
    EmptyFeatureError,
    FeatureCacheError,
    NumericError,
    TooShortError,
    WavParseError,
)


def sinusoid(freq, seconds, sample_rate, amplitude=0.5):
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), sample_rate)


def test_wav_round_trip_is_within_one_quantisation_step(tmp_path):
    clip = sinusoid(440.0, 0.1, 24000)
    wav_write(tmp_path / 'tone.wav', clip)
    loaded = wav_read(tmp_path / 'tone.wav')
    assert loaded.sample_rate == 24000
    assert len(loaded) == len(clip)
    assert np.max(np.abs(loaded.samples - clip.samples)) <= 1.0 / 32768


def test_wav_read_resamples_on_request(tmp_path):
    wav_write(tmp_path / 'low.wav', sinusoid(200.0, 0.5, 16000))
    clip = wav_read(tmp_path / 'low.wav', resample_to=24000)
    assert clip.sample_rate == 24000
    assert len(clip) == 12000


def test_wav_read_downsamples_48k_to_24k(tmp_path):
    wav_write(tmp_path / 'high.wav', sinusoid(440.0, 0.25, 48000))
    clip = wav_read(tmp_path / 'high.wav', resample_to=24000)
    assert clip.sample_rate == 24000
    assert len(clip) == 6000
    spec = stft(clip, n_fft=2048, hop_length=300, win_length=1200)
    assert np.all(np.argmax(np.abs(spec[2:-2]), axis=1) == round(440 * 2048 / 24000))


def test_resample_is_identity_at_same_rate():
    clip = sinusoid(100.0, 0.01, 8000)
    assert resample(clip, 8000) is clip


@pytest.mark.parametrize('mutate, chunk', [
    (lambda raw: b'JUNK' + raw[4:], 'RIFF'),
    (lambda raw: raw[:8] + b'AVIW' + raw[12:], 'RIFF'),
    (lambda raw: raw[:20] + struct.pack('<H', 3) + raw[22:], 'fmt '),
    (lambda raw: raw[:22] + struct.pack('<H', 2) + raw[24:], 'fmt '),
    (lambda raw: raw[:-10], 'data'),
])
def test_wav_parse_errors_name_the_chunk(tmp_path, mutate, chunk):
    path = tmp_path / 'tone.wav'
    wav_write(path, sinusoid(440.0, 0.01, 8000))
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(WavParseError) as info:
        wav_read(path)
    assert info.value.chunk == chunk


def test_audio_clip_rejects_non_finite_samples():
    with pytest.raises(DataError):
        AudioClip(np.array([0.0, np.nan]), 8000)


def test_audio_config_validation():
    with pytest.raises(ConfigurationError):
        AudioConfig(n_fft=512, win_length=1200)
    with pytest.raises(ConfigurationError):
        AudioConfig(fmax=13000.0)
    assert AudioConfig().n_linear == 1025
    assert AudioConfig().frame_shift_ms == pytest.approx(12.5)
    assert AudioConfig().frame_length_ms == pytest.approx(50.0)


def test_stft_peak_bin_for_pure_tone():
    spec = stft(sinusoid(440.0, 0.5, 24000), n_fft=2048, hop_length=300, win_length=1200)
    assert spec.shape[1] == 1025
    peaks = np.argmax(np.abs(spec[2:-2]), axis=1)
    assert np.all(peaks == round(440 * 2048 / 24000))


@pytest.mark.parametrize('n_samples, n_fft, hop', [(1000, 256, 64), (1201, 512, 100), (4096, 1024, 256), (777, 128, 50)])
def test_stft_frame_count_formula(n_samples, n_fft, hop):
    clip = AudioClip(np.random.default_rng(0).normal(size=n_samples) * 0.1, 8000)
    spec = stft(clip, n_fft=n_fft, hop_length=hop, win_length=n_fft)
    assert spec.shape[0] == frame_count(n_samples, n_fft, hop)


def test_stft_rejects_short_clip_and_bad_geometry():
    with pytest.raises(TooShortError):
        stft(AudioClip(np.ones(100), 8000), n_fft=512, hop_length=100, win_length=400)
    with pytest.raises(ConfigurationError):
        stft(AudioClip(np.ones(1000), 8000), n_fft=256, hop_length=100, win_length=400)


def test_mel_filterbank_shape_and_empty_band_error():
    bank = mel_filterbank(2048, 80, 0.0, 12000.0, sample_rate=24000)
    assert bank.shape == (80, 1025)
    assert np.all(bank.sum(axis=1) > 0)
    with pytest.raises(ConfigurationError):
        mel_filterbank(64, 80, 0.0, 4000.0, sample_rate=8000)


@pytest.mark.parametrize('fmin, fmax', [(0.0, 12000.0), (50.0, 8000.0)])
def test_mel_filterbank_covers_every_bin_in_range(fmin, fmax):
    bank = mel_filterbank(2048, 80, fmin, fmax, sample_rate=24000)
    freqs = librosa.fft_frequencies(sr=24000, n_fft=2048)
    in_range = (freqs >= fmin) & (freqs <= fmax)
    assert np.all(bank[:, in_range].sum(axis=0) > 0)
    assert not bank[:, freqs > fmax + 24000 / 2048].any()


def test_mel_filters_are_unimodal_with_increasing_centres():
    bank = mel_filterbank(2048, 80, 0.0, 12000.0, sample_rate=24000)
    assert np.all(bank >= 0)
    for row in bank:
        peak = int(np.argmax(row))
        steps = np.diff(row)
        assert np.all(steps[:peak] >= -1e-12)
        assert np.all(steps[peak:] <= 1e-12)
    freqs = librosa.fft_frequencies(sr=24000, n_fft=2048)
    centroids = bank @ freqs / bank.sum(axis=1)
    assert np.all(np.diff(centroids) > 0)
    assert np.all(np.diff(np.argmax(bank, axis=1)) >= 0)
    assert np.all(np.ones(1025) @ bank.T > 0)


def test_trim_silence_removes_leading_zeros():
    body = np.full(1600, 0.5)
    trimmed = trim_silence(AudioClip(np.concatenate([np.zeros(8000), body]), 8000), tail_ms=200.0)
    np.testing.assert_array_equal(trimmed.samples, body)


def test_trim_silence_cuts_long_tail_to_tail_ms():
    samples = np.concatenate([np.full(1600, 0.5), np.zeros(4000)])
    trimmed = trim_silence(AudioClip(samples, 8000), threshold_db=-40.0, tail_ms=200.0)
    assert len(trimmed) == 1600 + 1600
    np.testing.assert_array_equal(trimmed.samples[1600:], 0.0)


def test_trim_silence_keeps_short_tail_without_padding():
    samples = np.concatenate([np.zeros(800), np.full(1600, 0.5), np.zeros(400)])
    trimmed = trim_silence(AudioClip(samples, 8000), threshold_db=-40.0, tail_ms=200.0)
    assert len(trimmed) == 1600 + 400
    assert trimmed.samples[0] == pytest.approx(0.5)


def test_trim_silence_leaves_loud_clip_unchanged():
    rng = np.random.default_rng(0)
    samples = rng.uniform(0.05, 0.5, 24000) * rng.choice([-1.0, 1.0], 24000)
    clip = AudioClip(samples, 24000)
    trimmed = trim_silence(clip, threshold_db=-40.0, tail_ms=200.0)
    assert len(trimmed) == len(clip)
    np.testing.assert_array_equal(trimmed.samples, clip.samples)


def test_trim_silence_errors():
    with pytest.raises(EmptyClipError):
        trim_silence(AudioClip(np.zeros(800), 8000))
    with pytest.raises(ConfigurationError):
        trim_silence(AudioClip(np.ones(800), 8000), tail_ms=-1.0)


def test_extract_features_dimensions(small_audio):
    clip = sinusoid(440.0, 0.5, small_audio.sample_rate)
    pair = extract_features(clip, small_audio, trim=False)
    assert pair.mel.shape == (frame_count(len(clip), small_audio.n_fft, small_audio.hop_length), 20)
    assert pair.linear.shape == (pair.n_frames, small_audio.n_linear)
    assert np.all(np.isfinite(pair.mel))
    assert pair.frame_shift_ms == pytest.approx(12.5)


def test_extract_features_default_pipeline_is_80_mel_by_1025_linear():
    samples = np.concatenate([np.zeros(2400), sinusoid(440.0, 0.3, 24000).samples, np.zeros(2400)])
    pair = extract_features(AudioClip(samples, 24000))
    assert pair.mel.shape[1] == 80
    assert pair.linear.shape[1] == 1025
    assert pair.check_mel_dim() is pair


def test_constant_signal_lands_in_lowest_mel_band():
    pair = extract_features(AudioClip(np.full(12000, 0.5), 24000), trim=False)
    assert np.all(np.argmax(pair.mel, axis=1) == 0)


def test_stft_preserves_energy():
    rng = np.random.default_rng(4)
    samples = np.concatenate([np.zeros(2048), rng.normal(size=4800) * 0.1, np.zeros(2048)])
    power = np.abs(stft(AudioClip(samples, 24000), n_fft=2048, hop_length=300, win_length=1200)) ** 2
    spectrum_energy = power[:, 0].sum() + power[:, -1].sum() + 2 * power[:, 1:-1].sum()
    # squared periodic Hann windows at a quarter-window hop sum to 1.5
    assert spectrum_energy / 2048 == pytest.approx(1.5 * np.sum(samples ** 2), rel=1e-6)


def test_extract_features_errors(small_audio):
    with pytest.raises(ConfigurationError):
        extract_features(sinusoid(440.0, 0.5, 16000), small_audio)
    with pytest.raises(EmptyFeatureError):
        extract_features(AudioClip(np.zeros(4000), small_audio.sample_rate), small_audio)


def test_feature_pair_validation():
    with pytest.raises(DataError):
        FeaturePair(mel=np.zeros((3, 4)), linear=np.zeros((2, 5)))
    with pytest.raises(DataError):
        FeaturePair(mel=np.full((2, 4), np.inf), linear=np.zeros((2, 5)))
    with pytest.raises(DataError):
        FeaturePair(mel=np.zeros((2, 4)), linear=np.zeros((2, 5))).check_mel_dim()


def test_normalizer_maps_corpus_range_to_unit_interval(small_audio, tmp_path):
    pairs = [extract_features(sinusoid(f, 0.4, small_audio.sample_rate), small_audio, trim=False)
             for f in (220.0, 660.0)]
    normalizer = FeatureNormalizer.fit(pairs)
    scaled = [normalizer.normalize(p) for p in pairs]
    assert min(s.mel.min() for s in scaled) == pytest.approx(0.0)
    assert max(s.linear.max() for s in scaled) == pytest.approx(1.0)
    np.testing.assert_allclose(normalizer.denormalize(scaled[0]).mel, pairs[0].mel, atol=1e-9)
    normalizer.save(tmp_path / 'norm.json')
    assert FeatureNormalizer.load(tmp_path / 'norm.json') == normalizer
    with pytest.raises(DataError):
        FeatureNormalizer.fit([])
    with pytest.raises(DataError):
        FeatureNormalizer.from_dict({'mel_min': 0.0})


def test_feature_cache_container(tmp_path):
    rng = np.random.default_rng(0)
    pair = FeaturePair(rng.random((7, 80)), rng.random((7, 1025)))
    write_features(tmp_path / 'a.ptfp', pair)
    assert read_feature_header(tmp_path / 'a.ptfp') == (7, 80, 1025)
    loaded = read_features(tmp_path / 'a.ptfp')
    np.testing.assert_allclose(loaded.mel, pair.mel, rtol=1e-6)

    (tmp_path / 'bad.ptfp').write_bytes(b'NOPE' + (tmp_path / 'a.ptfp').read_bytes()[4:])
    with pytest.raises(FeatureCacheError):
        read_feature_header(tmp_path / 'bad.ptfp')
    (tmp_path / 'short.ptfp').write_bytes((tmp_path / 'a.ptfp').read_bytes()[:-4])
    with pytest.raises(FeatureCacheError):
        read_features(tmp_path / 'short.ptfp')


def test_griffin_lim_convergence_is_monotone(small_audio):
    target = magnitudes(sinusoid(440.0, 0.5, small_audio.sample_rate), small_audio)
    result = griffin_lim(target, small_audio, n_iters=30, seed=0)
    errors = np.array(result.errors)
    assert len(errors) == 30
    assert np.all(np.diff(errors) <= 1e-7)
    assert errors[-1] < errors[0]


def test_griffin_lim_sinusoid_spectral_snr_exceeds_20_db(small_audio):
    target = magnitudes(sinusoid(440.0, 0.5, small_audio.sample_rate), small_audio)
    result = griffin_lim(target, small_audio, n_iters=60, seed=0)
    rebuilt = magnitudes(result.clip, small_audio)
    frames = min(rebuilt.shape[0], target.shape[0])
    core = slice(3, frames - 3)
    residual = np.linalg.norm(rebuilt[core] - target[core])
    snr = 20 * np.log10(np.linalg.norm(target[core]) / residual)
    assert snr > 20.0


def test_griffin_lim_is_seeded_and_validates_input(small_audio):
    target = magnitudes(sinusoid(300.0, 0.25, small_audio.sample_rate), small_audio)
    first = griffin_lim(target, small_audio, n_iters=3, seed=7)
    second = griffin_lim(target, small_audio, n_iters=3, seed=7)
    np.testing.assert_array_equal(first.clip.samples, second.clip.samples)
    silent = griffin_lim(np.zeros_like(target), small_audio, n_iters=2)
    assert not silent.clip.samples.any()
    with pytest.raises(NumericError):
        griffin_lim(-target, small_audio)
    with pytest.raises(NumericError):
        griffin_lim(np.full_like(target, np.nan), small_audio)
    with pytest.raises(ConfigurationError):
        griffin_lim(target, small_audio, n_iters=0)
