import numpy as np
import pytest

from mixtts import create_runtime
from mixtts.autodiff.tensor import set_default_dtype
from mixtts.dsp.audio import AudioConfig
from mixtts.dsp.features import FeaturePair
from mixtts.frontend.inventory import default_inventory, parse_phoneme_string
from mixtts.frontend.manifest import UtteranceLanguage, UtteranceRecord
from mixtts.network.config import AttentionVariant, ModelConfig, SpeakerPlacement


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow experiments')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _default_precision():
    set_default_dtype('f32')
    yield
    set_default_dtype('f32')


@pytest.fixture(scope='session')
def inventory():
    return default_inventory()


@pytest.fixture
def runtime(tmp_path):
    return create_runtime('testing', out_dir=tmp_path)


@pytest.fixture
def small_audio():
    """8 kHz analysis with 12.5 ms hop and 50 ms window."""
    return AudioConfig(sample_rate=8000, n_fft=512, win_length=400, hop_length=100, n_mels=20,
                       fmax=4000.0, griffin_lim_iters=30)


def tiny_config(variant=AttentionVariant.BASE, placement=SpeakerPlacement.NONE, **overrides) -> ModelConfig:
    settings = dict(
        phoneme_vocab=239, embedding_dim=8, encoder_dim=8, decoder_dim=12, speaker_count=3, speaker_dim=4,
        attention_variant=variant, speaker_placement=placement, reduction_factor=2, prenet_dims=(8, 6),
        attention_dim=6, encoder_conv_layers=1, conv_kernel=3, postnet_dim=8, n_mels=6, n_linear=9,
        max_decoder_steps=12, prenet_dropout=0.0,
    )
    settings.update(overrides)
    return ModelConfig(**settings)


def random_record(config: ModelConfig, phoneme_ids, speaker_id=0, n_frames=6, seed=0,
                  language=UtteranceLanguage.MAN, utterance_id=None) -> UtteranceRecord:
    rng = np.random.default_rng(seed)
    features = FeaturePair(mel=rng.uniform(0.0, 1.0, (n_frames, config.n_mels)),
                           linear=rng.uniform(0.0, 1.0, (n_frames, config.n_linear)))
    return UtteranceRecord(utterance_id=utterance_id or f'utt{seed}', speaker_id=speaker_id, language=language,
                           phoneme_ids=tuple(phoneme_ids), features=features)


@pytest.fixture
def make_config():
    return tiny_config


@pytest.fixture
def make_record():
    return random_record


@pytest.fixture
def man_ids(inventory):
    return parse_phoneme_string('|MAN| n i3 h ao3', inventory)


@pytest.fixture
def mix_ids(inventory):
    return parse_phoneme_string('|MAN| h ao3 <wb> |ENG| L AY1 K', inventory)
