import numpy as np
import pytest

from mixtts.autodiff.gradcheck import check_gradients
from mixtts.autodiff.tensor import Tensor, precision
from mixtts.dsp.audio import AudioConfig
from mixtts.dsp.features import FeaturePair
from mixtts.errors import ConfigurationError, DataError, DimensionError, EmbeddingIndexError
from mixtts.network.attention import attention_step, recompute_pecv
from mixtts.network.checkpoint import file_digest, load_checkpoint, save_checkpoint
from mixtts.network.config import AttentionVariant, ModelConfig, SpeakerPlacement
from mixtts.network.decoder import decode_step, go_frame, initial_decoder_state
from mixtts.network.encoder import encode
from mixtts.network.parameters import (
    PARAMETER_GROUPS,
    init_parameters,
    parameter_digest,
    parameter_shapes,
    select,
    validate_groups,
)
from mixtts.network.tacotron import (
    compute_loss,
    forward_teacher_forced,
    prediction_loss,
    stop_targets,
    synthesize,
)
from mixtts.network.verification import end_to_end_gradcheck, gradcheck_grid, toy_config, toy_record

VARIANTS = list(AttentionVariant)
PLACEMENTS = list(SpeakerPlacement)


def test_config_validation_and_round_trip(make_config):
    config = make_config(AttentionVariant.PECV, SpeakerPlacement.SE_ENC)
    assert ModelConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ConfigurationError):
        make_config(AttentionVariant.RES, embedding_dim=6)
    with pytest.raises(ConfigurationError):
        make_config(encoder_dim=7)
    with pytest.raises(ConfigurationError):
        make_config(conv_kernel=4)
    with pytest.raises(ConfigurationError):
        make_config(speaker_dim=-1)
    with pytest.raises(ConfigurationError):
        ModelConfig.from_dict({**config.to_dict(), 'heads': 4})


def test_context_width_per_variant(make_config):
    assert make_config(AttentionVariant.BASE, SpeakerPlacement.SE_ENC).context_dim == 12
    assert make_config(AttentionVariant.PECV, SpeakerPlacement.SE_ENC).context_dim == 8
    dec = make_config(AttentionVariant.BASE, SpeakerPlacement.SE_DEC)
    assert dec.decoder_input_dim == 6 + 4 + 8


def test_initial_values_depend_only_on_name(make_config):
    base = init_parameters(make_config(AttentionVariant.BASE), seed=3)
    pecv = init_parameters(make_config(AttentionVariant.PECV, SpeakerPlacement.SE_DEC), seed=3)
    for name in ('phoneme_embedding.table', 'encoder.gru_fw.weight_gates', 'postnet.linear.weight'):
        np.testing.assert_array_equal(base[name].data, pecv[name].data)
    assert 'attention.reduce.weight' in pecv and 'attention.reduce.weight' not in base


def test_parameter_groups_and_digest(make_config):
    params = init_parameters(make_config(placement=SpeakerPlacement.SE_ENC))
    assert {name.split('.')[0] for name in params} == set(PARAMETER_GROUPS)
    assert set(select(params, ['encoder'])) == {n for n in params if n.startswith('encoder.')}
    before = parameter_digest(params, ['encoder'])
    params['postnet.linear.bias'].data += 1.0
    assert parameter_digest(params, ['encoder']) == before
    with pytest.raises(ConfigurationError):
        validate_groups(['encoder', 'vocoder'])


@pytest.mark.parametrize('placement, speaker_dim', [
    (SpeakerPlacement.NONE, 4),
    (SpeakerPlacement.SE_ENC, 0),
    (SpeakerPlacement.SE_DEC, 0),
])
def test_unconditioned_model_allocates_no_speaker_table(make_config, placement, speaker_dim):
    config = make_config(placement=placement, speaker_dim=speaker_dim)
    assert 'speaker_embedding.table' not in parameter_shapes(config)
    assert select(init_parameters(config), ['speaker_embedding']) == {}
    conditioned = make_config(placement=SpeakerPlacement.SE_DEC)
    assert parameter_shapes(conditioned)['speaker_embedding.table'] == (3, 4)


@pytest.mark.parametrize('variant', VARIANTS)
@pytest.mark.parametrize('placement', PLACEMENTS)
def test_teacher_forced_shapes(make_config, make_record, man_ids, variant, placement):
    config = make_config(variant, placement)
    record = make_record(config, man_ids, speaker_id=2, n_frames=5)
    result = forward_teacher_forced(record, init_parameters(config), config)
    assert result.mel.shape == (5, config.n_mels)
    assert result.linear.shape == (5, config.n_linear)
    assert result.stop_logits.shape == (3, 1)
    assert result.steps == 3
    memory_width = config.encoder_dim + (config.speaker_dim if placement is SpeakerPlacement.SE_ENC else 0)
    assert result.encoded.memory.shape == (len(man_ids), memory_width)
    for trace in result.traces:
        assert trace.weights.shape == (1, len(man_ids))
        assert trace.weights.data.sum() == pytest.approx(1.0, abs=1e-5)
        assert np.all(trace.weights.data >= 0)
        assert trace.combined.shape == (1, config.context_dim)


def test_pecv_context_is_weighted_phoneme_embeddings(make_config, make_record, mix_ids):
    config = make_config(AttentionVariant.PECV, SpeakerPlacement.SE_ENC)
    result = forward_teacher_forced(make_record(config, mix_ids), init_parameters(config), config)
    embeddings = result.encoded.phoneme_embeddings.data
    for trace in result.traces:
        np.testing.assert_allclose(recompute_pecv(trace, embeddings), trace.pecv.data, rtol=1e-5, atol=1e-6)
    assert all(trace.pecv is None for trace in forward_teacher_forced(
        make_record(make_config(), mix_ids), init_parameters(make_config()), make_config()).traces)


def test_forced_attention_weights(make_config, man_ids):
    config = make_config(AttentionVariant.PECV)
    params = init_parameters(config)
    encoded = encode(man_ids, 0, params, config)
    one_hot = np.zeros(len(man_ids))
    one_hot[2] = 1.0
    trace = attention_step(initial_decoder_state(config).h, encoded, params, config, forced_weights=one_hot)
    np.testing.assert_allclose(trace.context.data[0], encoded.memory.data[2], rtol=1e-6)
    np.testing.assert_allclose(trace.pecv.data[0], encoded.phoneme_embeddings.data[2], rtol=1e-6)
    with pytest.raises(DimensionError):
        attention_step(initial_decoder_state(config).h, encoded, params, config, forced_weights=one_hot[:-1])


def test_residual_with_zero_embeddings_matches_base(make_config, make_record, man_ids):
    outputs = {}
    for variant in (AttentionVariant.BASE, AttentionVariant.RES):
        config = make_config(variant)
        params = init_parameters(config, seed=5)
        params['phoneme_embedding.table'].data[...] = 0.0
        outputs[variant] = forward_teacher_forced(make_record(config, man_ids), params, config)
    np.testing.assert_allclose(outputs[AttentionVariant.RES].mel.data, outputs[AttentionVariant.BASE].mel.data)
    np.testing.assert_allclose(outputs[AttentionVariant.RES].encoded.encoder_outputs.data,
                               outputs[AttentionVariant.RES].encoded.base_outputs.data)


def test_residual_adds_phoneme_embeddings(make_config, man_ids):
    config = make_config(AttentionVariant.RES)
    encoded = encode(man_ids, 0, init_parameters(config), config)
    np.testing.assert_allclose(encoded.encoder_outputs.data,
                               encoded.base_outputs.data + encoded.phoneme_embeddings.data, rtol=1e-6)


@pytest.mark.parametrize('placement', [SpeakerPlacement.SE_ENC, SpeakerPlacement.SE_DEC])
def test_zero_width_speaker_embedding_degenerates_to_none(make_config, make_record, mix_ids, placement):
    outputs = []
    for chosen in (SpeakerPlacement.NONE, placement):
        config = make_config(AttentionVariant.BASE, chosen, speaker_dim=0)
        result = forward_teacher_forced(make_record(config, mix_ids, speaker_id=1),
                                        init_parameters(config, seed=9), config)
        outputs.append(result.mel.data)
    np.testing.assert_array_equal(outputs[0], outputs[1])


def test_speaker_changes_se_dec_output(make_config, make_record, mix_ids):
    config = make_config(AttentionVariant.BASE, SpeakerPlacement.SE_DEC)
    params = init_parameters(config)
    first = forward_teacher_forced(make_record(config, mix_ids, speaker_id=0), params, config).mel.data
    second = forward_teacher_forced(make_record(config, mix_ids, speaker_id=2), params, config).mel.data
    assert np.mean(np.linalg.norm(first - second, axis=1)) > 0


def test_decode_step_emits_reduction_factor_frames(make_config):
    config = make_config(reduction_factor=3)
    params = init_parameters(config)
    context = Tensor(np.zeros((1, config.context_dim)))
    frames, stop, state = decode_step(go_frame(config), initial_decoder_state(config), context, None, params, config)
    assert frames.shape == (3, config.n_mels)
    assert stop.shape == (1, 1)
    assert state.h.shape == (1, config.decoder_dim)
    with pytest.raises(DimensionError):
        decode_step(go_frame(config), initial_decoder_state(config), Tensor(np.zeros((1, 3))), None, params, config)
    se_dec = make_config(placement=SpeakerPlacement.SE_DEC)
    with pytest.raises(ConfigurationError):
        decode_step(go_frame(se_dec), initial_decoder_state(se_dec), Tensor(np.zeros((1, se_dec.context_dim))),
                    None, init_parameters(se_dec), se_dec)


def test_encode_errors(make_config):
    config = make_config(placement=SpeakerPlacement.SE_ENC)
    params = init_parameters(config)
    with pytest.raises(DataError):
        encode([], 0, params, config)
    with pytest.raises(EmbeddingIndexError):
        encode([1, 239], 0, params, config)
    with pytest.raises(ConfigurationError):
        encode([4, 1], 3, params, config)


def test_stop_targets():
    np.testing.assert_array_equal(stop_targets(5, 2)[:, 0], [0, 0, 1])
    np.testing.assert_array_equal(stop_targets(4, 2)[:, 0], [0, 1])


def test_perfect_prediction_has_near_zero_loss(make_config):
    rng = np.random.default_rng(0)
    mel, linear = rng.random((4, 6)), rng.random((4, 9))
    targets = stop_targets(4, 2)
    logits = Tensor(np.where(targets > 0, 60.0, -60.0))
    loss = prediction_loss(Tensor(mel), Tensor(linear), logits, mel, linear, targets)
    assert loss.total.item() < 1e-6
    assert set(loss.as_dict()) == {'loss', 'mel_loss', 'linear_loss', 'stop_loss'}


def test_teacher_forcing_errors(make_config, make_record, man_ids):
    config = make_config()
    params = init_parameters(config)
    with pytest.raises(DataError):
        forward_teacher_forced(make_record(config, man_ids, n_frames=0), params, config)
    record = make_record(config, man_ids)
    record.features = FeaturePair(np.zeros((4, 5)), np.zeros((4, 9)))
    with pytest.raises(DimensionError):
        forward_teacher_forced(record, params, config)
    record.features = None
    with pytest.raises(DataError):
        forward_teacher_forced(record, params, config)
    with pytest.raises(ConfigurationError):
        forward_teacher_forced(make_record(config, man_ids), params, config, teacher_forcing_ratio=0.5)


def test_scheduled_sampling_is_seeded(make_config, make_record, man_ids):
    config = make_config()
    params = init_parameters(config)
    record = make_record(config, man_ids, n_frames=8)
    runs = [forward_teacher_forced(record, params, config, rng=np.random.default_rng(4),
                                   teacher_forcing_ratio=0.5).mel.data for _ in range(2)]
    np.testing.assert_array_equal(runs[0], runs[1])


def test_synthesis_stops_on_stop_token(make_config, man_ids):
    config = make_config()
    params = init_parameters(config)
    params['decoder.stop.bias'].data[...] = 100.0
    result = synthesize(man_ids, 0, params, config, vocode=False)
    assert result.steps == 1
    assert not result.hit_max_steps
    assert result.mel.shape == (2, config.n_mels)
    assert result.clip is None


def test_synthesis_hits_step_cap(make_config, man_ids):
    config = make_config()
    params = init_parameters(config)
    params['decoder.stop.bias'].data[...] = -100.0
    result = synthesize(man_ids, 0, params, config, vocode=False, max_steps=5)
    assert result.hit_max_steps
    assert result.mel.shape == (10, config.n_mels)
    assert result.linear.shape == (10, config.n_linear)
    assert result.alignment().shape == (5, len(man_ids))


def test_synthesis_vocodes_with_matching_audio_settings(make_config, man_ids):
    config = make_config()
    params = init_parameters(config)
    params['decoder.stop.bias'].data[...] = -100.0
    audio = AudioConfig(sample_rate=8000, n_fft=16, win_length=16, hop_length=4, n_mels=4, fmax=4000.0)
    result = synthesize(man_ids, 0, params, config, audio_config=audio, max_steps=4, griffin_lim_iters=2)
    assert result.clip is not None
    assert len(result.clip) == (8 - 1) * 4
    assert len(result.gl_errors) == 2
    with pytest.raises(ConfigurationError):
        synthesize(man_ids, 0, params, config)


def test_synthesis_rejects_unknown_speaker(make_config, man_ids):
    config = make_config(placement=SpeakerPlacement.SE_DEC)
    with pytest.raises(ConfigurationError):
        synthesize(man_ids, 3, init_parameters(config), config, vocode=False)


def test_checkpoint_round_trip(tmp_path, make_config):
    config = make_config(AttentionVariant.PECV, SpeakerPlacement.SE_ENC)
    params = init_parameters(config, seed=2)
    metadata = {'inventory': {'version': 1}, 'steps': 3}
    digest = save_checkpoint(tmp_path / 'model.ptck', config, params, metadata)
    assert digest == file_digest(tmp_path / 'model.ptck')
    assert save_checkpoint(tmp_path / 'again.ptck', config, params, metadata) == digest
    loaded = load_checkpoint(tmp_path / 'model.ptck')
    assert loaded.config == config
    assert loaded.metadata == metadata
    assert list(loaded.params) == list(parameter_shapes(config))
    for name, tensor in params.items():
        np.testing.assert_array_equal(loaded.params[name], tensor.data)
    assert parameter_digest(loaded.tensors()) == parameter_digest(params)


def test_checkpoint_errors(tmp_path, make_config):
    config = make_config()
    params = init_parameters(config)
    path = tmp_path / 'model.ptck'
    save_checkpoint(path, config, params)
    raw = path.read_bytes()

    with pytest.raises(DataError):
        load_checkpoint(tmp_path / 'absent.ptck')
    (tmp_path / 'magic.ptck').write_bytes(b'XXXX' + raw[4:])
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / 'magic.ptck')
    (tmp_path / 'short.ptck').write_bytes(raw[:-8])
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / 'short.ptck')
    (tmp_path / 'long.ptck').write_bytes(raw + b'\0')
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / 'long.ptck')

    wrong = dict(params)
    wrong['postnet.linear.bias'] = Tensor(np.zeros(3))
    with pytest.raises(ConfigurationError):
        save_checkpoint(tmp_path / 'wrong.ptck', config, wrong)


def test_phoneme_embedding_gradient_matches_finite_differences():
    config = toy_config(AttentionVariant.PECV, SpeakerPlacement.SE_DEC)
    with precision('f64'):
        params = init_parameters(config, seed=1)
        record = toy_record(config, n_frames=4, phoneme_ids=(4, 7, 1))

        def loss():
            return compute_loss(forward_teacher_forced(record, params, config), record.features, config).total

        report = check_gradients(loss, {'phoneme_embedding.table': params['phoneme_embedding.table']},
                                 tolerance=1e-3)
    assert report.passed, report.to_table()


def test_end_to_end_gradient_single_configuration():
    report = end_to_end_gradcheck(AttentionVariant.RES, SpeakerPlacement.SE_ENC, max_elements=6)
    assert report.passed, report.to_table()


@pytest.mark.slow
def test_end_to_end_gradient_grid():
    outcomes = gradcheck_grid()
    assert len(outcomes) == len(VARIANTS) * len(PLACEMENTS)
    failed = [outcome.as_dict() for outcome in outcomes if not outcome.report.passed]
    assert not failed
