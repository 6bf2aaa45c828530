import json

import numpy as np
import pytest

from mixtts.dsp.features import FeatureNormalizer, FeaturePair, write_features
from mixtts.dsp.audio import wav_read
from mixtts.errors import ConfigurationError, DataError
from mixtts.frontend.manifest import UtteranceLanguage, load_manifest
from mixtts.network.checkpoint import file_digest, load_checkpoint
from mixtts.network.config import AttentionVariant, SpeakerPlacement
from mixtts.network.parameters import RETRAIN_FROZEN_GROUPS, init_parameters, parameter_digest
from mixtts.training.corpus import build_corpus_regime, select_corpus
from mixtts.training.data import feature_path, load_corpus, sample_batch
from mixtts.training.diagnostics import attention_diagnostics
from mixtts.training.regime import (
    RegimeKind,
    Schedule,
    TrainingRegime,
    load_regime,
    manifests_for_phase,
    save_regime,
)
from mixtts.training.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus, random_phoneme_string
from mixtts.training.trainer import StepRecord, Trainer, TrainingLog, evaluation_loss, train, train_records


def regime(kind=RegimeKind.AVM_SPK_EMB_INCLUDE_TARGET, **schedule):
    settings = dict(steps=3, learning_rate=5e-3, batch_size=2, seed=7)
    settings.update(schedule)
    return TrainingRegime(regime=kind, avm_manifests=('avm.jsonl',), target_manifest='target.jsonl',
                          target_speaker_id=0, schedule=Schedule(**settings), name='unit')


def corpus(make_config, make_record, man_ids, mix_ids, speakers=(0, 1, 2), per_speaker=2):
    config = make_config(AttentionVariant.BASE, SpeakerPlacement.SE_DEC)
    records = []
    for speaker in speakers:
        for k in range(per_speaker):
            ids = man_ids if k % 2 == 0 else mix_ids
            language = UtteranceLanguage.MAN if k % 2 == 0 else UtteranceLanguage.MIX
            records.append(make_record(config, ids, speaker_id=speaker, n_frames=5, seed=10 * speaker + k,
                                       language=language, utterance_id=f'spk{speaker}_{k}'))
    return config, records


def test_schedule_validation_and_decay():
    schedule = Schedule(learning_rate=1e-3, lr_half_life=10)
    assert schedule.learning_rate_at(10) == pytest.approx(5e-4)
    assert Schedule(steps=5).phase_two_steps == 5
    assert Schedule(steps=5, retrain_steps=2).phase_two_steps == 2
    for bad in ({'steps': -1}, {'learning_rate': 0.0}, {'batch_size': 0}, {'teacher_forcing_ratio': 1.5}):
        with pytest.raises(ConfigurationError):
            Schedule(**bad)


def test_regime_round_trip_resolves_paths(tmp_path):
    original = TrainingRegime(regime=RegimeKind.AVM_EXCLUDE_THEN_RETRAIN, avm_manifests=('data/avm.jsonl',),
                              target_manifest='data/target.jsonl', target_set='MIX', features_dir='feats',
                              model={'speaker_placement': 'SE_DEC'})
    path = save_regime(tmp_path / 'cfg' / 'regime.json', original)
    loaded = load_regime(path)
    assert loaded.regime is RegimeKind.AVM_EXCLUDE_THEN_RETRAIN
    assert loaded.target_set is UtteranceLanguage.MIX
    assert loaded.avm_manifests == (str((tmp_path / 'cfg' / 'data' / 'avm.jsonl').resolve()),)
    assert loaded.features_dir == str((tmp_path / 'cfg' / 'feats').resolve())
    assert loaded.freeze_groups == RETRAIN_FROZEN_GROUPS
    assert loaded.model_config().speaker_placement is SpeakerPlacement.SE_DEC


def test_regime_validation(tmp_path):
    payload = regime().to_dict()
    with pytest.raises(ConfigurationError):
        TrainingRegime.from_dict({**payload, 'schema_version': 2})
    with pytest.raises(ConfigurationError):
        TrainingRegime.from_dict({**payload, 'epochs': 3})
    with pytest.raises(ConfigurationError):
        TrainingRegime.from_dict({**payload, 'freeze_groups': ['vocoder']})
    with pytest.raises(ConfigurationError):
        TrainingRegime(regime=RegimeKind.AVM_POOLED, avm_manifests=())
    (tmp_path / 'broken.json').write_text('{')
    with pytest.raises(ConfigurationError):
        load_regime(tmp_path / 'broken.json')


def test_pooled_regime_forces_unconditioned_model():
    pooled = TrainingRegime(regime=RegimeKind.AVM_POOLED, avm_manifests=('a',), model={'speaker_placement': 'SE_ENC'})
    assert pooled.model_config().speaker_placement is SpeakerPlacement.NONE


def test_manifests_per_phase():
    assert manifests_for_phase(regime(), 1) == ['avm.jsonl', 'target.jsonl']
    excluded = regime(RegimeKind.AVM_EXCLUDE_THEN_RETRAIN)
    assert manifests_for_phase(excluded, 1) == ['avm.jsonl']
    assert manifests_for_phase(excluded, 2) == ['target.jsonl']


def test_training_log_must_advance(tmp_path):
    log = TrainingLog(tmp_path / 'log.jsonl')
    fields = dict(loss=1.0, mel_loss=0.3, linear_loss=0.3, stop_loss=0.4, grad_norm=1.0, learning_rate=1e-3,
                  entropy=0.5, forward_motion=1.0)
    log.append_step(StepRecord(phase=1, step=1, **fields))
    log.append_step(StepRecord(phase=2, step=1, **fields))
    with pytest.raises(DataError):
        log.append_step(StepRecord(phase=2, step=1, **fields))
    with pytest.raises(DataError):
        log.append_step(StepRecord(phase=1, step=5, **fields))
    assert TrainingLog.read(tmp_path / 'log.jsonl').steps == log.steps


def test_sample_batch_is_seeded(make_config, make_record, man_ids, mix_ids):
    _, records = corpus(make_config, make_record, man_ids, mix_ids)
    first = sample_batch(records, 3, np.random.default_rng(1))
    second = sample_batch(records, 3, np.random.default_rng(1))
    assert [r.utterance_id for r in first] == [r.utterance_id for r in second]
    assert len({r.utterance_id for r in first}) == 3
    assert len(sample_batch(records[:2], 5, np.random.default_rng(0))) == 2


def test_training_reduces_evaluation_loss(make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids, speakers=(0,), per_speaker=2)
    params = init_parameters(config, seed=3)
    before = evaluation_loss(records, params, config)
    trainer = Trainer(config, params, Schedule(steps=50, learning_rate=1e-2, batch_size=2, seed=3))
    history = trainer.run(records, 50)
    assert [h.step for h in history] == list(range(1, 51))
    assert all(np.isfinite(h.loss) and h.grad_norm >= 0 for h in history)
    assert evaluation_loss(records, params, config) < before


def test_trainer_freezes_groups(make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids)
    params = init_parameters(config)
    frozen = parameter_digest(params, RETRAIN_FROZEN_GROUPS)
    decoder = parameter_digest(params, ['decoder'])
    trainer = Trainer(config, params, Schedule(steps=2, batch_size=2), frozen_groups=RETRAIN_FROZEN_GROUPS,
                      debug_freeze_checks=True)
    trainer.run(records, 2)
    assert parameter_digest(params, RETRAIN_FROZEN_GROUPS) == frozen
    assert parameter_digest(params, ['decoder']) != decoder


def test_trainer_refuses_empty_corpus(make_config):
    config = make_config()
    with pytest.raises(DataError):
        Trainer(config, init_parameters(config), Schedule()).run([], 1)


def test_exclude_then_retrain(tmp_path, make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids)
    avm = [r for r in records if r.speaker_id != 0]
    target = [r for r in records if r.speaker_id == 0]
    plan = regime(RegimeKind.AVM_EXCLUDE_THEN_RETRAIN, steps=3, retrain_steps=2)
    result = train_records(plan, config, avm, tmp_path, phase_two=target, debug_freeze_checks=True)

    assert [(s.phase, s.step) for s in result.log.steps] == [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)]
    assert sorted(result.phase_checkpoints) == [1, 2]
    assert result.sha256 == file_digest(result.checkpoint_path)

    avm_model = load_checkpoint(result.phase_checkpoints[1])
    initial = init_parameters(config, seed=plan.schedule.seed)
    np.testing.assert_array_equal(avm_model.params['speaker_embedding.table'][0],
                                  initial['speaker_embedding.table'].data[0])
    assert parameter_digest(avm_model.tensors(), RETRAIN_FROZEN_GROUPS) == \
        parameter_digest(result.params, RETRAIN_FROZEN_GROUPS)
    assert avm_model.metadata['provenance']['phase'] == 1

    lines = [json.loads(line) for line in (tmp_path / 'train_log.jsonl').read_text().splitlines()]
    assert [line['event'] for line in lines].count('checkpoint') == 2


def test_exclusion_violation_fails_before_training(tmp_path, make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids)
    with pytest.raises(ConfigurationError) as info:
        train_records(regime(RegimeKind.AVM_EXCLUDE_THEN_RETRAIN), config, records, tmp_path)
    assert 'target speaker 0' in str(info.value)
    assert not (tmp_path / 'train_log.jsonl').exists()


def test_exclusion_without_target_data_keeps_avm(tmp_path, make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids, speakers=(1, 2))
    result = train_records(regime(RegimeKind.AVM_EXCLUDE_THEN_RETRAIN, steps=1), config, records, tmp_path)
    assert list(result.phase_checkpoints) == [1]


def test_pooled_training_and_periodic_checkpoints(tmp_path, make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids)
    normalizer = FeatureNormalizer(0.0, 1.0, 0.0, 1.0)
    result = train_records(regime(RegimeKind.AVM_POOLED, steps=4, checkpoint_every=2), config, records, tmp_path,
                           normalizer=normalizer)
    assert result.checkpoint.config.speaker_placement is SpeakerPlacement.NONE
    assert [c.step for c in result.log.checkpoints] == [2, 4]
    assert load_checkpoint(result.checkpoint_path).metadata['normalizer'] == normalizer.to_dict()


def test_speaker_outside_table_is_rejected(tmp_path, make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids, speakers=(0, 3))
    with pytest.raises(ConfigurationError):
        train_records(regime(), config, records, tmp_path)


def test_training_is_reproducible(tmp_path, make_config, make_record, man_ids, mix_ids):
    config, records = corpus(make_config, make_record, man_ids, mix_ids)
    digests = [train_records(regime(steps=2), config, records, tmp_path / str(k)).sha256 for k in range(2)]
    assert digests[0] == digests[1]


def test_attention_diagnostics():
    diagonal = attention_diagnostics(np.eye(4))
    assert diagonal.entropy == pytest.approx(0.0)
    assert diagonal.forward_motion == 1.0
    uniform = attention_diagnostics(np.full((3, 5), 0.2))
    assert uniform.entropy == pytest.approx(np.log(5))
    backwards = attention_diagnostics(np.eye(3)[::-1])
    assert backwards.forward_motion == 0.0
    assert attention_diagnostics([]).as_dict() == {'entropy': 0.0, 'forward_motion': 0.0}


def test_select_corpus_is_seeded_and_order_independent(make_config, make_record, man_ids, mix_ids):
    _, records = corpus(make_config, make_record, man_ids, mix_ids, per_speaker=6)
    chosen = select_corpus(records, UtteranceLanguage.MIX, 2, target_speaker=0, seed=5)
    shuffled = select_corpus(records[::-1], UtteranceLanguage.MIX, 2, target_speaker=0, seed=5)
    assert [r.utterance_id for r in chosen] == [r.utterance_id for r in shuffled]
    assert all(r.speaker_id == 0 and r.language is UtteranceLanguage.MIX for r in chosen)
    with pytest.raises(DataError) as info:
        select_corpus(records, UtteranceLanguage.ENG, 1, target_speaker=0, seed=5)
    assert 'only 0 available' in str(info.value)
    with pytest.raises(ConfigurationError):
        select_corpus(records, UtteranceLanguage.MAN, -1, target_speaker=0, seed=5)


def test_build_corpus_regime_writes_tagged_manifest(tmp_path, inventory, make_config, make_record, man_ids,
                                                     mix_ids):
    _, records = corpus(make_config, make_record, man_ids, mix_ids, per_speaker=4)
    path = build_corpus_regime(UtteranceLanguage.MAN, 2, records, 1, tmp_path / 'man.jsonl', inventory, seed=1)
    loaded = load_manifest(path, inventory, check_audio=False)
    assert len(loaded) == 2
    assert all(r.provenance['corpus'] == 'CORPUS-MAN' for r in loaded)
    sidecar = json.loads((tmp_path / 'man.jsonl.provenance.json').read_text())
    assert sidecar['utterances'] == [r.utterance_id for r in loaded]
    empty = build_corpus_regime(UtteranceLanguage.ENG, 0, records, 1, tmp_path / 'eng.jsonl', inventory)
    assert empty.read_text() == ''


def test_random_phoneme_strings_have_requested_language(inventory):
    from mixtts.frontend.inventory import parse_phoneme_string
    from mixtts.frontend.manifest import classify_language

    rng = np.random.default_rng(0)
    for language in UtteranceLanguage:
        for _ in range(5):
            ids = parse_phoneme_string(random_phoneme_string(language, rng), inventory)
            assert classify_language(ids, inventory) is language


def test_synthetic_corpus_is_deterministic(tmp_path, inventory):
    spec = SyntheticCorpusSpec(n_speakers=2, utterances_per_language=1, target_speaker=1, sample_rate=8000)
    first = generate_synthetic_corpus(tmp_path / 'a', inventory, spec)
    second = generate_synthetic_corpus(tmp_path / 'b', inventory, spec)
    records = load_manifest(first, inventory)
    assert [r.utterance_id for r in records] == ['spk0_man_000', 'spk0_eng_000', 'spk1_man_000',
                                                 'spk1_eng_000', 'spk1_mix_000']
    assert first.read_text() == second.read_text()
    for record in records:
        clip = wav_read(record.audio_path)
        assert clip.sample_rate == 8000
        assert np.max(np.abs(clip.samples)) > 0.1
        assert record.audio_path.read_bytes() == (tmp_path / 'b' / 'wav' / record.audio_path.name).read_bytes()
    with pytest.raises(ConfigurationError):
        SyntheticCorpusSpec(n_speakers=2, target_speaker=2)


def test_load_corpus_fits_normalizer_and_needs_cached_features(tmp_path, inventory, man_ids):
    spec = SyntheticCorpusSpec(n_speakers=1, utterances_per_language=1, target_speaker=0, sample_rate=8000)
    manifest = generate_synthetic_corpus(tmp_path / 'corpus', inventory, spec)
    records = load_manifest(manifest, inventory)
    rng = np.random.default_rng(0)
    for record in records[:-1]:
        write_features(feature_path(tmp_path / 'feats', record.utterance_id),
                       FeaturePair(rng.normal(size=(4, 3)), rng.normal(size=(4, 5))))
    with pytest.raises(DataError):
        load_corpus([manifest], inventory, tmp_path / 'feats')
    write_features(feature_path(tmp_path / 'feats', records[-1].utterance_id),
                   FeaturePair(rng.normal(size=(4, 3)), rng.normal(size=(4, 5))))
    loaded, normalizer = load_corpus([manifest], inventory, tmp_path / 'feats', deterministic=False, workers=2)
    assert [r.utterance_id for r in loaded] == [r.utterance_id for r in records]
    assert min(r.features.mel.min() for r in loaded) == pytest.approx(0.0, abs=1e-6)
    assert max(r.features.mel.max() for r in loaded) == pytest.approx(1.0, abs=1e-6)
    assert normalizer.mel_min < normalizer.mel_max


@pytest.mark.slow
def test_train_from_synthetic_corpus(tmp_path, inventory, runtime):
    from mixtts.dsp.features import extract_features

    spec = SyntheticCorpusSpec(n_speakers=2, utterances_per_language=1, target_speaker=0)
    manifest = generate_synthetic_corpus(tmp_path / 'corpus', inventory, spec)
    records = load_manifest(manifest, inventory)
    for record in records:
        write_features(feature_path(tmp_path / 'feats', record.utterance_id),
                       extract_features(wav_read(record.audio_path)))
    plan = TrainingRegime(regime=RegimeKind.AVM_SPK_EMB_INCLUDE_TARGET, avm_manifests=(str(manifest),),
                          features_dir=str(tmp_path / 'feats'), schedule=Schedule(steps=2, batch_size=2))
    config = plan.model_config().with_overrides(
        embedding_dim=8, encoder_dim=8, decoder_dim=12, speaker_count=2, speaker_dim=4, prenet_dims=(8, 6),
        attention_dim=6, encoder_conv_layers=1, conv_kernel=3, postnet_dim=8, speaker_placement='SE_DEC')
    result = train(plan, config, inventory, tmp_path / 'run')
    assert result.checkpoint.metadata['inventory'] == inventory.to_dict()
    assert len(result.log.steps) == 2


def test_train_reads_each_feature_file_once(tmp_path, inventory, make_config, monkeypatch):
    import mixtts.training.data as data
    import mixtts.training.trainer as trainer

    spec = SyntheticCorpusSpec(n_speakers=2, utterances_per_language=1, target_speaker=0, sample_rate=8000)
    manifest = generate_synthetic_corpus(tmp_path / 'corpus', inventory, spec)
    lines = [line for line in manifest.read_text().splitlines() if line.strip()]
    records = load_manifest(manifest, inventory)
    avm = manifest.parent / 'avm.jsonl'
    target = manifest.parent / 'target.jsonl'
    avm.write_text('\n'.join(line for line, r in zip(lines, records) if r.speaker_id != 0) + '\n')
    target.write_text('\n'.join(line for line, r in zip(lines, records) if r.speaker_id == 0) + '\n')
    rng = np.random.default_rng(0)
    for record in records:
        write_features(feature_path(tmp_path / 'feats', record.utterance_id),
                       FeaturePair(rng.normal(size=(4, 3)), rng.normal(size=(4, 5))))

    fetched = []
    real_fetch = data._fetch
    monkeypatch.setattr(data, '_fetch', lambda d, r: fetched.append(r.utterance_id) or real_fetch(d, r))
    captured = {}
    monkeypatch.setattr(trainer, 'train_records',
                        lambda plan, config, phase_one, out_dir, **kw: captured.update(phase_one=phase_one, **kw))

    plan = TrainingRegime(regime=RegimeKind.AVM_EXCLUDE_THEN_RETRAIN, avm_manifests=(str(avm),),
                          target_manifest=str(target), target_speaker_id=0, features_dir=str(tmp_path / 'feats'))
    train(plan, make_config(), inventory, tmp_path / 'run')

    assert sorted(fetched) == sorted(r.utterance_id for r in records)
    assert {r.speaker_id for r in captured['phase_one']} == {1}
    assert {r.speaker_id for r in captured['phase_two']} == {0}
    assert len(captured['phase_one']) + len(captured['phase_two']) == len(records)
    assert captured['normalizer'].mel_min < captured['normalizer'].mel_max
