"""The ``mixtts`` command line.

Progress and logs go to stderr; every command prints one JSON document with
its results to stdout and writes ``<command>.resolved.json`` into the output
directory so ``mixtts replay`` can re-run it.
"""
import functools
import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
from tqdm import tqdm

from mixtts import Runtime, create_runtime
from mixtts.analysis import (
    EmbeddingSource,
    TsneConfig,
    dump_embeddings,
    language_separation_score,
    plot_alignment,
    plot_embedding,
    tsne,
)
from mixtts.database import get_lineage, get_run
from mixtts.dsp.audio import wav_read, wav_write
from mixtts.dsp.features import FeatureNormalizer, extract_features, read_feature_header, write_features
from mixtts.errors import ConfigurationError, DataError, FeatureCacheError, MixTTSError, VerificationError
from mixtts.frontend.inventory import PhonemeInventory, default_inventory, parse_phoneme_string
from mixtts.frontend.manifest import UtteranceLanguage, load_manifest, manifest_stats
from mixtts.network.checkpoint import Checkpoint, load_checkpoint
from mixtts.network.config import AttentionVariant, SpeakerPlacement
from mixtts.network.encoder import check_speaker
from mixtts.network.tacotron import synthesize
from mixtts.network.verification import gradcheck_grid
from mixtts.training.corpus import build_corpus_regime
from mixtts.training.data import feature_path
from mixtts.training.diagnostics import attention_diagnostics
from mixtts.training.regime import RegimeKind, TrainingRegime, load_regime, save_regime
from mixtts.training.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus
from mixtts.training.trainer import train

logger = logging.getLogger(__name__)

RESOLVED_SUFFIX = '.resolved.json'


@dataclass
class GlobalOptions:
    env: Optional[str] = None
    seed: Optional[int] = None
    deterministic: Optional[bool] = None
    precision: Optional[str] = None
    out_dir: str = 'out'

    def overrides(self) -> Dict[str, Any]:
        values = {'SEED': self.seed, 'DETERMINISTIC': self.deterministic, 'PRECISION': self.precision}
        return {key: value for key, value in values.items() if value is not None}


def validate_output_path(runtime: Runtime, value: str) -> Path:
    """Resolve ``value`` under the output directory; paths escaping it are rejected."""
    path = Path(value)
    path = (path if path.is_absolute() else runtime.out_dir / path).resolve()
    if path != runtime.out_dir and runtime.out_dir not in path.parents:
        raise ConfigurationError(f'output {value} lies outside --out-dir {runtime.out_dir}')
    return path


def validate_inventory(value: Optional[str]) -> PhonemeInventory:
    if value is None:
        return default_inventory()
    try:
        return PhonemeInventory.load(value)
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, MixTTSError):
            raise
        raise ConfigurationError(f'cannot read inventory {value}: {exc}') from exc


def _absolute(params: Dict[str, Any], keys: Tuple[str, ...]) -> Dict[str, Any]:
    resolved = dict(params)
    for key in keys:
        if resolved.get(key) is not None:
            resolved[key] = str(Path(resolved[key]).resolve())
    return resolved


def _start(ctx: click.Context, command: str, inputs: Tuple[str, ...] = ()) -> Runtime:
    """Create the runtime and write the resolved configuration of this invocation."""
    options: GlobalOptions = ctx.obj
    runtime = create_runtime(options.env, Path(options.out_dir), options.overrides())
    resolved = {
        'command': command,
        'global': {**asdict(options), 'env': runtime.name, 'out_dir': str(runtime.out_dir)},
        'runtime': {'seed': runtime.seed, 'deterministic': runtime.deterministic,
                    'precision': runtime.settings.PRECISION},
        'params': _absolute(ctx.params, inputs),
        'settings': runtime.settings.as_dict(),
    }
    path = runtime.out_dir / f'{command}{RESOLVED_SUFFIX}'
    path.write_text(json.dumps(resolved, indent=2, sort_keys=True, default=str) + '\n')
    return runtime


def _emit(payload: Dict[str, Any]) -> None:
    click.echo(json.dumps(payload, sort_keys=True, default=str))


def handle_errors(fn):
    """Map library errors to exit codes: 2 configuration, 3 data, 4 numeric, 1 anything else."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MixTTSError as exc:
            logger.error('%s: %s', type(exc).__name__, exc)
            click.echo(f'error: {exc}', err=True)
            click.get_current_context().exit(exc.exit_code)
        except OSError as exc:
            logger.error('I/O error: %s', exc)
            click.echo(f'error: {exc}', err=True)
            click.get_current_context().exit(1)
    return wrapper


def _checkpoint_context(checkpoint: Checkpoint) -> Tuple[PhonemeInventory, Optional[FeatureNormalizer]]:
    metadata = checkpoint.metadata or {}
    inventory = PhonemeInventory.from_dict(metadata['inventory']) if metadata.get('inventory') \
        else default_inventory()
    normalizer = FeatureNormalizer.from_dict(metadata['normalizer']) if metadata.get('normalizer') else None
    return inventory, normalizer


@click.group()
@click.option('--env', type=click.Choice(['development', 'production', 'testing']), default=None,
              help='Configuration class (defaults to MIXTTS_ENV).')
@click.option('--seed', type=int, default=None, help='Global random seed.')
@click.option('--deterministic/--no-deterministic', default=None, help='Ordered single-worker loading.')
@click.option('--precision', type=click.Choice(['f32', 'f64']), default=None, help='Tensor precision.')
@click.option('--out-dir', type=click.Path(file_okay=False), default='out', show_default=True,
              help='Every output of the command goes under this directory.')
@click.version_option(package_name='mixlingual-tts')
@click.pass_context
def cli(ctx, env, seed, deterministic, precision, out_dir):
    """Mixed-lingual Mandarin/English speech synthesis experiments."""
    ctx.obj = GlobalOptions(env=env, seed=seed, deterministic=deterministic, precision=precision, out_dir=out_dir)


# PUBLIC_INTERFACE
@cli.command('features')
@click.option('--manifest', required=True, type=click.Path(dir_okay=False))
@click.option('--out', default='features', show_default=True, help='Feature cache directory (under --out-dir).')
@click.option('--inventory', default=None, type=click.Path(dir_okay=False), help='Inventory JSON.')
@click.option('--no-trim', is_flag=True, default=False, help='Skip silence trimming.')
@click.pass_context
@handle_errors
def features_command(ctx, manifest, out, inventory, no_trim):
    """Trim, extract and cache mel/linear features for every manifest entry."""
    runtime = _start(ctx, 'features', inputs=('manifest', 'inventory'))
    cfg = runtime.audio_config
    cache_dir = validate_output_path(runtime, out)
    records = load_manifest(manifest, validate_inventory(inventory), check_audio=True)
    frames: Dict[str, int] = {}
    hits = 0
    for record in tqdm(records, desc='features', disable=not runtime.settings.SHOW_PROGRESS):
        target = feature_path(cache_dir, record.utterance_id)
        if target.exists():
            try:
                count, mel_dim, lin_dim = read_feature_header(target)
                if (mel_dim, lin_dim) == (cfg.n_mels, cfg.n_linear):
                    frames[record.utterance_id] = count
                    hits += 1
                    continue
            except FeatureCacheError as exc:
                logger.warning('recomputing %s: %s', target, exc)
        try:
            pair = extract_features(wav_read(record.audio_path, resample_to=cfg.sample_rate), cfg, trim=not no_trim)
        except DataError as exc:
            raise DataError(f'{record.utterance_id} ({record.audio_path}): {exc}') from exc
        write_features(target, pair)
        frames[record.utterance_id] = pair.n_frames
        logger.info('%s: %d frames', record.utterance_id, pair.n_frames)
    _emit({'files': len(records), 'cache_hits': hits, 'computed': len(records) - hits,
           'frames': frames, 'features_dir': str(cache_dir)})


# PUBLIC_INTERFACE
@cli.command('train')
@click.option('--regime', 'regime_path', required=True, type=click.Path(dir_okay=False),
              help='Training regime JSON.')
@click.option('--inventory', default=None, type=click.Path(dir_okay=False))
@click.option('--debug-freeze-checks', is_flag=True, default=False,
              help='Hash frozen groups and check the excluded speaker row after every step.')
@click.pass_context
@handle_errors
def train_command(ctx, regime_path, inventory, debug_freeze_checks):
    """Train one regime and print the final checkpoint hash."""
    runtime = _start(ctx, 'train', inputs=('regime_path', 'inventory'))
    regime = load_regime(regime_path)
    if ctx.obj.seed is not None:
        regime = replace(regime, schedule=replace(regime.schedule, seed=ctx.obj.seed))
    phonemes = validate_inventory(inventory)
    config = regime.model_config()
    if config.phoneme_vocab != len(phonemes):
        raise ConfigurationError(f'model phoneme_vocab {config.phoneme_vocab} != inventory size {len(phonemes)}')
    result = train(regime, config, phonemes, runtime.out_dir, deterministic=runtime.deterministic,
                   debug_freeze_checks=debug_freeze_checks or runtime.settings.DEBUG_FREEZE_CHECKS,
                   show_progress=runtime.settings.SHOW_PROGRESS)
    _emit({
        'checkpoint': str(result.checkpoint_path),
        'sha256': result.sha256,
        'phases': {str(k): str(v) for k, v in sorted(result.phase_checkpoints.items())},
        'final_loss': result.log.steps[-1].loss if result.log.steps else None,
        'steps': len(result.log.steps),
    })


# PUBLIC_INTERFACE
@cli.command('synth')
@click.option('--checkpoint', required=True, type=click.Path(dir_okay=False))
@click.option('--phonemes', required=True, help='Phoneme string, e.g. "|MAN| n i3 h ao3".')
@click.option('--speaker', type=int, default=0, show_default=True)
@click.option('--out', default='synth.wav', show_default=True, help='WAV file (under --out-dir).')
@click.option('--max-steps', type=int, default=None)
@click.option('--griffin-lim-iters', type=int, default=None)
@click.pass_context
@handle_errors
def synth_command(ctx, checkpoint, phonemes, speaker, out, max_steps, griffin_lim_iters):
    """Synthesize a WAV plus an alignment SVG."""
    runtime = _start(ctx, 'synth', inputs=('checkpoint',))
    model = load_checkpoint(checkpoint)
    check_speaker(speaker, model.config)
    inventory, normalizer = _checkpoint_context(model)
    ids = parse_phoneme_string(phonemes, inventory)
    wav_out = validate_output_path(runtime, out)
    result = synthesize(ids, speaker, model.tensors(), model.config, normalizer=normalizer,
                        audio_config=runtime.audio_config, max_steps=max_steps,
                        griffin_lim_iters=griffin_lim_iters, seed=runtime.seed)
    if result.clip is None:
        raise DataError('synthesis produced no frames')
    wav_write(wav_out, result.clip)
    svg_out = plot_alignment(result.alignment(), wav_out.with_suffix('.alignment.svg'),
                             title=render_title(phonemes, speaker))
    _emit({'wav': str(wav_out), 'alignment': str(svg_out), 'steps': result.steps,
           'frames': int(result.mel.shape[0]), 'duration': result.clip.duration,
           'hit_max_steps': result.hit_max_steps, **attention_diagnostics(result.traces).as_dict()})


def render_title(phonemes: str, speaker: int) -> str:
    return f'speaker {speaker}: {phonemes}'


# PUBLIC_INTERFACE
@cli.command('analyze')
@click.option('--checkpoint', required=True, type=click.Path(dir_okay=False))
@click.option('--manifest', required=True, type=click.Path(dir_okay=False),
              help='Utterances whose phonemes (and encoder passes) are analysed.')
@click.option('--source', type=click.Choice(['PHONEME_EMBEDDING', 'ENCODER_OUTPUT', 'BOTH']), default='BOTH',
              show_default=True)
@click.option('--out', default='analysis', show_default=True, help='Output directory (under --out-dir).')
@click.option('--perplexity', type=float, default=15.0, show_default=True)
@click.option('--iterations', type=int, default=1000, show_default=True)
@click.option('--learning-rate', type=float, default=100.0, show_default=True)
@click.pass_context
@handle_errors
def analyze_command(ctx, checkpoint, manifest, source, out, perplexity, iterations, learning_rate):
    """Dump embeddings, run t-SNE, score language separation and plot."""
    runtime = _start(ctx, 'analyze', inputs=('checkpoint', 'manifest'))
    model = load_checkpoint(checkpoint)
    inventory, _ = _checkpoint_context(model)
    records = load_manifest(manifest, inventory, check_audio=False, n_speakers=model.config.speaker_count)
    out_dir = validate_output_path(runtime, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = TsneConfig(perplexity=perplexity, n_iters=iterations, learning_rate=learning_rate, seed=runtime.seed)
    sources = list(EmbeddingSource) if source == 'BOTH' else [EmbeddingSource(source)]
    report = {}
    for kind in sources:
        dump = dump_embeddings(model, records, kind, inventory)
        stem = kind.value.lower()
        csv_path = dump.write_csv(out_dir / f'{stem}.csv')
        points = tsne(dump, cfg)
        svg_path = plot_embedding(points, dump.languages, out_dir / f'{stem}.svg', labels=dump.phonemes,
                                  title=kind.value.replace('_', ' ').lower())
        report[kind.value] = {'points': len(dump), 'separation': language_separation_score(dump),
                              'missing': dump.missing, 'csv': str(csv_path), 'plot': str(svg_path)}
    if len(report) == 2:
        encoder = report[EmbeddingSource.ENCODER_OUTPUT.value]['separation']
        table = report[EmbeddingSource.PHONEME_EMBEDDING.value]['separation']
        report['encoder_separates_more'] = encoder > table
        if encoder <= table:
            logger.warning('encoder outputs separate languages no better than phoneme embeddings '
                           '(%.4f <= %.4f, seed %d)', encoder, table, runtime.seed)
    _emit(report)


# PUBLIC_INTERFACE
@cli.command('gradcheck')
@click.option('--variant', 'variants', multiple=True, type=click.Choice([v.value for v in AttentionVariant]),
              help='Attention variants to check (default: all).')
@click.option('--placement', 'placements', multiple=True,
              type=click.Choice([p.value for p in SpeakerPlacement]),
              help='Speaker placements to check (default: all).')
@click.option('--tolerance', type=float, default=1e-3, show_default=True)
@click.option('--report', default='gradcheck.txt', show_default=True, help='Text report (under --out-dir).')
@click.pass_context
@handle_errors
def gradcheck_command(ctx, variants, placements, tolerance, report):
    """Finite-difference check of the end-to-end loss over the variant x placement grid."""
    runtime = _start(ctx, 'gradcheck')
    outcomes = gradcheck_grid(variants=[AttentionVariant(v) for v in variants] or tuple(AttentionVariant),
                              placements=[SpeakerPlacement(p) for p in placements] or tuple(SpeakerPlacement),
                              seed=runtime.seed, tolerance=tolerance)
    report_path = validate_output_path(runtime, report)
    report_path.write_text('\n\n'.join(o.report.to_table() for o in outcomes) + '\n')
    failed = [o for o in outcomes if not o.report.passed]
    _emit({'report': str(report_path), 'grid': [o.as_dict() for o in outcomes], 'passed': not failed})
    if failed:
        raise VerificationError(f'{len(failed)} of {len(outcomes)} configurations failed: '
                                + ', '.join(o.report.label for o in failed))


# PUBLIC_INTERFACE
@cli.command('synth-corpus')
@click.option('--out', default='corpus', show_default=True, help='Corpus directory (under --out-dir).')
@click.option('--speakers', type=int, default=3, show_default=True)
@click.option('--per-language', type=int, default=4, show_default=True,
              help='Utterances per speaker and language.')
@click.option('--target-speaker', type=int, default=0, show_default=True)
@click.option('--sample-rate', type=int, default=None, help='Defaults to SAMPLE_RATE.')
@click.pass_context
@handle_errors
def synth_corpus_command(ctx, out, speakers, per_language, target_speaker, sample_rate):
    """Render a synthetic two-language multi-speaker corpus."""
    runtime = _start(ctx, 'synth-corpus')
    spec = SyntheticCorpusSpec(n_speakers=speakers, utterances_per_language=per_language,
                               target_speaker=target_speaker, seed=runtime.seed,
                               sample_rate=sample_rate or runtime.settings.SAMPLE_RATE)
    inventory = default_inventory()
    manifest = generate_synthetic_corpus(validate_output_path(runtime, out), inventory, spec)
    _emit({'manifest': str(manifest),
           **manifest_stats(load_manifest(manifest, inventory, check_audio=True))})


# PUBLIC_INTERFACE
@cli.command('build-regime')
@click.option('--manifest', required=True, type=click.Path(dir_okay=False),
              help='Manifest holding the target speaker utterances.')
@click.option('--target-set', type=click.Choice([lang.value for lang in UtteranceLanguage]), required=True)
@click.option('--size', type=int, required=True)
@click.option('--target-speaker', type=int, default=0, show_default=True)
@click.option('--out', default=None, help='Corpus manifest (under --out-dir); defaults to corpus-<set>.jsonl.')
@click.option('--avm-manifest', 'avm_manifests', multiple=True, type=click.Path(dir_okay=False),
              help='AVM manifests; with --regime-out a regime file is written as well.')
@click.option('--kind', type=click.Choice([k.value for k in RegimeKind]),
              default=RegimeKind.AVM_EXCLUDE_THEN_RETRAIN.value, show_default=True)
@click.option('--features-dir', default=None, type=click.Path(file_okay=False))
@click.option('--regime-out', default=None, help='Regime JSON (under --out-dir).')
@click.option('--inventory', default=None, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def build_regime_command(ctx, manifest, target_set, size, target_speaker, out, avm_manifests, kind,
                         features_dir, regime_out, inventory):
    """Select a CORPUS-MAN/ENG/MIX subset and optionally write a regime for it."""
    runtime = _start(ctx, 'build-regime', inputs=('manifest', 'features_dir'))
    phonemes = validate_inventory(inventory)
    records = load_manifest(manifest, phonemes, check_audio=False)
    target = UtteranceLanguage(target_set)
    corpus_out = validate_output_path(runtime, out or f'corpus-{target.value.lower()}.jsonl')
    written = build_corpus_regime(target, size, records, target_speaker, corpus_out, phonemes,
                                  seed=runtime.seed, source=str(Path(manifest).resolve()))
    result = {'manifest': str(written), 'target_set': target.value, 'size': size}
    if regime_out is not None:
        if not avm_manifests:
            raise ConfigurationError('--regime-out needs at least one --avm-manifest')
        regime = TrainingRegime(
            regime=RegimeKind(kind),
            avm_manifests=tuple(str(Path(m).resolve()) for m in avm_manifests),
            target_speaker_id=target_speaker,
            target_manifest=str(written),
            target_set=target,
            features_dir=str(Path(features_dir).resolve()) if features_dir else None,
            name=f'{kind.lower()}-{target.value.lower()}-{size}',
        )
        result['regime'] = str(save_regime(validate_output_path(runtime, regime_out), regime))
    _emit(result)


# PUBLIC_INTERFACE
@cli.command('lineage')
@click.option('--run-id', type=int, required=True)
@click.pass_context
@handle_errors
def lineage_command(ctx, run_id):
    """Print a training run and its checkpoint lineage from the run registry."""
    _start(ctx, 'lineage')
    run = get_run(run_id)
    if run is None:
        raise DataError(f'no training run with id {run_id}')
    _emit({
        'run': {'id': run.id, 'name': run.name, 'regime': run.regime, 'seed': run.seed, 'status': run.status,
                'created_at': run.created_at, 'finished_at': run.finished_at},
        'checkpoints': [{'phase': c.phase, 'step': c.step, 'sha256': c.sha256, 'path': c.path, 'loss': c.loss}
                        for c in get_lineage(run)],
    })


# PUBLIC_INTERFACE
@cli.command('replay')
@click.argument('resolved', type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@handle_errors
def replay_command(ctx, resolved):
    """Re-run a command from its resolved-config JSON."""
    try:
        payload = json.loads(Path(resolved).read_text())
        command = cli.commands[payload['command']]
        ctx.obj = GlobalOptions(**payload['global'])
        params = payload['params']
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigurationError(f'{resolved} is not a resolved configuration: {exc}') from exc
    if command is replay_command:
        raise ConfigurationError('cannot replay a replay')
    logger.info('replaying %s with %s', payload['command'], asdict(ctx.obj))
    ctx.invoke(command, **params)
