"""Training regimes, the optimisation loop and corpus preparation."""
from mixtts.training.corpus import build_corpus_regime, select_corpus  # noqa: F401
from mixtts.training.data import feature_path, load_corpus, load_corpus_by_manifest  # noqa: F401
from mixtts.training.diagnostics import AttentionDiagnostics, attention_diagnostics  # noqa: F401
from mixtts.training.regime import RegimeKind, Schedule, TrainingRegime, load_regime, save_regime  # noqa: F401
from mixtts.training.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus  # noqa: F401
from mixtts.training.trainer import (  # noqa: F401
    StepRecord,
    Trainer,
    TrainingLog,
    TrainingResult,
    evaluation_loss,
    train,
    train_records,
)
