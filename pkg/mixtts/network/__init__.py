"""Encoder-decoder acoustic model with speaker conditioning and phoneme-aware attention."""
from mixtts.network.attention import AttentionStepTrace, attention_step  # noqa: F401
from mixtts.network.checkpoint import Checkpoint, load_checkpoint, save_checkpoint  # noqa: F401
from mixtts.network.config import AttentionVariant, ModelConfig, SpeakerPlacement  # noqa: F401
from mixtts.network.decoder import decode_step, postnet  # noqa: F401
from mixtts.network.encoder import EncodedUtterance, encode  # noqa: F401
from mixtts.network.parameters import (  # noqa: F401
    PARAMETER_GROUPS,
    RETRAIN_FROZEN_GROUPS,
    init_parameters,
    parameter_digest,
    parameter_shapes,
)
from mixtts.network.tacotron import (  # noqa: F401
    ForwardResult,
    LossBreakdown,
    SynthesisResult,
    compute_loss,
    forward_teacher_forced,
    synthesize,
)
from mixtts.network.verification import end_to_end_gradcheck, gradcheck_grid  # noqa: F401
