"""Streaming sequence-transducer toolkit.

Implements the transducer alignment-lattice loss with forward-backward
dynamic programming, a sequence-level emission regularizer that trades
recognition accuracy against emission latency, a tiny hand-differentiated
streaming model, greedy decoding with emission timestamps, and the
latency/error metrics to measure the trade-off.
"""

from .datagen import CorpusConfig, Utterance, generate, load_corpus, save_corpus
from .decoder import EmissionTrace, greedy_decode
from .fastemit import (
    FastEmitConfig,
    fastemit_gradients,
    predict_label_mass,
    regularized_loss_diagnostic,
)
from .lattice import (
    BLANK_ID,
    AlignmentPath,
    JointLattice,
    eos_token_id,
    lattice_from_logits,
    path_probability,
    validate_labels,
)
from .transducer import (
    AlphaBetaTables,
    LossGradients,
    backward,
    diagonal_log_likelihoods,
    forward,
    gradients,
    loss,
    node_posterior,
)
from .metrics import (
    LatencyReport,
    build_latency_report,
    edit_statistics,
    ep_latency,
    percentile,
    pr_latency,
    token_error_rate,
)
from .model import (
    AdamState,
    ModelConfig,
    NumericalError,
    OptimizerConfig,
    adam_init,
    adam_step,
    backprop,
    clip_by_global_norm,
    encode,
    init_parameters,
    joint,
    load_checkpoint,
    model_forward,
    predict,
    save_checkpoint,
)

__version__ = "0.1.0"
