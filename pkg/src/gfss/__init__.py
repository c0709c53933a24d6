"""Generalized few-shot segmentation inference engine.

Optimizes an augmented prototype classifier over frozen per-pixel
features with an information-maximization objective plus knowledge
distillation, and scores predictions with the standard class-group mIoU
aggregates.
"""

from .core import (
    IGNORE_LABEL,
    ClassPartition,
    FeatureMap,
    cross_entropy,
    entropy_rows,
    forward,
    kl_divergence,
    marginal,
    softmax_rows,
)
from .labels import OneHotMap, argmax_decode, encode_labels, project_new2old, project_support
from .objective import (
    LossBreakdown,
    LossWeights,
    finite_diff_grad,
    grad_total,
    loss_kd,
    loss_marginal_kl,
    loss_query_entropy,
    loss_total,
    loss_xent,
)
from .prior import PriorPolicy, estimate_prior, maybe_update, oracle_prior, uniform_prior
from .inference import (
    ClassifierState,
    GfssTask,
    InferenceTrace,
    SolverConfig,
    init_novel_prototypes,
    predict,
    run_diam,
    snapshot_old_predictions,
)
from .evaluation import ConfusionAccumulator, GfssScores, aggregate_runs, scores
from .baselines import FusionConfig, ablation_preset, bam_aggregate, bam_fuse
from .taskgen import SyntheticConfig, gen_suite, gen_task
from .taskio import read_task, write_task

__version__ = "0.1.0"
