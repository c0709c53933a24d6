"""Finite-difference verification suite for the analytic gradient.

Builds small random episodes, evaluates the analytic gradient and central
differences at a perturbed prototype matrix, and reports the worst
relative disagreement over entries that are meaningfully nonzero.
"""

from dataclasses import replace

import numpy as np

from .inference import ClassifierState, init_novel_prototypes, snapshot_old_predictions
from .objective import LossWeights, finite_diff_grad, grad_total
from .prior import estimate_prior, oracle_prior, uniform_prior
from .core import forward
from .taskgen import SyntheticConfig, gen_task

REL_TOLERANCE = 1e-4
GATE = 1e-8


def _small_config(rng):
    d = int(rng.integers(8, 17))
    n_base = int(rng.integers(2, 5))
    n_novel = int(rng.integers(1, 4))
    side_h = int(rng.integers(4, 9))
    side_w = int(rng.integers(4, 9))
    while side_h * side_w > 64:
        side_w -= 1
    return SyntheticConfig(
        d=d,
        n_base=n_base,
        n_novel=n_novel,
        grid=(side_h, side_w),
        shots=int(rng.integers(1, 4)),
        separation=float(rng.uniform(3.0, 8.0)),
        background_fraction=float(rng.uniform(0.3, 0.7)),
        seed=int(rng.integers(0, 2**31)),
    )


def check_one(task, classifier, rng, step=1e-5, cosine=False):
    """Max gated relative error between analytic and FD gradients for one task."""
    state = ClassifierState.create(classifier, init_novel_prototypes(task))
    theta = state.concat() + 0.25 * rng.standard_normal(state.concat().shape)
    old = snapshot_old_predictions(state, task.query, cosine=cosine)

    kind = rng.integers(0, 3)
    if kind == 0:
        prior = uniform_prior(task.partition)
    elif kind == 1:
        prior = oracle_prior(task.query_labels, task.partition)
    else:
        prior = estimate_prior(forward(task.query, theta, cosine=cosine))

    weights = LossWeights(
        alpha=float(rng.uniform(0.3, 3.0)),
        beta=float(rng.uniform(0.3, 3.0)),
    )
    feats = [f for f, _ in task.support]
    from .labels import encode_labels

    labels = [encode_labels(m, task.partition) for _, m in task.support]
    args = (feats, labels, task.query, prior, old, weights, theta, task.partition)
    analytic = grad_total(*args, cosine=cosine)
    fd = finite_diff_grad(*args, step=step, cosine=cosine)

    denom = np.maximum(np.abs(analytic), np.abs(fd))
    mask = denom > GATE
    if not np.any(mask):
        return 0.0
    rel = np.abs(analytic - fd)[mask] / denom[mask]
    return float(rel.max())


def run_suite(n_tasks=100, seed=2024, step=1e-5):
    """Run the whole verification suite; returns (max_rel_error, per_task)."""
    rng = np.random.default_rng(seed)
    per_task = []
    for i in range(n_tasks):
        cfg = _small_config(rng)
        task, classifier, _ = gen_task(cfg)
        cosine = i % 4 == 3
        per_task.append(check_one(task, classifier, rng, step=step, cosine=cosine))
    return max(per_task), per_task
