"""The adaptation loop: novel-prototype imprinting, the old-prediction
snapshot, and plain gradient descent on the augmented classifier.

One task is strictly sequential (each step depends on the previous
prototypes); distinct tasks are independent and can run in parallel, each
on its own state copy.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .core import IGNORE_LABEL, ClassPartition, FeatureMap, forward, logits
from .errors import DivergenceError, ShapeError, TaskError
from .labels import argmax_decode, encode_labels
from .objective import (
    LossBreakdown,
    LossWeights,
    _feat_array,
    _query_dprob,
    _support_dprob,
    _weight_grad,
    loss_total,
)
from .prior import PriorPolicy, maybe_update, oracle_prior, uniform_prior


@dataclass(frozen=True)
class ClassifierState:
    """Base + novel prototype rows plus the immutable load-time snapshot.

    ``theta_base_snapshot`` is the base classifier exactly as loaded; it
    feeds the old-prediction distillation target and must never change.
    """

    theta_base: np.ndarray
    theta_novel: np.ndarray
    theta_base_snapshot: np.ndarray

    def __post_init__(self):
        if self.theta_base.ndim != 2 or self.theta_novel.ndim != 2:
            raise ShapeError("prototype matrices must be 2-D")
        if self.theta_base.shape[1] != self.theta_novel.shape[1]:
            raise ShapeError("base and novel prototype dims differ")
        if self.theta_base_snapshot.shape != self.theta_base.shape:
            raise ShapeError("snapshot shape differs from theta_base")
        self.theta_base_snapshot.setflags(write=False)

    @classmethod
    def create(cls, base_weights, novel_weights):
        base = np.array(base_weights, dtype=np.float64)
        novel = np.array(novel_weights, dtype=np.float64)
        return cls(
            theta_base=base,
            theta_novel=novel,
            theta_base_snapshot=base.copy(),
        )

    @property
    def dim(self):
        return self.theta_base.shape[1]

    def concat(self):
        return np.vstack([self.theta_base, self.theta_novel])


@dataclass(frozen=True)
class SolverConfig:
    """Adaptation hyperparameters; the defaults are the reference ones
    (lr 1.25e-3, 100 iterations, alpha = beta = 100, self-estimated prior
    updated at iterations 0 and 10, base rows optimized)."""

    learning_rate: float = 1.25e-3
    iterations: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    prior_policy: PriorPolicy = field(default_factory=PriorPolicy)
    freeze_base: bool = False
    seed: int = 0
    cosine: bool = False
    temperature: float = 10.0


@dataclass(frozen=True)
class GfssTask:
    """One episode: novel-only-annotated support shots, a query image,
    optional held-out query labels (scoring and oracle prior only)."""

    support: tuple
    query: FeatureMap
    partition: ClassPartition
    query_labels: np.ndarray = None

    def __post_init__(self):
        if len(self.support) < 1:
            raise TaskError("support set is empty")
        k = self.partition.n_classes
        ns = self.partition.novel_start
        d = self.query.dim
        seen = set()
        for feats, mask in self.support:
            if feats.dim != d:
                raise ShapeError("support feature dim differs from query")
            m = np.asarray(mask).ravel()
            if m.shape[0] != feats.n_pixels:
                raise ShapeError("support mask size differs from its features")
            vals = np.unique(m)
            vals = vals[vals != IGNORE_LABEL]
            if vals.size and (vals.min() < 0 or vals.max() >= k):
                raise TaskError(f"support label {int(vals.max())} out of range")
            base_like = vals[(vals > 0) & (vals < ns)]
            if base_like.size:
                raise TaskError(
                    f"support mask contains base class {int(base_like[0])}; "
                    "only background and novel labels are allowed"
                )
            seen.update(int(v) for v in vals[vals >= ns])
        missing = [c for c in range(ns, k) if c not in seen]
        if missing:
            raise TaskError(f"novel class {missing[0]} absent from every support mask")
        if self.query_labels is not None:
            q = np.asarray(self.query_labels).ravel()
            if q.shape[0] != self.query.n_pixels:
                raise ShapeError("query labels size differs from query features")
            vals = np.unique(q)
            vals = vals[vals != IGNORE_LABEL]
            if vals.size and (vals.min() < 0 or vals.max() >= k):
                raise TaskError(f"query label {int(vals.max())} out of range")


@dataclass
class InferenceTrace:
    """Per-iteration loss breakdowns (iterations + 1 entries, index 0
    included), optional per-iteration base/novel mIoU, final probabilities."""

    breakdowns: list = field(default_factory=list)
    base_miou: list = field(default_factory=list)
    novel_miou: list = field(default_factory=list)
    final_probs: np.ndarray = None

    def totals(self):
        return [b.total for b in self.breakdowns]


def init_novel_prototypes(task: GfssTask):
    """Imprint one prototype per novel class: the mean of its labeled
    support features, in fixed pixel order."""
    part = task.partition
    ns = part.novel_start
    d = task.query.dim
    protos = np.zeros((part.n_novel, d), dtype=np.float64)
    counts = np.zeros(part.n_novel, dtype=np.int64)
    for feats, mask in task.support:
        m = np.asarray(mask).ravel()
        x = feats.pixels.astype(np.float64)
        for c in range(part.n_novel):
            sel = m == ns + c
            if np.any(sel):
                protos[c] += x[sel].sum(axis=0)
                counts[c] += int(sel.sum())
    for c in range(part.n_novel):
        if counts[c] == 0:
            raise TaskError(f"novel class {ns + c} has no labeled support pixels")
    return protos / counts[:, None]


def snapshot_old_predictions(state: ClassifierState, query: FeatureMap, cosine=False, temperature=10.0):
    """Base-only predictions from the load-time snapshot; computed once per
    task and treated as a constant distillation target."""
    return forward(query, state.theta_base_snapshot, cosine=cosine, temperature=temperature)


def predict(state: ClassifierState, query: FeatureMap, cosine=False, temperature=10.0):
    """Forward with the concatenated classifier, then hard argmax."""
    probs = forward(query, state.concat(), cosine=cosine, temperature=temperature)
    return probs, argmax_decode(probs)


def _miou_pair(pred, truth, partition):
    # local import: evaluation depends on nothing here, avoid cycle at import time
    from .evaluation import ConfusionAccumulator, scores

    acc = ConfusionAccumulator(partition.n_classes)
    acc.accumulate(pred, truth)
    s = scores(acc, partition)
    return s.base, s.novel


def run_diam(task: GfssTask, state: ClassifierState, config: SolverConfig):
    """Adapt the augmented classifier on one episode.

    Each iteration: forward all images, give the prior policy a chance to
    update, record the loss, take one gradient-descent step. A final entry
    is recorded after the last step, so the trace holds iterations + 1
    breakdowns. Non-finite losses or gradients abort with the iteration
    index rather than being clipped.
    """
    part = task.partition
    if state.dim != task.query.dim:
        raise ShapeError(
            f"classifier dim {state.dim} does not match features {task.query.dim}"
        )
    if state.theta_base.shape[0] != 1 + part.n_base:
        raise ShapeError("theta_base rows do not match the class partition")
    if state.theta_novel.shape[0] != part.n_novel:
        raise ShapeError("theta_novel rows do not match the class partition")

    cos, temp = config.cosine, config.temperature
    weights = config.weights
    n_base_rows = 1 + part.n_base

    support_feats = [_feat_array(f) for f, _ in task.support]
    support_labels = [encode_labels(m, part) for _, m in task.support]
    query_feats = _feat_array(task.query)
    truth = np.asarray(task.query_labels).ravel() if task.query_labels is not None else None

    old_probs = snapshot_old_predictions(state, task.query, cosine=cos, temperature=temp)

    if config.prior_policy.kind == "uniform":
        prior = uniform_prior(part)
    elif config.prior_policy.kind == "oracle":
        if truth is None:
            raise TaskError("oracle prior requires query labels")
        prior = oracle_prior(truth, part)
    else:
        prior = uniform_prior(part)  # placeholder until the first scheduled update

    theta = state.concat()
    trace = InferenceTrace()

    def _record(probs_s, probs_q, prior_now, iteration):
        breakdown = loss_total(
            probs_s, support_labels, probs_q, prior_now, old_probs, weights, part
        )
        if not breakdown.finite():
            raise DivergenceError("non-finite loss", iteration)
        trace.breakdowns.append(breakdown)
        if truth is not None:
            b, n = _miou_pair(argmax_decode(probs_q), truth, part)
            trace.base_miou.append(b)
            trace.novel_miou.append(n)
        return breakdown

    for it in range(config.iterations):
        zs = [logits(x, theta, cosine=cos, temperature=temp) for x in support_feats]
        probs_s = [_kernels.softmax_rows(z) for z in zs]
        zq = logits(query_feats, theta, cosine=cos, temperature=temp)
        probs_q = _kernels.softmax_rows(zq)

        prior = maybe_update(config.prior_policy, it, probs_q, prior)
        _record(probs_s, probs_q, prior, it)

        grad = np.zeros_like(theta)
        if weights.alpha != 0.0:
            for x, z, p, y in zip(support_feats, zs, probs_s, support_labels):
                dz = _kernels.softmax_backward(p, _support_dprob(p, y, part, weights.alpha))
                grad += _weight_grad(x, theta, z, dz, cos, temp)
        dzq = _kernels.softmax_backward(
            probs_q, _query_dprob(probs_q, prior, old_probs, weights, part)
        )
        grad += _weight_grad(query_feats, theta, zq, dzq, cos, temp)

        if not np.all(np.isfinite(grad)):
            raise DivergenceError("non-finite gradient", it)
        if config.freeze_base:
            grad[:n_base_rows] = 0.0
        theta = theta - config.learning_rate * grad

    probs_s = [
        _kernels.softmax_rows(logits(x, theta, cosine=cos, temperature=temp))
        for x in support_feats
    ]
    probs_q = _kernels.softmax_rows(logits(query_feats, theta, cosine=cos, temperature=temp))
    _record(probs_s, probs_q, prior, config.iterations)
    trace.final_probs = probs_q

    final_state = ClassifierState(
        theta_base=theta[:n_base_rows],
        theta_novel=theta[n_base_rows:],
        theta_base_snapshot=state.theta_base_snapshot,
    )
    return final_state, trace
