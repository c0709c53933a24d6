"""The inference objective, its analytic gradient, and a finite-difference
gradient oracle.

The minimized total is

    alpha * L_xent  +  H(query)  +  KL(marginal || prior)  +  beta * L_kd

where L_xent sums the support cross entropies through the support
projection (one 1/|pixels| normalizer per image, no 1/|S|), H is the
query's mean pixel entropy, the marginal term is the prior-anchored KL
(the constant log K of the marginal-entropy identity is dropped), and
L_kd is the pixel-averaged KL between new predictions folded to the old
label space and the frozen snapshot's predictions. The prior and the old
predictions are constants: no gradient flows through them.

Gradients account for the log clamp: wherever a probability sits below
the clamp floor its log is constant, so the matching derivative is gated
to zero. This keeps the analytic gradient consistent with central finite
differences of the actually-computed loss.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import LOG_EPS, ClassPartition, FeatureMap, clamped_log, logits, marginal
from .errors import ShapeError, TaskError
from .labels import OneHotMap, project_new2old, project_support


@dataclass(frozen=True)
class LossWeights:
    """Term weights. Defaults reproduce the reference configuration
    (support and distillation terms upweighted by 100).

    ``entropy_weight`` and ``marginal_weight`` exist so ablation presets
    can switch the unweighted terms off; both default to 1.
    """

    alpha: float = 100.0
    beta: float = 100.0
    entropy_weight: float = 1.0
    marginal_weight: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted term values plus the weighted total."""

    xent: float
    query_entropy: float
    marginal_kl: float
    kd: float
    total: float

    def finite(self):
        return all(
            np.isfinite(v)
            for v in (self.xent, self.query_entropy, self.marginal_kl, self.kd, self.total)
        )


def _glog(x):
    # derivative of log(max(x, eps)): 1/x above the floor, 0 below it
    return np.where(x > LOG_EPS, 1.0 / np.maximum(x, LOG_EPS), 0.0)


def loss_xent(support_probs, support_labels, partition: ClassPartition):
    """Supervised support term: sum over shots of H(y_i; fold(p_i)).

    Each shot carries its own 1/|valid pixels| normalizer; the shot sum is
    left unnormalized. Ignored pixels contribute nothing.
    """
    if len(support_probs) == 0:
        raise TaskError("support set is empty")
    if len(support_probs) != len(support_labels):
        raise ShapeError("support probs/labels length mismatch")
    total = 0.0
    for p, y in zip(support_probs, support_labels):
        rows = y.rows if isinstance(y, OneHotMap) else np.asarray(y, dtype=np.float64)
        valid = y.valid_count if isinstance(y, OneHotMap) else rows.shape[0]
        q = project_support(p, partition)
        if rows.shape != q.shape:
            raise ShapeError(f"label shape {rows.shape} vs probs {q.shape}")
        total += _kernels.sum_neg_p_logq(rows, q) / valid
    return total


def loss_query_entropy(query_probs):
    q = np.ascontiguousarray(query_probs, dtype=np.float64)
    return _kernels.sum_neg_p_logq(q, q) / q.shape[0]


def loss_marginal_kl(query_probs, prior):
    """KL between the query marginal and the (constant) prior."""
    phat = marginal(query_probs)
    pr = np.ascontiguousarray(prior, dtype=np.float64).ravel()
    if pr.shape[0] != phat.shape[0]:
        raise ShapeError(f"prior length {pr.shape[0]} vs {phat.shape[0]} classes")
    return _kernels.kl_vec(phat, pr)


def loss_kd(query_probs, old_probs, partition: ClassPartition):
    """Distillation: mean per-pixel KL(fold_new2old(p) || p_old)."""
    old = np.ascontiguousarray(old_probs, dtype=np.float64)
    if old.ndim != 2 or old.shape[1] != 1 + partition.n_base:
        raise ShapeError(
            f"old predictions need {1 + partition.n_base} columns, got {old.shape}"
        )
    r = project_new2old(query_probs, partition)
    if r.shape[0] != old.shape[0]:
        raise ShapeError(f"pixel count mismatch {r.shape[0]} vs {old.shape[0]}")
    return _kernels.kl_rows_sum(np.ascontiguousarray(r), old) / r.shape[0]


def loss_total(
    support_probs,
    support_labels,
    query_probs,
    prior,
    old_probs,
    weights: LossWeights,
    partition: ClassPartition,
) -> LossBreakdown:
    xent = loss_xent(support_probs, support_labels, partition)
    qent = loss_query_entropy(query_probs)
    mkl = loss_marginal_kl(query_probs, prior)
    kd = loss_kd(query_probs, old_probs, partition)
    total = (
        weights.alpha * xent
        + weights.entropy_weight * qent
        + weights.marginal_weight * mkl
        + weights.beta * kd
    )
    return LossBreakdown(xent=xent, query_entropy=qent, marginal_kl=mkl, kd=kd, total=total)


# ---------------------------------------------------------------------------
# analytic gradient
# ---------------------------------------------------------------------------

def _support_dprob(p, y: OneHotMap, partition, alpha):
    """d(alpha * H(y; fold(p))) / dp for one support shot."""
    q = project_support(p, partition)
    dq = -(alpha / y.valid_count) * y.rows * _glog(q)
    ns = partition.novel_start
    dp = np.empty_like(p)
    dp[:, :ns] = dq[:, 0:1]
    dp[:, ns:] = dq[:, ns:]
    return dp


def _query_dprob(p, prior, old, weights, partition):
    """Gradient of entropy + marginal-KL + beta*KD terms w.r.t. p."""
    n = p.shape[0]
    dp = np.zeros_like(p)

    if weights.entropy_weight != 0.0:
        dp -= (weights.entropy_weight / n) * (clamped_log(p) + p * _glog(p))

    if weights.marginal_weight != 0.0:
        phat = marginal(p)
        dphat = clamped_log(phat) + phat * _glog(phat) - clamped_log(prior)
        dp += (weights.marginal_weight / n) * dphat[None, :]

    if weights.beta != 0.0:
        r = project_new2old(p, partition)
        dr = (weights.beta / n) * (clamped_log(r) + r * _glog(r) - clamped_log(old))
        ns = partition.novel_start
        dp[:, 0] += dr[:, 0]
        dp[:, 1:ns] += dr[:, 1:]
        dp[:, ns:] += dr[:, 0:1]
    return dp


def _weight_grad(x, w, z, dz, cosine, temperature):
    """Pull dL/dlogits back onto the prototype matrix."""
    if not cosine:
        return dz.T @ x
    xn = x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), LOG_EPS)
    wnorm = np.maximum(np.linalg.norm(w, axis=1), LOG_EPS)
    wn = w / wnorm[:, None]
    g_dot = dz.T @ xn  # (K, d)
    s = np.sum(dz * z, axis=0) / temperature  # (K,)
    return (temperature / wnorm)[:, None] * (g_dot - s[:, None] * wn)


def grad_total(
    support_features,
    support_labels,
    query_features,
    prior,
    old_probs,
    weights: LossWeights,
    theta,
    partition: ClassPartition,
    cosine=False,
    temperature=10.0,
):
    """Exact gradient of the weighted total with respect to every prototype row.

    ``theta`` is the concatenated (n_classes, d) prototype matrix. The
    prior, the old predictions and the support labels are constants.
    """
    w = np.ascontiguousarray(theta, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != partition.n_classes:
        raise ShapeError(f"theta must be ({partition.n_classes}, d), got {w.shape}")
    old = np.ascontiguousarray(old_probs, dtype=np.float64)
    pr = np.ascontiguousarray(prior, dtype=np.float64).ravel()

    grad = np.zeros_like(w)
    if weights.alpha != 0.0:
        for feats, y in zip(support_features, support_labels):
            x = _feat_array(feats)
            z = logits(x, w, cosine=cosine, temperature=temperature)
            p = _kernels.softmax_rows(z)
            dp = _support_dprob(p, y, partition, weights.alpha)
            dz = _kernels.softmax_backward(p, dp)
            grad += _weight_grad(x, w, z, dz, cosine, temperature)

    xq = _feat_array(query_features)
    zq = logits(xq, w, cosine=cosine, temperature=temperature)
    pq = _kernels.softmax_rows(zq)
    dpq = _query_dprob(pq, pr, old, weights, partition)
    dzq = _kernels.softmax_backward(pq, dpq)
    grad += _weight_grad(xq, w, zq, dzq, cosine, temperature)
    return grad


def _feat_array(features):
    x = features.pixels if isinstance(features, FeatureMap) else features
    return np.ascontiguousarray(x, dtype=np.float64)


def eval_loss(
    support_features,
    support_labels,
    query_features,
    prior,
    old_probs,
    weights,
    theta,
    partition,
    cosine=False,
    temperature=10.0,
):
    """Forward every image with ``theta`` and evaluate the breakdown."""
    w = np.ascontiguousarray(theta, dtype=np.float64)
    support_probs = [
        _kernels.softmax_rows(logits(_feat_array(f), w, cosine=cosine, temperature=temperature))
        for f in support_features
    ]
    query_probs = _kernels.softmax_rows(
        logits(_feat_array(query_features), w, cosine=cosine, temperature=temperature)
    )
    return loss_total(
        support_probs, support_labels, query_probs, prior, old_probs, weights, partition
    )


def central_difference(loss_fn, theta, step):
    """Coordinate-wise central differences of a scalar function of theta."""
    if step <= 0:
        raise ShapeError("step must be positive")
    w = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(w)
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            orig = w[i, j]
            w[i, j] = orig + step
            hi = loss_fn(w)
            w[i, j] = orig - step
            lo = loss_fn(w)
            w[i, j] = orig
            grad[i, j] = (hi - lo) / (2.0 * step)
    return grad


def finite_diff_grad(
    support_features,
    support_labels,
    query_features,
    prior,
    old_probs,
    weights,
    theta,
    partition,
    step=1e-5,
    cosine=False,
    temperature=10.0,
):
    """Central-difference gradient of the total loss, one coordinate at a time."""
    args = (support_features, support_labels, query_features, prior, old_probs, weights)

    def total(w):
        return eval_loss(*args, w, partition, cosine=cosine, temperature=temperature).total

    return central_difference(total, theta, step)
