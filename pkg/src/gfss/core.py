"""Dense numeric primitives: stable softmax, clamped logs, entropies,
KL divergence, marginals and the prototype-classifier forward pass.

Class index layout everywhere: column 0 is background, columns
``1..n_base`` are base classes, columns ``n_base+1..n_base+n_novel``
are novel classes.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericInputError, ShapeError

LOG_EPS = _kernels.LOG_EPS
IGNORE_LABEL = 255


def clamped_log(x):
    """log(max(x, 1e-10)), elementwise; keeps losses finite at zero."""
    return np.log(np.maximum(x, LOG_EPS))


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass(frozen=True)
class ClassPartition:
    """Sizes of the base and novel class groups (background excluded)."""

    n_base: int
    n_novel: int

    def __post_init__(self):
        if self.n_base < 1 or self.n_novel < 1:
            raise ConfigError("n_base and n_novel must be positive")

    @property
    def n_classes(self):
        return 1 + self.n_base + self.n_novel

    @property
    def novel_start(self):
        return 1 + self.n_base


@dataclass(frozen=True)
class FeatureMap:
    """Frozen per-pixel features for one image, flattened row-major.

    ``pixels`` has shape (height * width, d) and is stored float32,
    matching the on-disk interchange precision.
    """

    pixels: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ShapeError("height and width must be positive")
        if self.pixels.ndim != 2:
            raise ShapeError(f"features must be 2-D, got ndim={self.pixels.ndim}")
        if self.pixels.shape[0] != self.height * self.width:
            raise ShapeError(
                f"feature rows {self.pixels.shape[0]} != height*width "
                f"{self.height * self.width}"
            )
        if self.pixels.shape[1] < 1:
            raise ShapeError("feature dimension must be positive")
        if not np.all(np.isfinite(self.pixels)):
            raise NumericInputError("features contain NaN or Inf")

    @property
    def n_pixels(self):
        return self.pixels.shape[0]

    @property
    def dim(self):
        return self.pixels.shape[1]


def validate_prob_rows(p, n_classes=None, tol=1e-6):
    """Check rows live on the probability simplex; raises on violation."""
    if p.ndim != 2:
        raise ShapeError("probability map must be 2-D")
    if n_classes is not None and p.shape[1] != n_classes:
        raise ShapeError(f"expected {n_classes} classes, got {p.shape[1]}")
    if not np.all(np.isfinite(p)):
        raise NumericInputError("probabilities contain NaN or Inf")
    if p.min() < -tol or p.max() > 1 + tol:
        raise NumericInputError("probabilities outside [0, 1]")
    row_sums = p.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > tol:
        raise NumericInputError("probability rows do not sum to 1")


def softmax_rows(logits):
    """Row-wise stable softmax (max-subtracted)."""
    z = _as_f64(logits)
    if z.ndim != 2:
        raise ShapeError("logits must be 2-D")
    if not np.all(np.isfinite(z)):
        raise NumericInputError("logits contain NaN or Inf")
    return _kernels.softmax_rows(z)


def logits(features, weights, cosine=False, temperature=10.0):
    """Pre-softmax scores of the linear classifier.

    Default similarity is the raw dot product ``x . w_k`` (no bias). With
    ``cosine=True``, scores are ``temperature * cos(x, w_k)`` instead.
    """
    x = features.pixels if isinstance(features, FeatureMap) else features
    x = _as_f64(x)
    w = _as_f64(weights)
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError("features and weights must be 2-D")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"feature dim {x.shape[1]} does not match prototype dim {w.shape[1]}"
        )
    if cosine:
        xn = x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), LOG_EPS)
        wn = w / np.maximum(np.linalg.norm(w, axis=1, keepdims=True), LOG_EPS)
        return temperature * (xn @ wn.T)
    return x @ w.T


def forward(features, weights, cosine=False, temperature=10.0):
    """Classifier forward pass: logits then row-wise softmax."""
    return softmax_rows(logits(features, weights, cosine=cosine, temperature=temperature))


def entropy_rows(p):
    """Mean Shannon entropy of the rows, clamped log."""
    q = _as_f64(p)
    if q.ndim != 2:
        raise ShapeError("probability map must be 2-D")
    return _kernels.sum_neg_p_logq(q, q) / q.shape[0]


def cross_entropy(p, q):
    """Pixel-averaged cross entropy -1/N sum_j sum_k p log q."""
    pa = _as_f64(p)
    qa = _as_f64(q)
    if pa.shape != qa.shape:
        raise ShapeError(f"shape mismatch {pa.shape} vs {qa.shape}")
    if pa.ndim != 2:
        raise ShapeError("probability maps must be 2-D")
    return _kernels.sum_neg_p_logq(pa, qa) / pa.shape[0]


def kl_divergence(a, b):
    """KL(a || b) between two probability vectors, clamped log."""
    av = _as_f64(a).ravel()
    bv = _as_f64(b).ravel()
    if av.shape != bv.shape:
        raise ShapeError(f"length mismatch {av.shape[0]} vs {bv.shape[0]}")
    return _kernels.kl_vec(av, bv)


def marginal(p):
    """Pixel-averaged class distribution of a probability map."""
    q = _as_f64(p)
    if q.ndim != 2:
        raise ShapeError("probability map must be 2-D")
    return _kernels.col_means(q)
