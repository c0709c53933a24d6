"""Label encodings and the two probability-space projections.

Support annotation follows the practical protocol: only novel classes are
labeled, anything else (including base-class objects) is background. The
two projections reconcile that with the full class layout:

* ``project_support`` folds background + all base mass into column 0 so
  predictions can be compared against novel-only labels.
* ``project_new2old`` folds novel mass into background so predictions can
  be compared against the base-only snapshot model.
"""

from dataclasses import dataclass

import numpy as np

from .core import IGNORE_LABEL, ClassPartition
from .errors import LabelError, ShapeError


@dataclass(frozen=True)
class OneHotMap:
    """One-hot label rows; ignored pixels carry an all-zero row."""

    rows: np.ndarray
    ignored: int

    @property
    def valid_count(self):
        return self.rows.shape[0] - self.ignored


def encode_labels(mask, partition: ClassPartition) -> OneHotMap:
    """One-hot encode an integer label mask; 255 marks ignored pixels."""
    m = np.asarray(mask).ravel()
    k = partition.n_classes
    ignore = m == IGNORE_LABEL
    bad = ~ignore & ((m < 0) | (m >= k))
    if np.any(bad):
        raise LabelError(
            f"label {int(m[bad][0])} out of range for {k} classes"
        )
    rows = np.zeros((m.shape[0], k), dtype=np.float64)
    valid = np.flatnonzero(~ignore)
    rows[valid, m[valid].astype(np.int64)] = 1.0
    return OneHotMap(rows=rows, ignored=int(ignore.sum()))


def project_support(p, partition: ClassPartition):
    """Fold background and base probability into column 0; keep novel columns.

    Per-pixel mass is conserved; base columns come out exactly zero.
    """
    q = np.asarray(p, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != partition.n_classes:
        raise ShapeError(
            f"expected {partition.n_classes} columns, got shape {q.shape}"
        )
    out = np.zeros_like(q)
    ns = partition.novel_start
    out[:, 0] = q[:, :ns].sum(axis=1)
    out[:, ns:] = q[:, ns:]
    return out


def project_new2old(p, partition: ClassPartition):
    """Fold novel probability into background; returns 1 + n_base columns.

    A background prediction of the base-only model means "anything that is
    not a base class", so novel mass belongs in that bucket.
    """
    q = np.asarray(p, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != partition.n_classes:
        raise ShapeError(
            f"expected {partition.n_classes} columns, got shape {q.shape}"
        )
    ns = partition.novel_start
    out = np.empty((q.shape[0], ns), dtype=np.float64)
    out[:, 0] = q[:, 0] + q[:, ns:].sum(axis=1)
    out[:, 1:] = q[:, 1:ns]
    return out


def argmax_decode(p):
    """Hard per-pixel prediction; ties break toward the lowest class index."""
    q = np.asarray(p)
    if q.ndim != 2:
        raise ShapeError("probability map must be 2-D")
    return np.argmax(q, axis=1).astype(np.int64)
