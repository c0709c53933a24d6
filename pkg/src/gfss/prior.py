"""Class-proportion prior: estimation modes and the update schedule.

Three kinds are supported. ``uniform`` fixes the prior at 1/K. ``self``
re-estimates it from the query marginal at the scheduled iterations
(default: once at the start, once at iteration 10). ``oracle`` uses the
true class frequencies of the query ground truth and never updates.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import IGNORE_LABEL, ClassPartition, marginal
from .errors import ConfigError, TaskError

PRIOR_KINDS = ("uniform", "self", "oracle")


@dataclass(frozen=True)
class PriorPolicy:
    kind: str = "self"
    update_iterations: tuple = (0, 10)

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior kind {self.kind!r}")
        its = tuple(int(i) for i in self.update_iterations)
        if any(i < 0 for i in its) or list(its) != sorted(its):
            raise ConfigError("update_iterations must be sorted and non-negative")
        object.__setattr__(self, "update_iterations", its)


def uniform_prior(partition: ClassPartition):
    k = partition.n_classes
    return np.full(k, 1.0 / k, dtype=np.float64)


def estimate_prior(query_probs):
    """Prior from the model's current marginal over the query."""
    return marginal(query_probs)


def oracle_prior(query_labels, partition: ClassPartition):
    """Empirical class frequencies of the query ground truth."""
    m = np.asarray(query_labels).ravel()
    valid = m[m != IGNORE_LABEL]
    if valid.size == 0:
        raise TaskError("oracle prior needs at least one non-ignored query pixel")
    counts = np.bincount(valid.astype(np.int64), minlength=partition.n_classes)
    return counts.astype(np.float64) / valid.size


def maybe_update(policy: PriorPolicy, iteration, current_query_probs, current):
    """Return the prior to use at this iteration.

    Only the self-estimated kind ever changes, and only at its scheduled
    iterations; uniform and oracle priors are constants.
    """
    if policy.kind != "self":
        return current
    if iteration in policy.update_iterations:
        return estimate_prior(current_query_probs)
    return current
