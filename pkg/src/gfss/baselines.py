"""Comparator strategies: the multi-class aggregation/fusion heuristic for
binary foreground maps, and named ablation presets of the solver."""

from dataclasses import dataclass, replace

import numpy as np

from .core import ClassPartition
from .errors import ConfigError, NumericInputError, ShapeError, TaskError
from .objective import LossWeights
from .prior import PriorPolicy
from .inference import SolverConfig

PRESETS = ("full", "no-kd", "frozen-base", "uniform-prior", "oracle-prior", "xent-only")


@dataclass(frozen=True)
class FusionConfig:
    """Confidence threshold for accepting an aggregated novel prediction."""

    tau: float

    def __post_init__(self):
        if not np.isfinite(self.tau) or not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")


def bam_aggregate(foreground_maps, partition: ClassPartition):
    """Collapse per-novel-class foreground maps into one argmax map.

    Returns global class indices (novel slots) and the winning
    probability per pixel; ties go to the lowest novel index.
    """
    maps = [np.asarray(m, dtype=np.float64).ravel() for m in foreground_maps]
    if len(maps) == 0:
        raise TaskError("no foreground maps given")
    if len(maps) != partition.n_novel:
        raise ShapeError(f"expected {partition.n_novel} maps, got {len(maps)}")
    stack = np.stack(maps, axis=0)
    if any(m.shape != maps[0].shape for m in maps):
        raise ShapeError("foreground maps differ in shape")
    if stack.min() < 0.0 or stack.max() > 1.0:
        raise NumericInputError("foreground map values outside [0, 1]")
    winner = np.argmax(stack, axis=0)
    p_a = stack[winner, np.arange(stack.shape[1])]
    labels = (partition.novel_start + winner).astype(np.int64)
    return labels, p_a


def bam_fuse(aggregated, p_a, base_map, config: FusionConfig):
    """Three-case fusion: novel where confident, else the base-learner's
    class where it is not background, else background."""
    a = np.asarray(aggregated).ravel()
    p = np.asarray(p_a, dtype=np.float64).ravel()
    b = np.asarray(base_map).ravel()
    if not (a.shape == p.shape == b.shape):
        raise ShapeError("aggregated/probability/base maps differ in shape")
    out = np.zeros(a.shape[0], dtype=np.int64)
    take_novel = p > config.tau
    out[take_novel] = a[take_novel]
    base_hit = ~take_novel & (b != 0)
    out[base_hit] = b[base_hit]
    return out


def ablation_preset(name) -> SolverConfig:
    """The reference solver configuration with exactly one named deviation."""
    base = SolverConfig()
    if name == "full":
        return base
    if name == "no-kd":
        return replace(base, weights=replace(base.weights, beta=0.0))
    if name == "frozen-base":
        return replace(base, freeze_base=True)
    if name == "uniform-prior":
        return replace(base, prior_policy=PriorPolicy(kind="uniform"))
    if name == "oracle-prior":
        return replace(base, prior_policy=PriorPolicy(kind="oracle"))
    if name == "xent-only":
        return replace(
            base,
            weights=replace(base.weights, beta=0.0, entropy_weight=0.0, marginal_weight=0.0),
        )
    raise ConfigError(f"unknown preset {name!r}; valid: {', '.join(PRESETS)}")
