"""Synthetic episode generator.

Features are isotropic Gaussian clusters around class mean vectors on a
desk-scale pixel grid. The background direction and the base-class
directions are mutually orthonormal (scaled by ``mean_scale``); each
novel direction mixes the background direction, one partner base
direction and a fresh orthogonal component. That mirrors the two
confusions the inference has to survive: a base-only model reads novel
objects as background, and an unconstrained novel prototype can grow
into its partner base class.

The idealized pretrained classifier uses the planted background/base
means as its rows, with the background row inflated by ``bg_row_scale``:
a classifier trained with novel objects labeled background develops a
confident catch-all background response, and the distillation dynamics
depend on that calibration.

The within-class noise level is derived from ``separation``: the closest
pair of class means sits exactly ``separation`` standard deviations
apart. Classes occupy axis-aligned rectangles so predictions form
spatially coherent maps; the remaining pixels are background. Support
masks label novel classes only; base objects present in a support image
are relabeled background, as the practical protocol requires.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .core import ClassPartition, FeatureMap
from .errors import ConfigError
from .inference import GfssTask


@dataclass(frozen=True)
class SyntheticConfig:
    d: int = 512
    n_base: int = 15
    n_novel: int = 5
    grid: tuple = (32, 32)
    shots: int = 5
    separation: float = 6.0
    background_fraction: float = 0.5
    seed: int = 0
    bg_affinity: float = 0.55
    base_affinity: float = 0.45
    mean_scale: float = 2.0
    bg_row_scale: float = 2.2

    def __post_init__(self):
        if min(self.d, self.n_base, self.n_novel, self.shots) < 1:
            raise ConfigError("d, n_base, n_novel and shots must be positive")
        if min(self.grid) < 1:
            raise ConfigError("grid sides must be positive")
        if self.separation <= 0:
            raise ConfigError("separation must be positive")
        if not 0.0 < self.background_fraction < 1.0:
            raise ConfigError("background_fraction must lie in (0, 1)")
        if self.bg_affinity < 0 or self.base_affinity < 0:
            raise ConfigError("affinities must be non-negative")
        if self.bg_affinity**2 + self.base_affinity**2 >= 1.0:
            raise ConfigError("affinity vector must have norm < 1")
        if self.mean_scale <= 0 or self.bg_row_scale <= 0:
            raise ConfigError("mean_scale and bg_row_scale must be positive")
        if 1 + self.n_base + self.n_novel > self.d:
            raise ConfigError(
                f"{1 + self.n_base + self.n_novel} classes need at least that "
                f"many feature dimensions, got d={self.d}"
            )

    @property
    def partition(self):
        return ClassPartition(n_base=self.n_base, n_novel=self.n_novel)


@dataclass(frozen=True)
class PlantedStats:
    """Generator bookkeeping for oracle checks."""

    means: np.ndarray
    sigma: float
    query_proportions: np.ndarray
    partner_of_novel: tuple
    support_pixel_counts: np.ndarray


def _class_directions(cfg, rng):
    m = 1 + cfg.n_base + cfg.n_novel
    q, r = np.linalg.qr(rng.standard_normal((cfg.d, m)))
    q = q * np.sign(np.diag(r))  # deterministic orientation
    bg = q[:, 0]
    base = q[:, 1 : 1 + cfg.n_base].T
    fresh = q[:, 1 + cfg.n_base :].T
    partners = tuple(i % cfg.n_base for i in range(cfg.n_novel))
    a, b = cfg.bg_affinity, cfg.base_affinity
    e = np.sqrt(1.0 - a * a - b * b)
    novel = np.empty((cfg.n_novel, cfg.d))
    for i, p in enumerate(partners):
        v = a * bg + b * base[p] + e * fresh[i]
        novel[i] = v / np.linalg.norm(v)
    means = cfg.mean_scale * np.vstack([bg[None, :], base, novel])
    return means, partners


def _min_pairwise_distance(means):
    g = means @ means.T
    sq = np.diag(g)[:, None] + np.diag(g)[None, :] - 2 * g
    np.fill_diagonal(sq, np.inf)
    return float(np.sqrt(max(sq.min(), 0.0)))


def _place_regions(classes, grid, background_fraction, rng):
    """One rectangle per class inside its own tile; the rest is background."""
    h, w = grid
    labels = np.zeros(h * w, dtype=np.int64)
    n = len(classes)
    if n == 0:
        return labels
    rows = max(1, int(np.floor(np.sqrt(n))))
    cols = int(np.ceil(n / rows))
    ch, cw = h // rows, w // cols
    if ch < 1 or cw < 1:
        raise ConfigError("grid too small for the requested class count")
    target = (1.0 - background_fraction) * h * w / n
    order = rng.permutation(n)
    for slot, idx in enumerate(order):
        cls = classes[idx]
        r, c = divmod(slot, cols)
        rh = min(ch, max(1, int(round(np.sqrt(target * ch / cw)))))
        rw = min(cw, max(1, int(round(target / rh))))
        r0 = r * ch + int(rng.integers(0, ch - rh + 1))
        c0 = c * cw + int(rng.integers(0, cw - rw + 1))
        for rr in range(r0, r0 + rh):
            labels[rr * w + c0 : rr * w + c0 + rw] = cls
    return labels


def _sample_features(labels, means, sigma, rng):
    x = means[labels] + sigma * rng.standard_normal((labels.shape[0], means.shape[1]))
    return x.astype(np.float32)


def gen_task(config: SyntheticConfig):
    """Build one episode plus its idealized base classifier and bookkeeping.

    Returns ``(task, base_classifier, stats)``. The base classifier's rows
    are exactly the planted background/base means. Query images contain
    every novel class, the partner base classes and a couple of extra base
    classes; support images contain every novel class and sometimes an
    unrelated base object (labeled background).
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    part = cfg.partition
    means, partners = _class_directions(cfg, rng)
    sigma = _min_pairwise_distance(means) / cfg.separation
    ns = part.novel_start
    h, w = cfg.grid

    support = []
    support_counts = np.zeros(part.n_classes, dtype=np.int64)
    for _ in range(cfg.shots):
        classes = list(range(ns, part.n_classes))
        non_partner = [1 + b for b in range(cfg.n_base) if b not in partners]
        if non_partner and rng.random() < 0.5:
            classes.append(int(rng.choice(non_partner)))
        truth = _place_regions(classes, cfg.grid, cfg.background_fraction, rng)
        feats = FeatureMap(_sample_features(truth, means, sigma, rng), h, w)
        mask = np.where(truth >= ns, truth, 0).astype(np.uint8)
        support.append((feats, mask))
        support_counts += np.bincount(truth, minlength=part.n_classes)

    query_classes = list(range(ns, part.n_classes))
    query_classes += sorted({1 + p for p in partners})
    extra = [1 + b for b in range(cfg.n_base) if 1 + b not in query_classes]
    n_extra = int(rng.integers(1, 3)) if extra else 0
    query_classes += [int(c) for c in rng.choice(extra, size=min(n_extra, len(extra)), replace=False)]
    query_truth = _place_regions(query_classes, cfg.grid, cfg.background_fraction, rng)
    query_feats = FeatureMap(_sample_features(query_truth, means, sigma, rng), h, w)

    task = GfssTask(
        support=tuple(support),
        query=query_feats,
        partition=part,
        query_labels=query_truth.astype(np.uint8),
    )
    classifier = means[:ns].copy()
    classifier[0] *= cfg.bg_row_scale  # trained background rows act as a catch-all
    classifier = classifier.astype(np.float32)
    stats = PlantedStats(
        means=means,
        sigma=sigma,
        query_proportions=np.bincount(query_truth, minlength=part.n_classes)
        / query_truth.shape[0],
        partner_of_novel=partners,
        support_pixel_counts=support_counts,
    )
    return task, classifier, stats


def gen_suite(config: SyntheticConfig, n_tasks, seed=None):
    """Independent tasks with per-task seeds derived from one suite seed."""
    if n_tasks < 1:
        raise ConfigError("n_tasks must be positive")
    suite_seed = config.seed if seed is None else seed
    child_seeds = np.random.SeedSequence(suite_seed).generate_state(n_tasks)
    return [gen_task(replace(config, seed=int(s))) for s in child_seeds]
