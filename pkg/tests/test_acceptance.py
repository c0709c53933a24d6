"""Acceptance suite.

Each test prints one `[ACCEPTANCE] <criterion>: PASS/FAIL` line (run with
``pytest tests/test_acceptance.py -v -s``). The synthetic episode suite
(20 seeded tasks, d=64, 15 base / 5 novel, 32x32 grid, separation 6,
5-shot) is generated once and shared by the end-to-end and ablation-trend
criteria; everything runs on synthetic data with no exporter involved.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_prob_rows
from gfss.baselines import FusionConfig, ablation_preset, bam_aggregate, bam_fuse
from gfss.core import ClassPartition, entropy_rows, forward, marginal
from gfss.evaluation import ConfusionAccumulator, scores
from gfss.gradcheck import run_suite
from gfss.inference import ClassifierState, init_novel_prototypes, run_diam
from gfss.labels import argmax_decode, encode_labels, project_new2old, project_support
from gfss.objective import LossWeights, loss_marginal_kl, loss_total
from gfss.prior import uniform_prior
from gfss.taskgen import SyntheticConfig, gen_suite, gen_task
from gfss.taskio import dumps_report, read_report, strip_timings

import oracles

SUITE_SEED = 2024
PRESETS = ("full", "no-kd", "frozen-base", "oracle-prior")


def _criterion(name, ok, detail=""):
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


def _score(pred, truth, partition):
    acc = ConfusionAccumulator(partition.n_classes)
    acc.accumulate(pred, truth)
    return scores(acc, partition)


@pytest.fixture(scope="module")
def suite_results():
    cfg = SyntheticConfig(
        d=64, n_base=15, n_novel=5, grid=(32, 32), shots=5, separation=6.0, seed=SUITE_SEED
    )
    suite = gen_suite(cfg, 20, seed=SUITE_SEED)
    results = {p: [] for p in PRESETS}
    initial_base = []
    t0 = time.perf_counter()
    full_wall = 0.0
    for task, classifier, _ in suite:
        state = ClassifierState.create(classifier, init_novel_prototypes(task))
        base_pred = argmax_decode(forward(task.query, state.theta_base_snapshot))
        initial_base.append(_score(base_pred, task.query_labels, task.partition).base)
        for preset in PRESETS:
            t1 = time.perf_counter()
            _, trace = run_diam(task, state, ablation_preset(preset))
            wall = time.perf_counter() - t1
            if preset == "full":
                full_wall += wall
            s = _score(argmax_decode(trace.final_probs), task.query_labels, task.partition)
            results[preset].append(
                {
                    "scores": s,
                    "loss0": trace.breakdowns[0].total,
                    "lossN": trace.breakdowns[-1].total,
                    "base10": trace.base_miou[10],
                    "novel10": trace.novel_miou[10],
                    "base100": trace.base_miou[-1],
                    "novel100": trace.novel_miou[-1],
                }
            )
    return {
        "initial_base": initial_base,
        "results": results,
        "full_wall": full_wall,
        "total_wall": time.perf_counter() - t0,
    }


def test_gradient_correctness():
    t0 = time.perf_counter()
    worst, per_task = run_suite(n_tasks=100, seed=SUITE_SEED, step=1e-5)
    wall = time.perf_counter() - t0
    ok = worst < 1e-4 and wall < 60.0
    _criterion(
        "gradient-correctness",
        ok,
        f"max rel err {worst:.3e} over {len(per_task)} tasks in {wall:.1f}s",
    )


def test_loss_term_oracle():
    rng = np.random.default_rng(SUITE_SEED)
    worst = 0.0
    for _ in range(50):
        cfg = SyntheticConfig(
            d=int(rng.integers(8, 13)),
            n_base=int(rng.integers(1, 4)),
            n_novel=int(rng.integers(1, 3)),
            grid=(int(rng.integers(4, 7)), int(rng.integers(4, 7))),
            shots=int(rng.integers(1, 4)),
            seed=int(rng.integers(0, 2**31)),
        )
        task, classifier, _ = gen_task(cfg)
        part = task.partition
        theta = np.vstack(
            [classifier, init_novel_prototypes(task)]
        ) + 0.5 * rng.standard_normal((part.n_classes, cfg.d))
        support_probs = [forward(f, theta) for f, _ in task.support]
        labels = [encode_labels(m, part) for _, m in task.support]
        query_probs = forward(task.query, theta)
        prior = random_prob_rows(rng, 1, part.n_classes)[0]
        old = forward(task.query, classifier)
        alpha, beta = float(rng.uniform(0, 5)), float(rng.uniform(0, 5))
        got = loss_total(
            support_probs, labels, query_probs, prior, old, LossWeights(alpha, beta), part
        )
        want = oracles.loss_total(
            [p.tolist() for p in support_probs],
            [l.rows.tolist() for l in labels],
            [l.valid_count for l in labels],
            query_probs.tolist(),
            prior.tolist(),
            old.tolist(),
            alpha,
            beta,
            part.n_base,
        )
        worst = max(worst, abs(got.total - want[4]))
        for a, b in zip((got.xent, got.query_entropy, got.marginal_kl, got.kd), want[:4]):
            worst = max(worst, abs(a - b))
    _criterion("loss-term-oracle", worst < 1e-8, f"max |diff| {worst:.2e} over 50 tasks")


def test_projection_invariants():
    rng = np.random.default_rng(SUITE_SEED)
    part = ClassPartition(n_base=6, n_novel=3)
    rows = random_prob_rows(rng, 10_000, part.n_classes)
    folded = project_support(rows, part)
    merged = project_new2old(rows, part)
    mass_ok = (
        np.max(np.abs(folded.sum(axis=1) - 1.0)) < 1e-9
        and np.max(np.abs(merged.sum(axis=1) - 1.0)) < 1e-9
    )
    simplex_ok = folded.min() >= 0 and merged.min() >= 0 and folded.max() <= 1 + 1e-12
    _criterion("projection-invariants", mass_ok and simplex_ok, "10^4 random rows")


def test_uniform_prior_identity():
    rng = np.random.default_rng(SUITE_SEED)
    part = ClassPartition(n_base=4, n_novel=3)
    worst = 0.0
    for _ in range(100):
        p = random_prob_rows(rng, int(rng.integers(2, 50)), part.n_classes)
        got = loss_marginal_kl(p, uniform_prior(part))
        phat = marginal(p)
        want = np.log(part.n_classes) - float(-(phat * np.log(phat)).sum())
        worst = max(worst, abs(got - want))
    _criterion("uniform-prior-identity", worst < 1e-9, f"max |diff| {worst:.2e}")


def test_synthetic_end_to_end(suite_results):
    full = suite_results["results"]["full"]
    novel = float(np.mean([r["scores"].novel for r in full]))
    base = float(np.mean([r["scores"].base for r in full]))
    init_base = float(np.mean(suite_results["initial_base"]))
    wall = suite_results["total_wall"]
    ok = novel >= 0.85 and abs(base - init_base) <= 0.03 and wall < 120.0
    _criterion(
        "synthetic-end-to-end",
        ok,
        f"novel {novel:.3f} (>=0.85), base {base:.3f} vs initial {init_base:.3f} "
        f"(|diff| {100 * abs(base - init_base):.1f} pts <= 3), suite wall {wall:.1f}s < 120s",
    )


def test_kd_ablation_trend(suite_results):
    full = suite_results["results"]["full"]
    nokd = suite_results["results"]["no-kd"]
    wins = sum(1 for a, b in zip(nokd, full) if a["scores"].base < b["scores"].base)
    _criterion(
        "kd-ablation-trend",
        wins >= 16,
        f"no-kd base strictly lower on {wins}/20 tasks (need >=16); "
        f"means {np.mean([r['scores'].base for r in nokd]):.3f} vs "
        f"{np.mean([r['scores'].base for r in full]):.3f}",
    )


def test_frozen_base_trend(suite_results):
    full = suite_results["results"]["full"]
    frozen = suite_results["results"]["frozen-base"]
    loss_full = float(np.mean([r["lossN"] for r in full]))
    loss_frozen = float(np.mean([r["lossN"] for r in frozen]))
    mean_full = float(np.mean([r["scores"].mean for r in full]))
    mean_frozen = float(np.mean([r["scores"].mean for r in frozen]))
    ok = loss_frozen >= loss_full and mean_frozen <= mean_full + 0.01
    _criterion(
        "frozen-base-trend",
        ok,
        f"final loss {loss_frozen:.1f} >= {loss_full:.1f}; "
        f"Mean {mean_frozen:.3f} <= {mean_full:.3f} + 1pt",
    )


def test_oracle_prior_dominance(suite_results):
    full = suite_results["results"]["full"]
    oracle = suite_results["results"]["oracle-prior"]
    wins = sum(1 for a, b in zip(oracle, full) if a["scores"].novel >= b["scores"].novel)
    _criterion(
        "oracle-prior-dominance",
        wins >= 15,
        f"oracle novel >= full on {wins}/20 tasks (need >=15)",
    )


def test_iteration_count_behavior(suite_results):
    full = suite_results["results"]["full"]
    d_base = abs(np.mean([r["base10"] for r in full]) - np.mean([r["base100"] for r in full]))
    d_novel = abs(np.mean([r["novel10"] for r in full]) - np.mean([r["novel100"] for r in full]))
    decreased = sum(1 for r in full if r["lossN"] <= r["loss0"])
    ok = d_base <= 0.05 and d_novel <= 0.05 and decreased == len(full)
    _criterion(
        "iteration-count-behavior",
        ok,
        f"iter10 vs iter100: base {100 * d_base:.1f} pts, novel {100 * d_novel:.1f} pts (<=5); "
        f"loss decreased on {decreased}/20 tasks",
    )


def test_bam_fusion_equivalence():
    rng = np.random.default_rng(SUITE_SEED)
    mismatches = 0
    for _ in range(1000):
        n_novel = int(rng.integers(1, 5))
        n_base = int(rng.integers(1, 4))
        part = ClassPartition(n_base=n_base, n_novel=n_novel)
        n = int(rng.integers(1, 17))
        maps = rng.random((n_novel, n))
        tau = float(rng.random())
        base_map = rng.integers(0, n_base + 1, size=n)
        a, p_a = bam_aggregate(list(maps), part)
        fused = bam_fuse(a, p_a, base_map, FusionConfig(tau=tau))
        want = [
            oracles.bam_fused_pixel(maps[:, j].tolist(), int(base_map[j]), tau, n_base)
            for j in range(n)
        ]
        if not np.array_equal(fused, want):
            mismatches += 1
    _criterion("bam-fusion-equivalence", mismatches == 0, "1000 random instances, exact")


def test_metric_correctness():
    acc = ConfusionAccumulator(3)
    acc.accumulate(np.array([0, 1, 1, 2]), np.array([0, 1, 2, 2]))
    s = _hand = scores(acc, ClassPartition(1, 1))
    hand_ok = (
        s.per_class_iou[0] == 1.0 and s.per_class_iou[1] == 0.5 and s.per_class_iou[2] == 0.5
    )
    rng = np.random.default_rng(SUITE_SEED)
    part = ClassPartition(3, 2)
    amhm_ok = True
    for _ in range(1000):
        acc = ConfusionAccumulator(part.n_classes)
        acc.union[:] = rng.integers(1, 100, part.n_classes)
        acc.intersection[:] = (rng.random(part.n_classes) * acc.union).astype(np.int64)
        s = scores(acc, part)
        amhm_ok &= s.h_mean <= s.mean + 1e-12
    _criterion("metric-correctness", hand_ok and amhm_ok, "hand example + AM-HM on 10^3")


def test_cli_determinism(tmp_path, monkeypatch):
    # same command lines run twice (in sibling directories) must emit
    # byte-identical task files and reports, timing fields aside
    from gfss.cli import main

    reports = []
    for run in ("one", "two"):
        out = tmp_path / run
        out.mkdir()
        monkeypatch.chdir(out)
        assert (
            main(
                [
                    "synth", "--out", ".", "--tasks", "2", "--seed", "41",
                    "--d", "32", "--n-base", "4", "--n-novel", "2",
                    "--grid", "12x12", "--shots", "2",
                ]
            )
            == 0
        )
        files = sorted(p.name for p in out.glob("*.task"))
        assert main(["infer", *files, "--report", "report.json"]) == 0
        reports.append(out / "report.json")
    blobs = [dumps_report(strip_timings(read_report(r))) for r in reports]
    task_bytes = [
        [p.read_bytes() for p in sorted((tmp_path / run).glob("*.task"))] for run in ("one", "two")
    ]
    ok = blobs[0] == blobs[1] and task_bytes[0] == task_bytes[1]
    _criterion("determinism", ok, "synth + infer twice: identical modulo timings")


def test_primary_suite_is_exporter_free():
    # the primary package never imports the exporter; everything above ran
    # on generated data only
    import gfss

    modules = [m for m in dir(gfss) if "export" in m.lower()]
    _criterion("exporter-absence", modules == [], "primary component standalone")
