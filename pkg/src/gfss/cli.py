"""Command-line surface.

Subcommands: ``synth`` (generate episode files), ``infer`` (adapt and
score), ``eval`` (score stored predictions), ``gradcheck`` (gradient
verification suite), ``fuse`` (aggregate/fuse stored foreground maps).
``DIAM_THREADS`` caps task-level parallelism for ``infer`` (0 = one
worker per CPU; unset = serial).
"""

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _kernels
from .baselines import FusionConfig, PRESETS, ablation_preset, bam_aggregate, bam_fuse
from .core import forward
from .errors import GfssError, TaskError
from .evaluation import ConfusionAccumulator, aggregate_runs, scores
from .gradcheck import REL_TOLERANCE, run_suite
from .inference import ClassifierState, init_novel_prototypes, run_diam
from .labels import argmax_decode
from .prior import PriorPolicy
from .taskgen import SyntheticConfig, gen_suite, gen_task
from .taskio import read_task, write_report, write_task


def _parse_grid(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 32x32, got {text!r}") from exc


def _parse_updates(text):
    if not text.strip():
        return ()
    return tuple(int(t) for t in text.split(","))


def _n_workers():
    raw = os.environ.get("DIAM_THREADS", "").strip()
    if not raw:
        return 1
    value = int(raw)
    if value == 0:
        return os.cpu_count() or 1
    return max(1, value)


def _solver_config(args):
    config = ablation_preset(args.preset)
    weights = config.weights
    if args.alpha is not None:
        weights = replace(weights, alpha=args.alpha)
    if args.beta is not None:
        weights = replace(weights, beta=args.beta)
    config = replace(config, weights=weights)
    if args.lr is not None:
        config = replace(config, learning_rate=args.lr)
    if args.iters is not None:
        config = replace(config, iterations=args.iters)
    if args.prior is not None:
        updates = config.prior_policy.update_iterations
        config = replace(config, prior_policy=PriorPolicy(args.prior, updates))
    if args.prior_updates is not None:
        kind = config.prior_policy.kind
        config = replace(config, prior_policy=PriorPolicy(kind, _parse_updates(args.prior_updates)))
    if args.freeze_base:
        config = replace(config, freeze_base=True)
    if args.cosine:
        config = replace(config, cosine=True)
    if args.temperature is not None:
        config = replace(config, temperature=args.temperature)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _config_dict(config):
    return {
        "alpha": config.weights.alpha,
        "beta": config.weights.beta,
        "entropy_weight": config.weights.entropy_weight,
        "marginal_weight": config.weights.marginal_weight,
        "learning_rate": config.learning_rate,
        "iterations": config.iterations,
        "prior": {
            "kind": config.prior_policy.kind,
            "update_iterations": list(config.prior_policy.update_iterations),
        },
        "freeze_base": config.freeze_base,
        "cosine": config.cosine,
        "temperature": config.temperature,
        "seed": config.seed,
    }


def _score_mask(pred, truth, partition):
    acc = ConfusionAccumulator(partition.n_classes)
    acc.accumulate(pred, truth)
    return scores(acc, partition)


def _infer_one(path, config):
    task, classifier, _ = read_task(path)
    part = task.partition
    state = ClassifierState.create(classifier, init_novel_prototypes(task))
    entry = {"path": str(path)}

    initial = None
    if task.query_labels is not None:
        base_pred = argmax_decode(
            forward(task.query, state.theta_base_snapshot, config.cosine, config.temperature)
        )
        initial = _score_mask(base_pred, task.query_labels, part)
        entry["initial_scores"] = initial.as_dict()

    t0 = time.perf_counter()
    final_state, trace = run_diam(task, state, config)
    wall = time.perf_counter() - t0

    pred = argmax_decode(trace.final_probs)
    final = None
    if task.query_labels is not None:
        final = _score_mask(pred, task.query_labels, part)
        entry["scores"] = final.as_dict()
    entry["trace"] = {
        "total": [b.total for b in trace.breakdowns],
        "xent": [b.xent for b in trace.breakdowns],
        "query_entropy": [b.query_entropy for b in trace.breakdowns],
        "marginal_kl": [b.marginal_kl for b in trace.breakdowns],
        "kd": [b.kd for b in trace.breakdowns],
    }
    if trace.base_miou:
        entry["trace"]["base_miou"] = trace.base_miou
        entry["trace"]["novel_miou"] = trace.novel_miou
    return entry, pred, final, wall


def cmd_infer(args):
    config = _solver_config(args)
    paths = [Path(p) for p in args.tasks]
    workers = _n_workers()
    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _infer_one(p, config), paths))
    else:
        results = [_infer_one(p, config) for p in paths]
    total_wall = time.perf_counter() - t0

    entries, preds, finals, walls = zip(*results)
    if args.save_pred is not None:
        out_dir = Path(args.save_pred)
        out_dir.mkdir(parents=True, exist_ok=True)
        for path, pred in zip(paths, preds):
            np.save(out_dir / f"{path.stem}.pred.npy", pred.astype(np.uint8))

    report = {
        "kind": "gfss-infer-report",
        "version": 1,
        "backend": _kernels.active.name,
        "seed": config.seed,
        "config": _config_dict(config),
        "tasks": list(entries),
        "timings": {
            "wall_total_s": total_wall,
            "per_task_s": list(walls),
        },
    }
    scored = [s for s in finals if s is not None]
    if scored:
        mean_scores, std_scores = aggregate_runs(scored)
        report["aggregate"] = {
            "mean": mean_scores.as_dict(),
            "std": std_scores.as_dict(),
        }
        print(
            f"tasks={len(scored)} base={mean_scores.base:.4f} "
            f"novel={mean_scores.novel:.4f} mean={mean_scores.mean:.4f} "
            f"h_mean={mean_scores.h_mean:.4f}"
        )
    if args.report is not None:
        write_report(report, args.report)
    return 0


def cmd_eval(args):
    task, _, _ = read_task(args.task)
    if task.query_labels is None:
        raise TaskError("task file carries no query labels to score against")
    pred = np.load(args.pred)
    result = _score_mask(pred, task.query_labels, task.partition)
    print(
        f"base={result.base:.4f} novel={result.novel:.4f} "
        f"mean={result.mean:.4f} h_mean={result.h_mean:.4f} "
        f"base_w_bg={result.base_w_bg:.4f}"
    )
    if args.report is not None:
        write_report(
            {
                "kind": "gfss-eval-report",
                "version": 1,
                "task": str(args.task),
                "pred": str(args.pred),
                "scores": result.as_dict(),
            },
            args.report,
        )
    return 0


def _synthetic_fg_maps(task, stats, seed):
    """Soft foreground maps derived from the planted query regions."""
    rng = np.random.default_rng(seed ^ 0x5EED)
    part = task.partition
    truth = np.asarray(task.query_labels).ravel()
    maps = np.empty((part.n_novel, truth.shape[0]), dtype=np.float32)
    for i in range(part.n_novel):
        inside = truth == part.novel_start + i
        soft = np.where(inside, 0.9, 0.05) + 0.04 * rng.random(truth.shape[0])
        maps[i] = np.clip(soft, 0.0, 1.0)
    return maps


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = SyntheticConfig(
        d=args.d,
        n_base=args.n_base,
        n_novel=args.n_novel,
        grid=args.grid,
        shots=args.shots,
        separation=args.separation,
        background_fraction=args.background_fraction,
        seed=args.seed,
    )
    suite = gen_suite(config, args.tasks, seed=args.seed)
    for i, (task, classifier, stats) in enumerate(suite):
        fg = _synthetic_fg_maps(task, stats, args.seed + i) if args.fg_maps else None
        write_task(task, classifier, out / f"task_{i:03d}.task", foreground_maps=fg)
    print(f"wrote {len(suite)} task files to {out}")
    return 0


def cmd_gradcheck(args):
    t0 = time.perf_counter()
    worst, per_task = run_suite(n_tasks=args.tasks, seed=args.seed, step=args.step)
    wall = time.perf_counter() - t0
    ok = worst < REL_TOLERANCE
    print(
        f"gradcheck: {len(per_task)} tasks, max relative error {worst:.3e} "
        f"(tolerance {REL_TOLERANCE:.0e}), {wall:.1f}s -> {'OK' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


def cmd_fuse(args):
    task, classifier, fg_maps = read_task(args.task)
    if fg_maps is None:
        raise TaskError("task file carries no foreground maps to fuse")
    part = task.partition
    aggregated, p_a = bam_aggregate(fg_maps, part)
    base_map = argmax_decode(forward(task.query, classifier))
    fused = bam_fuse(aggregated, p_a, base_map, FusionConfig(tau=args.tau))
    np.save(args.out, fused.astype(np.uint8))
    print(f"wrote fused prediction to {args.out}")
    if task.query_labels is not None and args.report is not None:
        result = _score_mask(fused, task.query_labels, part)
        write_report(
            {
                "kind": "gfss-fuse-report",
                "version": 1,
                "task": str(args.task),
                "tau": args.tau,
                "scores": result.as_dict(),
            },
            args.report,
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gfss",
        description="Generalized few-shot segmentation inference engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="adapt the classifier on task files and score")
    p.add_argument("tasks", nargs="+", help="task file paths")
    p.add_argument("--preset", default="full", choices=PRESETS)
    p.add_argument("--alpha", type=float, default=None, help="support term weight")
    p.add_argument("--beta", type=float, default=None, help="distillation weight")
    p.add_argument("--lr", type=float, default=None, help="learning rate")
    p.add_argument("--iters", type=int, default=None, help="gradient steps")
    p.add_argument("--prior", default=None, choices=("uniform", "self", "oracle"))
    p.add_argument("--prior-updates", default=None, help="comma list, e.g. 0,10")
    p.add_argument("--freeze-base", action="store_true")
    p.add_argument("--cosine", action="store_true", help="cosine similarity logits")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", default=None, help="write a JSON run report here")
    p.add_argument("--save-pred", default=None, help="directory for predicted masks")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a stored prediction against a task file")
    p.add_argument("--task", required=True)
    p.add_argument("--pred", required=True, help=".npy prediction mask")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic episode suite")
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--n-base", type=int, default=15)
    p.add_argument("--n-novel", type=int, default=5)
    p.add_argument("--grid", type=_parse_grid, default=(32, 32))
    p.add_argument("--shots", type=int, default=5)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--background-fraction", type=float, default=0.5)
    p.add_argument("--fg-maps", action="store_true", help="also store foreground maps")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--tasks", type=int, default=100)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fuse", help="aggregate and fuse stored foreground maps")
    p.add_argument("--task", required=True)
    p.add_argument("--tau", type=float, required=True, help="confidence threshold")
    p.add_argument("--out", required=True, help=".npy output mask")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_fuse)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GfssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
