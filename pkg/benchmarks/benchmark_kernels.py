"""Kernel backend benchmark: numba jit loops vs the pure-numpy fallback.

Times the hot kernels (softmax, entropy/KL reductions, softmax backward)
and one full adaptation run on a mid-size episode, for both backends.
The active backend in normal use follows the DIAM_NO_NUMBA environment
flag; here both are imported explicitly so one process can compare them.
Jit warm-up runs are excluded from the timings.

Run:

    python benchmarks/benchmark_kernels.py
"""

import statistics
import time

import numpy as np

from gfss import _kernels
from gfss.baselines import ablation_preset
from gfss.inference import ClassifierState, init_novel_prototypes, run_diam
from gfss.taskgen import SyntheticConfig, gen_task


def time_fn(fn, repeats=5):
    durations = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        durations.append(time.perf_counter() - t0)
    return statistics.mean(durations), statistics.pstdev(durations)


def bench_kernels(backend, z, p, q, dp):
    return {
        "softmax_rows": time_fn(lambda: backend.softmax_rows(z)),
        "sum_neg_p_logq": time_fn(lambda: backend.sum_neg_p_logq(p, q)),
        "kl_rows_sum": time_fn(lambda: backend.kl_rows_sum(p, q)),
        "softmax_backward": time_fn(lambda: backend.softmax_backward(p, dp)),
    }


_KERNEL_NAMES = (
    "softmax_rows", "sum_neg_p_logq", "kl_vec", "kl_rows_sum", "col_means", "softmax_backward"
)


def _swap_backend(backend):
    # the engine always calls through the _kernels module attributes
    previous = {name: getattr(_kernels, name) for name in _KERNEL_NAMES}
    for name in _KERNEL_NAMES:
        setattr(_kernels, name, getattr(backend, name))
    return previous


def bench_full_run(backend_name):
    backend = getattr(_kernels, f"{backend_name}_backend")
    previous = _swap_backend(backend)
    try:
        cfg = SyntheticConfig(d=64, n_base=15, n_novel=5, grid=(32, 32), shots=5, seed=3)
        task, classifier, _ = gen_task(cfg)
        state = ClassifierState.create(classifier, init_novel_prototypes(task))
        config = ablation_preset("full")
        run_diam(task, state, config)  # warm
        return time_fn(lambda: run_diam(task, state, config), repeats=3)
    finally:
        for name, fn in previous.items():
            setattr(_kernels, name, fn)


def main():
    rng = np.random.default_rng(0)
    n, k = 200_000, 21
    z = rng.normal(size=(n, k)) * 3
    p = _kernels.numpy_backend.softmax_rows(z)
    q = _kernels.numpy_backend.softmax_rows(rng.normal(size=(n, k)))
    dp = rng.normal(size=(n, k))

    backends = [("numpy", _kernels.numpy_backend)]
    if _kernels.numba_backend is not None:
        _kernels.warmup()
        # warm each jitted kernel at full shape before timing
        _kernels.numba_backend.softmax_rows(z[:10])
        _kernels.numba_backend.sum_neg_p_logq(p[:10], q[:10])
        _kernels.numba_backend.kl_rows_sum(p[:10], q[:10])
        _kernels.numba_backend.softmax_backward(p[:10], dp[:10])
        backends.append(("numba", _kernels.numba_backend))
    else:
        print("[info] numba not installed; timing the numpy path only")

    results = {name: bench_kernels(b, z, p, q, dp) for name, b in backends}

    print(f"\nkernel timings, {n} rows x {k} classes (mean +- std over 5 runs)")
    header = f"{'kernel':20s}" + "".join(f"{name:>18s}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for kernel in results["numpy"]:
        row = f"{kernel:20s}"
        for name, _ in backends:
            m, s = results[name][kernel]
            row += f"{m * 1e3:12.2f}ms +-{s * 1e3:3.1f}"
        if len(backends) == 2:
            row += f"{results['numpy'][kernel][0] / results['numba'][kernel][0]:9.2f}x"
        print(row)

    print("\nfull 100-iteration adaptation on one 32x32 episode (15 base / 5 novel):")
    for name, _ in backends:
        m, s = bench_full_run(name)
        print(f"  {name:>6s}: {m:.2f}s +- {s:.2f}")


if __name__ == "__main__":
    main()
