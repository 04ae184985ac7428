"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import time

import numpy as np

from rancl import _fallback, datagen, kernels
from rancl import twotower as tt
from rancl.graph import boxplus_augment


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def _adam_case(impl, n):
    rng = np.random.default_rng(0)
    p, g, m, v = rng.normal(size=n), rng.normal(size=n), np.zeros(n), np.zeros(n)
    return lambda: impl.adam_update(p, g, m, v, 0.9, 0.999, 1e-8, 1e-3, 1.0)


def _sparsemax_case(impl, mask):
    z = np.random.default_rng(1).normal(size=(15, 15)) * 3
    return lambda: [impl.sparsemax_rows(z, mask) for _ in range(100)]


def _scan_case(impl):
    spec = datagen.default_topology()
    dims = spec.dims
    full = boxplus_augment(spec.truth_learned(), spec.known())
    adj = np.ascontiguousarray(full.matrix, dtype=np.int8)
    return lambda: [impl.scan_conflicts(adj, dims.n_agents, dims.n_params, dims.n_kpis, 2) for _ in range(100)]


def _train_case(impl, ds, epochs):
    def run():
        saved = kernels.adam_update
        kernels.adam_update = impl.adam_update
        try:
            tt.train(ds, tt.Hyperparams(epochs=epochs))
        finally:
            kernels.adam_update = saved
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--length", type=int, default=10_000)
    args = ap.parse_args(argv)

    if "compiled" not in kernels.BACKENDS:
        raise SystemExit("compiled extension not built; run `python setup.py build_ext --inplace`")
    compiled = kernels.BACKENDS["compiled"]
    ds = datagen.generate(datagen.default_topology(), args.length)
    n_params = tt.init_params(tt.Hyperparams(), args.length, np.random.default_rng(0)).size
    n_nodes = datagen.default_topology().dims.n_total

    cases = [
        (f"adam_update ({n_params} params)", lambda i: _adam_case(i, n_params)),
        ("sparsemax_rows 15x15 x100", lambda i: _sparsemax_case(i, False)),
        ("sparsemax_rows masked 15x15 x100", lambda i: _sparsemax_case(i, True)),
        (f"scan_conflicts {n_nodes} nodes x100", _scan_case),
        (f"train 20 epochs (L={args.length})", lambda i: _train_case(i, ds, 20)),
    ]
    print(f"{'kernel':<40}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, make in cases:
        py = _best(make(_fallback), args.repeat) * 1e3
        cy = _best(make(compiled), args.repeat) * 1e3
        print(f"{name:<40}{py:>12.3f}{cy:>14.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
