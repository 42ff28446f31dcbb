"""Time the compiled and numpy likelihood kernels on the same batch.

Usage: ``python benchmarks/bench_kernels.py [--records N] [--repeat R]``
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from causal_energy import kernels, scm


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=8760)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    params = scm.default_params()
    batch = kernels.prepare_batch(scm.simulate_dataset(params, args.records, 0), params)
    theta = np.array(list(params.latent_values().values()))
    results = {}
    for name in kernels.available_backends():
        fn = lambda: kernels.loglik_grad(theta, batch, backend=name)  # noqa: E731
        fn()
        best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        results[name] = best
        print(f"{name:>9}: {best * 1e3:8.3f} ms per call ({args.records} records)")
    if len(results) == 2:
        print(f"speed-up: {results['numpy'] / results['compiled']:.2f}x")
        t_np, g_np = kernels.loglik_grad(theta, batch, backend="numpy")
        t_c, g_c = kernels.loglik_grad(theta, batch, backend="compiled")
        err = np.max(np.abs(g_np - g_c) / (np.abs(g_np) + 1e-12))
        print(f"max relative gradient difference: {err:.2e}")
    else:
        print("compiled kernel not built; only the numpy fallback is available")


if __name__ == "__main__":
    main()
