"""Compiled vs numpy quadrature kernel on the one-way binomial example.

    python benchmarks/bench_kernels.py --points 20000 --order 6
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from propriety_kit import kernels, oracle
from propriety_kit.model import GlmmModel, PriorBlock, validate


def oneway_model():
    X = [[1, "2.9"], [1, "1.7"], [1, "2.6"], [1, "3.1"], [1, "3.8"], [1, "4.2"]]
    Z = [[1, 0], [1, 0], [1, 0], [0, 1], [0, 1], [0, 1]]
    return validate(
        GlmmModel(y=[0, 4, 2, 4, 3, 5], m=[3, 4, 5, 4, 3, 5], X=X, Z=Z, blocks=[PriorBlock(2, "1.5", "0.1")], family="binomial")
    )


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--order", type=int, default=6)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = oneway_model()
    rng = np.random.default_rng(args.seed)
    betas = rng.uniform(-20, 20, size=(args.points, 2))
    taus = np.exp(rng.uniform(np.log(1e-4), np.log(1e3), size=args.points))
    eta0 = np.ascontiguousarray(betas @ model.X.T)
    tau = np.ascontiguousarray(np.repeat(taus[:, None], 2, axis=1))
    nodes, logw = oracle._gh_rule(args.order)
    call = (eta0, tau, model.Z, model.y_array, model.m_array, 0, 0, nodes, logw)

    t_py, (v_py, s_py) = timed(lambda: kernels.python_log_marginal_batch(*call), args.repeats)
    print(f"points={args.points} order={args.order} q=2")
    print(f"python  {t_py:8.3f} s  {1e6 * t_py / args.points:7.2f} us/point  failures={int(s_py.sum())}")
    if kernels.compiled_log_marginal_batch is None:
        print("cython  not built")
        return
    t_c, (v_c, s_c) = timed(lambda: kernels.compiled_log_marginal_batch(*call), args.repeats)
    print(f"cython  {t_c:8.3f} s  {1e6 * t_c / args.points:7.2f} us/point  failures={int(s_c.sum())}")
    ok = (s_py == 0) & (s_c == 0)
    print(f"speedup {t_py / t_c:6.2f}x  max |diff| {np.max(np.abs(v_py[ok] - v_c[ok])):.2e}")


if __name__ == "__main__":
    main()
