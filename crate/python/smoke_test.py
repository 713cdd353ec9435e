"""Smoke test for the vecchia_py extension module.

Build the module and put it on the path first, for example:

    cargo build --release -p vecchia-py --features extension-module
    cp target/release/libvecchia_py.so python/vecchia_py.so
    python python/smoke_test.py
"""

import json
import math
import sys

import numpy as np

import vecchia_py as vp


def check(cond, message):
    if not cond:
        print(f"FAIL {message}")
        sys.exit(1)
    print(f"ok   {message}")


def main():
    cfg = vp.MaternConfig(1.5, tau=10.0, s=1.0)
    check(abs(cfg.cov([0.0], [0.0]) - 1.0) < 1e-12, "covariance at zero distance is s^2")
    r = 10.0 * 0.1
    check(abs(cfg.cov([0.0], [0.1]) - (1 + r) * math.exp(-r)) < 1e-12, "half-integer Matern closed form")

    check(abs(vp.norming_constant([[0.0], [0.5], [1.0]], 2) - 1.25) < 1e-4, "norming constant of {0, 1/2, 1}")
    w = vp.interp_weights([[0.0], [1.0]], [0.25])
    check(np.allclose(w, [0.75, 0.25]), "linear interpolation weights")

    grid = vp.unit_grid(1, 33)
    dag = vp.LayeredDag.grid(grid, 1)
    check(len(dag) == 33 and dag.m == 2, "grid DAG size and parent count")
    check(all(p < i for i in range(len(dag)) for p in dag.parents(i)), "parents precede children")
    back = vp.LayeredDag.from_json(dag.to_json())
    check(back.to_json() == dag.to_json(), "DAG JSON round trip")
    check(set(json.loads(dag.to_json())) >= {"dimension", "gamma", "order_l", "m", "construction", "nodes"}, "DAG JSON fields")
    check(abs(dag.vartheta() - 1.0) < 1e-12, "linear interpolation operator norm is one")

    small = vp.LayeredDag.grid(vp.unit_grid(1, 9), 1)
    factor = vp.VecchiaFactor(small, cfg)
    z = factor.sample(seed=3)
    phi = np.array(factor.dense_precision())
    _, logdet = np.linalg.slogdet(phi)
    dense = 0.5 * logdet - 0.5 * len(z) * math.log(2 * math.pi) - 0.5 * np.dot(z, phi @ z)
    check(abs(factor.log_density(z) - dense) < 1e-8, "sparse log density matches dense Gaussian")
    check(np.allclose(factor.apply_precision(z), phi @ z), "precision product")

    scattered = np.random.default_rng(0).random((40, 2)).tolist()
    nn = vp.LayeredDag.nngp(scattered, parents=4, seed=1)
    check(all(len(nn.parents(i)) == 4 for i in range(nn.i0, len(nn))), "nearest-neighbour DAG parent counts")

    rng = np.random.default_rng(1)
    y = [math.sin(6 * p[0]) + 0.1 * rng.standard_normal() for p in grid]
    res = vp.fit(grid, y, dag, cfg, seed=5, iters=600, burn=100, b0=1e-3)
    truth = np.array([math.sin(6 * p[0]) for p in dag.points()])
    rmse = float(np.sqrt(np.mean((np.array(res.mean) - truth) ** 2)))
    check(rmse < 0.1, f"posterior mean tracks the truth (rmse {rmse:.3f})")
    check(len(res.sigma2) == 500, "trace length after burn-in")

    at_half, sup, _ = vp.transition_measure_sup(1.5)
    check(abs(at_half - 0.5) < 1e-6 and sup < 1.0, "transition measure for linear interpolation")
    check(abs(vp.gaussian_w2_sq([0.0], [[1.0]], [1.0], [[4.0]]) - 2.0) < 1e-12, "univariate W2 closed form")

    try:
        vp.MaternConfig(-1.0)
    except ValueError:
        check(True, "invalid regularity raises ValueError")
    else:
        check(False, "invalid regularity raises ValueError")

    print("all checks passed")


if __name__ == "__main__":
    main()
