"""GL(N) Brownian motion Laplace estimate at two coupled step sizes vs the finite-N formula."""
import argparse
import math

import numpy as np

from artifact import ensembles as en, limit
from artifact.harness.stats import mean_stderr

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--step", type=float, default=1e-3, help="raw simulator step")
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=5)
    a = p.parse_args()
    N, s = a.n, a.t / 4
    rngs = [en.RngStream(a.seed, i) for i in range(a.paths)]
    coarse, fine = en.gl_brownian_paths_coupled(N, [s], a.step, rngs)
    shift = N * a.t / 2 + math.log(N)

    def obs(v):
        return np.exp(a.c * (v[:, 0, :] - shift)).sum(axis=1)

    est, se = mean_stderr(obs(coarse))
    d, _ = mean_stderr(obs(fine) - obs(coarse))
    want = limit.laplace_finiteN(limit.LaplaceQuery(c=[a.c], t=[a.t]), N)
    print(f"estimate {est:.5f} +- {se:.5f}, formula {want:.5f}, z {(est - want) / se:+.2f}, "
          f"halving shift {d:+.5f} ({d / se:+.2f} stderr)")
