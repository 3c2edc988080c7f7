"""Monte Carlo summaries with a fixed summation order."""

import math

import numpy as np
from scipy import stats

BLOCK = 64


def pairwise_sum(v):
    """Sum over fixed blocks, then a pairwise tree; depends only on len(v)."""
    v = np.asarray(v, dtype=float)
    parts = [float(np.sum(v[a:a + BLOCK])) for a in range(0, v.size, BLOCK)]
    while len(parts) > 1:
        parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    return parts[0] if parts else 0.0


def mean_stderr(v):
    v = np.asarray(v, dtype=float)
    n = v.size
    m = pairwise_sum(v) / n
    if n < 2:
        return m, float("nan")
    var = pairwise_sum((v - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def z_score(estimate, stderr, value):
    if stderr <= 1e-12 * max(1.0, abs(estimate)):
        # deterministic observables: equal up to rounding counts as a match
        if abs(estimate - value) <= 1e-9 * max(1.0, abs(value)):
            return 0.0
        return math.copysign(math.inf, estimate - value)
    return (estimate - value) / stderr


def ks_2samp(a, b):
    r = stats.ks_2samp(np.asarray(a), np.asarray(b))
    return float(r.statistic), float(r.pvalue)
