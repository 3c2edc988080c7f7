"""Monte Carlo drivers paired with the exact formulas.

Replica r always draws from RngStream(seed, r) and replicas are cut into
fixed chunks, so worker count never changes a reported number.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import limit as lm
from .. import measures as ms
from ..ensembles import (PATH_CHUNK, ProductAccumulator, RngStream, accumulate, ginibre,
                         gl_brownian_paths, haar_unitary, log_sq_singular_values,
                         truncated_unitary)
from ..mvbessel import observable_deterministic
from .config import ConfigError, ExperimentConfig, Query, config_hash
from .report import ExperimentReport
from .stats import ks_2samp, mean_stderr, z_score

REPLICA_CHUNK = 200
COMPARE_OFFSET = 1 << 32


def seed_plan(master_seed, replicas, workers=1):
    """One stream per replica; the id is the replica index whatever the workers."""
    if replicas < 1:
        raise ValueError("replicas must be positive")
    return [RngStream(int(master_seed), i) for i in range(replicas)]


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _chunks(n, size=REPLICA_CHUNK):
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def _new_report(cfg):
    return ExperimentReport(cfg.experiment, cfg.to_dict(), config_hash(cfg))


def _stamp(rep, t0):
    rep.runtime = {"seconds": round(time.perf_counter() - t0, 3),
                   "finished": time.strftime("%Y-%m-%dT%H:%M:%S")}
    return rep


def _factor_counts(cfg, q):
    if q.M is not None:
        return [int(m) for m in q.M]
    if q.t is None:
        raise ConfigError("query needs t or M")
    # the small offset keeps floor(tN) honest when tN is an integer in exact arithmetic
    return [int(math.floor(t * cfg.N + 1e-9)) for t in q.t]


# ---------------------------------------------------------------- products

def draw_factor(spec, N, g):
    """One factor and its squared singular values (for the centering traces)."""
    if spec.kind == "fixed_spectrum":
        x = spec.spectrum(N)
        return np.sqrt(x)[:, None] * haar_unitary(N, g), x
    if spec.kind == "ginibre_polar":
        G = ginibre(spec.ambient(N), N, g) / math.sqrt(spec.ambient(N))
        x = np.linalg.eigvalsh(np.conj(G.T) @ G)
        return np.sqrt(x)[:, None] * haar_unitary(N, g), x
    X = truncated_unitary(N, spec.ambient(N), g)
    return X, None


def _trace_stats(X, x):
    """Normalized tr|X|^2 and the time increment (tr|X|^4 - tr|X|^2^2)/tr|X|^2^2."""
    if x is None:
        P = np.conj(X.T) @ X
        m1 = np.trace(P).real / X.shape[0]
        m2 = np.sum(np.abs(P) ** 2) / X.shape[0]
    else:
        m1, m2 = x.mean(), np.mean(x * x)
    return math.log(m1), (m2 - m1 * m1) / (m1 * m1)


def _product_chunk(job):
    """Log squared singular values and centering at each requested M."""
    cfg_d, lo, hi, Ms, compare = job
    cfg = ExperimentConfig.from_dict(cfg_d)
    N = cfg.N
    # the comparison ensemble uses a disjoint block of stream ids
    off = COMPARE_OFFSET if compare else 0
    gens = [RngStream(cfg.seed, off + r).generator() for r in range(lo, hi)]
    acc = ProductAccumulator.identity(N, (len(gens),), K=1000, track_right=False)
    L = np.zeros((len(gens), len(Ms), N))
    E = np.zeros((len(gens), len(Ms)))
    V = np.zeros((len(gens), len(Ms)))
    e = np.zeros(len(gens))
    v = np.zeros(len(gens))
    want = {m: i for i, m in enumerate(Ms)}
    for m in range(1, max(Ms) + 1):
        spec = cfg.factor(m - 1, compare)
        Xs = []
        for r, g in enumerate(gens):
            X, x = draw_factor(spec, N, g)
            le, dv = _trace_stats(X, x)
            e[r] += le
            v[r] += dv / N
            Xs.append(X)
        accumulate(acc, np.stack(Xs))
        if m in want:
            L[:, want[m]] = log_sq_singular_values(acc).values
            E[:, want[m]] = e
            V[:, want[m]] = v
    return L, E, V


def simulate_products(cfg, Ms, compare=False):
    Ms = sorted(set(int(m) for m in Ms))
    if Ms[0] < 1:
        raise ConfigError("every query needs at least one factor")
    jobs = [(cfg.to_dict(), lo, hi, Ms, compare) for lo, hi in _chunks(cfg.replicas)]
    parts = _map(_product_chunk, jobs, cfg.workers)
    L, E, V = (np.concatenate([p[i] for p in parts]) for i in range(3))
    return Ms, L, E, V


def _fixed_centering(cfg, Ms, compare=False):
    """Exact centering sequences when every factor has a fixed spectrum."""
    fs = cfg.compare_factors if compare else cfg.factors
    if any(f.kind != "fixed_spectrum" for f in fs):
        return None
    meas = [ms.EmpiricalMeasure(cfg.factor(m, compare).spectrum(cfg.N)) for m in range(max(Ms))]
    prof = ms.centering(meas, cfg.N)
    return prof.E_N[Ms], prof.V_N[Ms]


def run_universality(cfg):
    t0 = time.perf_counter()
    rep = _new_report(cfg)
    N = cfg.N
    plans = [_factor_counts(cfg, q) for q in cfg.queries]
    Ms, L, E, V = simulate_products(cfg, [m for p in plans for m in p])
    exact = _fixed_centering(cfg, Ms)
    if exact is not None:
        # fixed spectra: the centering is deterministic, use the exact profile
        E = np.broadcast_to(exact[0], E.shape)
        gam = exact[1]
    else:
        gam = V.mean(axis=0)
    col = {m: i for i, m in enumerate(Ms)}
    for q, plan in zip(cfg.queries, plans):
        order = sorted(range(len(q.c)), key=lambda i: -plan[i])
        c = [q.c[i] for i in order]
        Mq = [plan[i] for i in order]
        obs = np.ones(cfg.replicas)
        for ci, m in zip(c, Mq):
            j = col[m]
            obs *= np.exp(ci * (L[:, j, :] - E[:, j, None] - math.log(N))).sum(axis=1)
        est, se = mean_stderr(obs)
        g = [float(gam[col[m]]) for m in Mq]
        row = {"c": c, "M": Mq, "gamma": g, "replicas": cfg.replicas,
               "estimate": est, "stderr": se}
        if all(abs(x) < 1e-15 for x in g):
            # no spread accumulated: every centered value is -log N
            row["formula"] = float(N ** (len(c) - sum(c)))
            row["finite_N"] = row["formula"]
            row["flag"] = "gamma_zero"
        elif any(abs(x) < 1e-15 for x in g):
            raise ConfigError("mixed zero and positive times in one query")
        else:
            lq = lm.LaplaceQuery(tuple(g), tuple(c))
            row["formula"] = lm.laplace_limit(lq)
            row["finite_N"] = lm.laplace_finiteN(lq, N)
        row["z"] = z_score(est, se, row["formula"])
        row["z_finite_N"] = z_score(est, se, row["finite_N"])
        if se > 0.1 * abs(est):
            rep.warnings.append(f"stderr above 10% of the estimate for c={c}")
        rep.add_query(**row)
    if cfg.compare_factors:
        Mtop = max(Ms)
        _, L2, E2, _ = simulate_products(cfg, [Mtop], compare=True)
        ex2 = _fixed_centering(cfg, [Mtop], compare=True)
        e2 = ex2[0][0] if ex2 is not None else E2[:, 0]
        top1 = L[:, col[Mtop], 0] - E[:, col[Mtop]]
        top2 = L2[:, 0, 0] - e2
        d, p = ks_2samp(top1, top2)
        rep.statistics.append({"test": "ks_top_value", "M": Mtop, "statistic": d, "p_value": p,
                               "replicas": cfg.replicas})
    return _stamp(rep, t0)


# ---------------------------------------------------------------- small N

def _dense_chunk(job):
    cfg_d, lo, hi, Ms = job
    cfg = ExperimentConfig.from_dict(cfg_d)
    N = cfg.N
    gens = [s.generator() for s in seed_plan(cfg.seed, hi)[lo:]]
    Y = np.broadcast_to(np.eye(N, dtype=complex), (len(gens), N, N)).copy()
    out = np.zeros((len(gens), len(Ms), N))
    want = {m: i for i, m in enumerate(Ms)}
    for m in range(1, max(Ms) + 1):
        x = cfg.factor(m - 1).spectrum(N)
        X = np.sqrt(x)[:, None] * np.stack([haar_unitary(N, g) for g in gens])
        Y = X @ Y
        if m in want:
            out[:, want[m]] = np.linalg.eigvalsh(np.conj(np.swapaxes(Y, -1, -2)) @ Y)
    return out


def run_oracle_smalln(cfg):
    t0 = time.perf_counter()
    rep = _new_report(cfg)
    N = cfg.N
    for q in cfg.queries:
        plan = _factor_counts(cfg, q)
        order = sorted(range(len(q.c)), key=lambda i: -plan[i])
        c = [q.c[i] for i in order]
        Mq = [plan[i] for i in order]
        spectra = [cfg.factor(m).spectrum(N) for m in range(Mq[0])]
        exact = observable_deterministic(spectra, Mq, c, N)
        Ms = sorted(set(Mq))
        jobs = [(cfg.to_dict(), lo, hi, Ms) for lo, hi in _chunks(cfg.replicas, 5000)]
        Y = np.concatenate(_map(_dense_chunk, jobs, cfg.workers))
        obs = np.ones(cfg.replicas)
        for ci, m in zip(c, Mq):
            obs *= (np.clip(Y[:, Ms.index(m)], 0, None) ** ci).sum(axis=1)
        est, se = mean_stderr(obs)
        rep.add_query(c=c, M=Mq, replicas=cfg.replicas, estimate=est, stderr=se,
                      formula=exact, z=z_score(est, se, exact))
    return _stamp(rep, t0)


# ---------------------------------------------------------------- formulas

def run_convergence_sweep(c, t, N_list, cfg=None):
    """laplace_finiteN against laplace_limit with per-step order estimates."""
    t0 = time.perf_counter()
    cfg = cfg or ExperimentConfig(experiment="convergence", queries=[Query(c=[c], t=[t])],
                                  N_list=list(N_list))
    rep = _new_report(cfg)
    q = lm.LaplaceQuery((t,), (c,))
    lim = lm.laplace_limit(q)
    prev = None
    for N in N_list:
        fin = lm.laplace_finiteN(q, N)
        err = fin - lim
        row = {"c": c, "t": t, "N": N, "finite_N": fin, "limit": lim, "error": err,
               "ratio": None, "order": None}
        if abs(err) < 1e-12 * max(1.0, abs(lim)):
            row["order"] = "exact"
        elif prev is not None and prev[1] != 0:
            row["ratio"] = err / prev[1]
            row["order"] = -math.log(abs(err / prev[1])) / math.log(N / prev[0])
        rep.add_query(**row)
        prev = (N, err)
    return _stamp(rep, t0)


def run_laplace(cfg, finite=False):
    t0 = time.perf_counter()
    rep = _new_report(cfg)
    for qc in cfg.queries:
        q = lm.LaplaceQuery(tuple(qc.t), tuple(qc.c))
        if finite:
            rep.add_query(c=list(q.c), t=list(q.t), N=cfg.N, value=lm.laplace_finiteN(q, cfg.N))
        else:
            rep.add_query(c=list(q.c), t=list(q.t), value=lm.laplace_limit(q))
    return _stamp(rep, t0)


def run_kernel(cfg):
    """Density grid rows (t, x, density) plus the expected count above each x."""
    t0 = time.perf_counter()
    rep = _new_report(cfg)
    xs = np.asarray(cfg.x_grid if cfg.x_grid is not None else np.linspace(-6, 3, 46))
    times = sorted({t for q in cfg.queries for t in (q.t or [])})
    if not times:
        raise ConfigError("kernel needs query times")
    for t in times:
        dens = lm.density(t, xs)
        for x, d in zip(xs, dens):
            rep.add_query(t=t, x=float(x), density=float(d))
        rep.statistics.append({"test": "density_nonnegative", "t": t,
                               "min_density": float(np.min(dens)),
                               "expected_count_above_min_x": lm.expected_count(t, float(xs[0]))})
    return _stamp(rep, t0)


# ---------------------------------------------------------------- paths

def _paths_chunk(job):
    N, raw, step, seed, lo, hi, scheme = job
    rngs = seed_plan(seed, hi)[lo:]
    return gl_brownian_paths(N, raw, step, rngs, scheme)


def sample_paths(N, t_max, steps, seed, scheme="exact", replicas=1, workers=1):
    """Centered xi^(N)(t/4) - N t/2 - log N on t = t_max/steps, ..., t_max.

    Returns (times, values) with values of shape (replicas, steps, N).
    """
    if N > 200 or steps < 100:
        raise ConfigError("sample-paths needs N <= 200 and steps >= 100")
    t = t_max * np.arange(1, steps + 1) / steps
    raw = t / 4.0
    if scheme == "exact":
        step = raw[0]
    else:
        step = min(1e-3, raw[0] / 10)
    jobs = [(N, raw, step, seed, lo, hi, scheme) for lo, hi in _chunks(replicas, PATH_CHUNK)]
    vals = np.concatenate(_map(_paths_chunk, jobs, workers))
    vals = vals - (N * t / 2.0)[None, :, None] - math.log(N)
    return t, vals


def drift_slopes(t, vals, n_top=3, t_from=None):
    """Least-squares slope of the replica-mean of each of the top paths."""
    t_from = 0.2 * t[-1] if t_from is None else t_from
    sel = t >= t_from
    mean = vals.mean(axis=0)
    return [float(np.polyfit(t[sel], mean[sel, j], 1)[0]) for j in range(min(n_top, vals.shape[2]))]


def run_sample_paths(cfg, replicas=1):
    t0 = time.perf_counter()
    rep = _new_report(cfg)
    t, vals = sample_paths(cfg.N, cfg.t_max, cfg.steps, cfg.seed, cfg.scheme, replicas, cfg.workers)
    gaps = -np.diff(vals, axis=2)
    rep.statistics.append({"test": "strict_ordering", "ok": bool(np.all(gaps > 0)) if cfg.N > 1 else True,
                           "min_gap": float(gaps.min()) if cfg.N > 1 else None})
    slopes = drift_slopes(t, vals)
    rep.statistics.append({"test": "drift_slopes", "t_from": 0.2 * cfg.t_max, "slopes": slopes,
                           "predicted": [0.5 - j for j in range(1, len(slopes) + 1)],
                           "replicas": replicas})
    rows = [{"replica": r, "time": float(t[i]), "j": j + 1, "value": float(vals[r, i, j])}
            for r in range(vals.shape[0]) for i in range(len(t)) for j in range(cfg.N)]
    return _stamp(rep, t0), rows
