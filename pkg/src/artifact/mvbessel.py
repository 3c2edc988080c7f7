"""Multivariate Bessel functions and the shift-operator calculus built on them.

The normalized Bessel function Delta(rho) det[x_j^{z_i}] / (Delta(z) Delta(x))
is evaluated in multiprecision; coinciding x or z entries are replaced by
derivative columns or rows so the confluent limits are exact.  On top of it:
the D_c eigenrelation, exact small-N observables of deterministic-spectrum
products (a sum over index tuples of shifted evaluations), the sigma/tau
comparison, and the large-N approximant built from the measures toolbox.
"""

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from . import measures as ms
from .ensembles import RngStream, haar_unitary

GROUP_TOL = 1e-9
LOG_GUARD = 1e6
MC_CHUNK = 2000
FAST_COND = 1e4


class OverflowGuardError(ArithmeticError):
    pass


class ConditioningError(ArithmeticError):
    pass


class CostGuardError(ValueError):
    pass


@dataclass(frozen=True)
class BesselPoint:
    a: tuple
    z: tuple

    @property
    def N(self):
        return len(self.a)


@dataclass(frozen=True)
class ShiftSpec:
    indices: tuple = ()
    shifts: tuple = ()

    def __post_init__(self):
        if len(self.indices) != len(self.shifts):
            raise ValueError("indices and shifts differ in length")

    def point(self, N):
        """rho_N with the shifts applied (indices are 1-based)."""
        z = np.arange(N - 1, -1, -1, dtype=float)
        for i, c in zip(self.indices, self.shifts):
            z[i - 1] += c
        return z

    def extend(self, i, c):
        return ShiftSpec(self.indices + (i,), self.shifts + (c,))


@dataclass(frozen=True)
class AsymptoticInput:
    mu: ms.EmpiricalMeasure
    u: tuple
    v: tuple


def _groups(vals, key, close):
    """Sort and bundle (near-)equal values: list of (representative, multiplicity)."""
    order = sorted(range(len(vals)), key=lambda i: key(vals[i]))
    out = []
    for i in order:
        v = vals[i]
        if out and close(out[-1][0], v):
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return [(v, m) for v, m in out]


def _entry_series(Z, X, beta, order):
    """[delta^alpha] binom(Z+delta, beta) X^{Z+delta-beta} for alpha = 0..order."""
    poly = [mp.mpf(1)]
    for r in range(beta):
        # multiply by (Z - r + delta)
        nxt = [mp.mpf(0)] * (len(poly) + 1)
        for k, p in enumerate(poly):
            nxt[k] += p * (Z - r)
            nxt[k + 1] += p
        poly = nxt
    poly = [p / mp.factorial(beta) for p in poly]
    lx = mp.log(X)
    ex = [lx ** k / mp.factorial(k) for k in range(order + 1)]
    base = mp.power(X, Z - beta)
    out = []
    for a in range(order + 1):
        s = mp.mpf(0)
        for k in range(min(a, len(poly) - 1) + 1):
            s += poly[k] * ex[a - k]
        out.append(base * s)
    return out


def _reduced_vandermonde(groups):
    """Limit of Delta over grouped coordinates: cross terms and group signs."""
    v = mp.mpf(1)
    for a in range(len(groups)):
        Xa, ma = groups[a]
        v *= (-1) ** (ma * (ma - 1) // 2)
        for b in range(a + 1, len(groups)):
            Xb, mb = groups[b]
            v *= (Xa - Xb) ** (ma * mb)
    return v


def _default_dps(N):
    return 30 + 2 * N


def _log_bessel_double(x, z):
    """Double-precision evaluation, or None when it cannot be trusted.

    Taken only for pairwise distinct inputs whose equilibrated matrix has a
    small condition number, so the relative error stays near 1e-12.
    """
    N = len(x)
    xa = np.array(x)
    za = np.array(z)
    if N > 1:
        dx = np.abs(xa[:, None] - xa[None, :]) + np.eye(N) * np.max(xa)
        dz = np.abs(za[:, None] - za[None, :]) + np.eye(N) * (1 + np.max(np.abs(za)))
        if np.min(dx) <= 1e-3 * np.max(xa) or np.min(dz) <= 1e-3:
            return None
    L = za[:, None] * np.log(xa)[None, :]
    rs = L.real.max(axis=1)
    A = np.exp(L - rs[:, None])
    cs = np.abs(A).max(axis=0)
    A = A / cs
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > FAST_COND:
        return None
    sign, logdet = np.linalg.slogdet(A)
    iu = np.triu_indices(N, 1)
    lv = (np.log(sign) + logdet + rs.sum() + np.log(cs).sum()
          + sum(math.lgamma(k + 1) for k in range(N))
          - np.sum(np.log((za[:, None] - za[None, :])[iu].astype(complex)))
          - np.sum(np.log((xa[:, None] - xa[None, :])[iu].astype(complex))))
    if abs(lv.real) > LOG_GUARD:
        raise OverflowGuardError("log magnitude beyond the guard")
    return complex(lv)


def bessel_log_normalized(x, z, dps=None):
    """log of the normalized Bessel function (complex, principal imaginary part)."""
    x = [float(t) for t in np.atleast_1d(x)]
    z = [complex(t) for t in np.atleast_1d(z)]
    N = len(x)
    if len(z) != N or N < 1:
        raise ValueError("x and z need the same positive length")
    if any(t <= 0 for t in x):
        raise ValueError("x must be positive")
    if dps is None:
        fast = _log_bessel_double(x, z)
        if fast is not None:
            return fast
    with mp.workdps(dps or _default_dps(N)):
        xs = [mp.mpf(t) for t in x]
        zs = [mp.mpc(t) if t.imag else mp.mpf(t.real) for t in z]
        xg = _groups(xs, lambda v: v, lambda a, b: abs(a - b) <= GROUP_TOL * max(abs(a), abs(b)))
        zg = _groups(zs, lambda v: (float(mp.re(v)), float(mp.im(v))),
                     lambda a, b: abs(a - b) <= GROUP_TOL * max(1, abs(a), abs(b)))
        M = mp.matrix(N, N)
        r = 0
        for Z, mz in zg:
            c = 0
            for X, mx in xg:
                for beta in range(mx):
                    col = _entry_series(Z, X, beta, mz - 1)
                    for alpha in range(mz):
                        M[r + alpha, c] = col[alpha]
                    c += 1
            r += mz
        # equilibrate rows and columns: entries can span far more than the
        # working precision, which mpmath's LU would read as singular
        lscale = mp.mpf(0)
        for axis in (0, 1):
            for i in range(N):
                line = [M[i, j] if axis == 0 else M[j, i] for j in range(N)]
                m = max(abs(v) for v in line)
                if m == 0:
                    return complex(-np.inf)
                for j in range(N):
                    if axis == 0:
                        M[i, j] /= m
                    else:
                        M[j, i] /= m
                lscale += mp.log(m)
        det = mp.det(M)
        if det == 0:
            return complex(-np.inf)
        drho = mp.mpf(1)
        for k in range(N):
            drho *= mp.factorial(k)
        lv = (mp.log(drho * det / (_reduced_vandermonde(zg) * _reduced_vandermonde(xg)))
              + lscale)
        if abs(mp.re(lv)) > LOG_GUARD:
            raise OverflowGuardError("log magnitude beyond the guard")
        return complex(lv)


def bessel_normalized(x, z, dps=None):
    """Delta(rho_N) det[x_j^{z_i}] / (Delta(z) Delta(x)); 1 at z = rho_N."""
    lv = bessel_log_normalized(x, z, dps)
    if lv.real == -np.inf:
        return 0j
    return complex(np.exp(lv))


def _corner_logdets(x, U):
    # Y = U diag(x) U*: the corners of Y are Gram matrices of the rows of
    # U diag(sqrt x), so R from QR of (U diag(sqrt x))* is a Cholesky factor
    B = np.conj(np.swapaxes(U * np.sqrt(x), -1, -2))
    r = np.linalg.qr(B, mode="r")
    d = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    return 2.0 * np.cumsum(np.log(d), axis=-1), d


def _gn_chunk(args):
    x, z, n, seed, cid = args
    N = x.size
    g = RngStream(seed, cid).generator()
    expo = np.empty(N, dtype=complex)
    expo[:-1] = z[:-1] - z[1:] - 1.0
    expo[-1] = z[-1]
    vals = np.empty(n, dtype=complex)
    done = 0
    tries = 0
    while done < n:
        U = haar_unitary(N, g, n - done)
        ld, d = _corner_logdets(x, U)
        ok = np.all(d > 1e-150, axis=-1)
        k = int(ok.sum())
        vals[done:done + k] = np.exp(ld[ok] @ expo)
        done += k
        tries += 1
        if tries > 20:
            raise ConditioningError("degenerate corner determinants")
    return vals


def gn_integral_mc(x, z, trials, seed, workers=1):
    """Monte Carlo of the Gelfand-Naimark integral of |U diag(x) U*|^z.

    Returns (estimate, stderr).  Trials are cut into fixed chunks with their
    own streams, so the answer does not depend on the worker count.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=complex)
    sizes = [min(MC_CHUNK, trials - a) for a in range(0, trials, MC_CHUNK)]
    jobs = [(x, z, n, seed, i) for i, n in enumerate(sizes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_gn_chunk, jobs))
    else:
        parts = [_gn_chunk(j) for j in jobs]
    v = np.concatenate(parts)
    est = v.mean()
    se = math.sqrt((np.var(v.real) + np.var(v.imag)) / max(1, v.size - 1)) if v.size > 1 else 0.0
    return complex(est), se


def _prefactor_at(z, i, c):
    zi = z[i - 1]
    p = 1.0
    for j in range(z.size):
        if j != i - 1:
            p *= (c + zi - z[j]) / (zi - z[j])
    return p


def eigenrelation_check(x, z, c):
    """Relative residual of D_c B(z) = (sum x^c) B(z)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=complex)
    N = z.size
    if N > 1:
        gap = min(abs(z[i] - z[j]) for i in range(N) for j in range(i + 1, N))
        if gap <= 1e-6:
            raise ConditioningError("z entries nearly coincide")
    dps = _default_dps(N) + 10
    with mp.workdps(dps):
        base = mp.exp(mp.mpc(bessel_log_normalized(x, z)))
        lhs = mp.mpc(0)
        for i in range(N):
            zi = [mp.mpc(t) for t in z]
            p = mp.mpc(1)
            for j in range(N):
                if j != i:
                    p *= (c + zi[i] - zi[j]) / (zi[i] - zi[j])
            zs = z.copy()
            zs[i] += c
            lhs += p * mp.exp(mp.mpc(bessel_log_normalized(x, zs)))
        eig = mp.fsum(mp.power(mp.mpf(t), c) for t in x)
        rhs = eig * base
        return float(abs(lhs - rhs) / abs(rhs))


class BesselFactor:
    """Normalized Bessel function of a fixed spectrum, as a function of z."""

    def __init__(self, x, dps=None):
        self.x = np.asarray(x, dtype=float)
        self.dps = dps
        self._cache = {}

    def log_at(self, z):
        key = tuple(np.round(np.asarray(z, dtype=complex), 14))
        if key not in self._cache:
            self._cache[key] = bessel_log_normalized(self.x, z, self.dps)
        return self._cache[key]


class GaussianFactor:
    """prod_a exp[d (z_a - N + 1/2)^2] / exp[d (1/2 - a)^2]; equal to 1 at rho_N."""

    def __init__(self, delta, N):
        self.delta = float(delta)
        self.N = int(N)

    def log_at(self, z):
        z = np.asarray(z, dtype=complex)
        a = np.arange(1, self.N + 1)
        return complex(self.delta * np.sum((z - self.N + 0.5) ** 2 - (0.5 - a) ** 2))


def apply_shift_product(factors, spec, N=None):
    """Value of T_{c1,z_i1} ... T_{cl,z_il} (prod factors) at rho_N.

    The shifts commute, so this is the product of factors at the shifted point.
    factors: iterable of objects with log_at(z), or (factor, power) pairs.
    """
    if N is None:
        N = next(f.x.size if hasattr(f, "x") else f.N for f in _unpack(factors))
    z = spec.point(N)
    lv = 0j
    for f, p in _pairs(factors):
        lv += p * f.log_at(z)
    return complex(np.exp(lv))


def _pairs(factors):
    for f in factors:
        if isinstance(f, tuple):
            yield f
        else:
            yield f, 1


def _unpack(factors):
    for f, _ in _pairs(factors):
        yield f


def rational_prefactor(spec, target_index, c, N):
    """prod_{j != i} (c + z_i - z_j)/(z_i - z_j) at rho_N after the shifts in spec."""
    return float(_prefactor_at(spec.point(N), target_index, c))


def _blocks(times):
    """Index ranges of factors receiving shifts 1..l: (M_{l+1}, M_l]."""
    M = list(times) + [0]
    return [(M[l + 1], M[l]) for l in range(len(times))]


def _sigma_terms(factor_list, times, c, N, index_range, log_space=False):
    """Yield (tuple, sigma) over index tuples for the block structure of times."""
    blocks = _blocks(times)
    # within a block identical factors are evaluated once and powered
    block_groups = []
    for lo, hi in blocks:
        counts = {}
        for m in range(lo, hi):
            f = factor_list[m]
            counts[id(f)] = counts.get(id(f), (f, 0))
            counts[id(f)] = (f, counts[id(f)][1] + 1)
        block_groups.append(list(counts.values()))
    for tup in itertools.product(index_range, repeat=len(times)):
        spec = ShiftSpec()
        lv = 0j
        for l, (i, cl) in enumerate(zip(tup, c)):
            lv += math.log(rational_prefactor(spec, i, cl, N))
            spec = spec.extend(i, cl)
            z = spec.point(N)
            for f, p in block_groups[l]:
                lv += p * f.log_at(z)
        yield tup, (lv if log_space else complex(np.exp(lv)))


def _factor_list(spectra, dps=None):
    cache = {}
    out = []
    for s in spectra:
        x = np.asarray(s.atoms if isinstance(s, ms.EmpiricalMeasure) else s, dtype=float)
        key = tuple(np.sort(x))
        if key not in cache:
            cache[key] = BesselFactor(x, dps)
        out.append(cache[key])
    return out


def _check_times(times, n_factors):
    times = [int(m) for m in times]
    if any(times[i] < times[i + 1] for i in range(len(times) - 1)):
        raise ValueError("times must be nonincreasing")
    if times and (times[0] > n_factors or times[-1] < 0):
        raise ValueError("times exceed the number of factors")
    return times


def observable_deterministic(spectra, times, c, N):
    """E[prod_i sum_j y_j(M_i)^{c_i}] for products of fixed-spectrum factors.

    spectra[m] holds the squared singular values of factor m+1 (the product is
    Y(M) = X(M) ... X(1)).  Exact sum over all index tuples.
    """
    N = int(N)
    c = [float(s) for s in np.atleast_1d(c)]
    if N > 8:
        raise CostGuardError("exact observable limited to N <= 8")
    if N ** len(c) > 1e6:
        raise CostGuardError("too many index tuples")
    if not 0 < sum(c) < 1:
        raise ValueError("sum of exponents must lie in (0, 1)")
    times = _check_times(times, len(spectra))
    if len(times) != len(c):
        raise ValueError("one time per exponent")
    for s in spectra:
        if len(np.atleast_1d(s.atoms if isinstance(s, ms.EmpiricalMeasure) else s)) != N:
            raise ValueError("each spectrum needs exactly N atoms")
    fl = _factor_list(spectra)
    total = math.fsum(v.real for _, v in _sigma_terms(fl, times, c, N, range(1, N + 1)))
    return total


def tau_term(profile, times, tup, c, N):
    """tau for one index tuple, from the centering profile of the factors."""
    E, V = profile.E_N, profile.V_N
    M = list(times) + [0]
    spec = ShiftSpec()
    lv = 0.0
    for l, (i, cl) in enumerate(zip(tup, c)):
        lv += cl * E[M[l]]
        lv += math.log(rational_prefactor(spec, i, cl, N))
        spec = spec.extend(i, cl)
        g = GaussianFactor(0.5 * (V[M[l]] - V[M[l + 1]]), N)
        lv += g.log_at(spec.point(N)).real
    return math.exp(lv)


def sigma_tau_diagnostic(spectra, N, k, c, times):
    """Pairs (tuple, sigma, tau, sigma/tau) over index tuples with entries <= N^{1/3}."""
    N = int(N)
    c = [float(s) for s in np.atleast_1d(c)]
    if N > 60 or k > 2 or len(c) != k:
        raise CostGuardError("diagnostic limited to N <= 60, k <= 2")
    times = _check_times(times, len(spectra))
    meas = [s if isinstance(s, ms.EmpiricalMeasure) else ms.EmpiricalMeasure(s) for s in spectra]
    prof = ms.centering(meas, N)
    fl = _factor_list(meas)
    imax = int(math.floor(N ** (1.0 / 3.0) + 1e-12))
    rows = []
    for tup, lsig in _sigma_terms(fl, times, c, N, range(1, imax + 1), log_space=True):
        sig = math.exp(lsig.real)
        tau = tau_term(prof, times, tup, c, N)
        rows.append((tup, sig, tau, sig / tau))
    return rows


def bessel_asymptotic(inp):
    """Large-N approximant of B_mu(N(u+1); N(v+1))."""
    mu = inp.mu
    u = [complex(t) for t in np.atleast_1d(inp.u)]
    v = [complex(t) for t in np.atleast_1d(inp.v)]
    N = mu.size
    if len(u) != len(v) or len(u) > N:
        raise ValueError("need k <= N pairs of points")
    if all(a == b for a, b in zip(u, v)):
        return 1.0 + 0j
    val = complex(ms.cauchy_ratio(mu, u, v))
    lv = 0j
    for a, b in zip(u, v):
        sa = complex(ms.s_transform(mu, a))
        sb = complex(ms.s_transform(mu, b))
        lv += 0.5 * (np.log(sb) - np.log(sa))
        lv += N * (complex(ms.h_eval(mu, a)) - complex(ms.h_eval(mu, b)))
    return val * complex(np.exp(lv))


def bessel_lattice(x, u, v):
    """B_mu(N(u+1); N(v+1)): rho_N with entries N(v_i+1) replaced by N(u_i+1)."""
    x = np.asarray(x, dtype=float)
    N = x.size
    z = np.arange(N - 1, -1, -1, dtype=complex)
    for a, b in zip(np.atleast_1d(u), np.atleast_1d(v)):
        pos = int(round(N * (b.real + 1)))
        if abs(N * (b + 1) - pos) > 1e-9 or not 0 <= pos <= N - 1:
            raise ValueError("v must lie on the lattice (1/N)Z in [-1, -1/N]")
        z[N - 1 - pos] = N * (a + 1)
    return bessel_normalized(x, z)
