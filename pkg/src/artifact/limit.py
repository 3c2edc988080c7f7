"""Joint Laplace transforms and the correlation kernel of the limiting line ensemble.

The Laplace observables E[prod_i sum_j exp(c_i xi_j(t_i))] are contour
integrals over rectangles wrapping the poles of Gamma(z).  The innermost
variable is summed by residues and outer variables by Gauss-Legendre panels
on nested rectangles.  The finite-N versions (Dyson Brownian motion with drift,
centred by N t/2 + log N) only differ by a ratio of gamma functions.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln, loggamma, rgamma


class PlanError(ValueError):
    pass


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LaplaceQuery:
    t: tuple
    c: tuple

    def __post_init__(self):
        t = tuple(float(s) for s in np.atleast_1d(self.t))
        c = tuple(float(s) for s in np.atleast_1d(self.c))
        if len(t) != len(c) or not t:
            raise ValueError("t and c need the same positive length")
        if any(s <= 0 for s in t) or any(s <= 0 for s in c):
            raise ValueError("times and exponents must be positive")
        if any(t[i] < t[i + 1] for i in range(len(t) - 1)):
            raise ValueError("times must be sorted decreasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "c", c)

    @property
    def k(self):
        return len(self.t)


@dataclass(frozen=True)
class ContourPlan:
    n_max: int = None        # pole truncation depth; None picks it from the decay rate
    nodes: int = 16          # Gauss-Legendre nodes per unit panel
    right_margin: float = 0.25
    height0: float = 1.0
    height_step: float = 0.25
    rtol: float = 1e-15
    n_cap: int = 200000

    def right_edge(self, i, cmax):
        return i * (cmax + self.right_margin)

    def half_height(self, i):
        return self.height0 + self.height_step * i

    def validate(self, cmax):
        if self.right_margin <= 0 or self.height_step <= 0 or self.height0 <= 0:
            raise PlanError("contour margins must be positive")
        if self.nodes < 2:
            raise PlanError("need at least two nodes per panel")
        if self.n_max is not None and self.n_max < 10:
            raise PlanError("n_max must be at least 10")


@dataclass(frozen=True)
class KernelQuery:
    s: float
    x: float
    t: float
    y: float


@dataclass(frozen=True)
class KernelPlan:
    c_w: float = None        # abscissa of the w line; None puts it at the saddle
    dv: float = 0.04         # trapezoid step on the w line
    tail: float = 1e-12
    n_terms: int = None


def _pochhammer_ratio(c, n):
    """q_j = (1 - c)_j / j! for j = 0..n."""
    j = np.arange(1, n + 1)
    return np.concatenate([[1.0], np.cumprod((j - c) / j)])


def _residues(c, t, n, N=None):
    """Residues of g(z) = e^{(tc/2)(2z+c-1)} Gamma(z)/Gamma(z+c)/c at z = 0..-n.

    With N given the extra factor Gamma(z+c+N)/Gamma(z+N) is included and the
    poles stop at -(N-1).
    """
    if N is not None:
        n = min(n, N - 1)
    j = np.arange(n + 1)
    r = _pochhammer_ratio(c, n) * rgamma(c) / c * np.exp(0.5 * t * c * (c - 1.0 - 2.0 * j))
    if N is not None:
        r = r * np.exp(gammaln(N - j + c) - gammaln(N - j))
    return r


def _auto_nmax(q, plan, N=None):
    if plan.n_max is not None:
        n = plan.n_max
    else:
        # terms decay like exp(-t c n); pad for the polynomial prefactor
        rate = min(ti * ci for ti, ci in zip(q.t, q.c))
        n = int(math.ceil((40.0 + 2.0 * math.log1p(1.0 / rate)) / rate)) + 10
        n = max(n, 10)
    if N is not None:
        n = min(n, N)
    if n > plan.n_cap:
        raise TruncationError(f"truncation depth {n} exceeds the cap {plan.n_cap}")
    return n


def _series_k1(c, t, plan, N=None):
    n = _auto_nmax(LaplaceQuery((t,), (c,)), plan, N)
    a = _residues(c, t, n, N)
    s = math.fsum(a)
    if N is None or n < N - 1:
        tail = abs(a[-1])
        if tail > plan.rtol * abs(s) and tail > 1e-300:
            raise TruncationError(f"series not converged by n_max={n}: last term {tail:.2e}")
    return s


def _log_g(z, c, t, N=None):
    lg = 0.5 * t * c * (2.0 * z + c - 1.0) + loggamma(z) - loggamma(z + c) - math.log(c)
    if N is not None:
        lg = lg + loggamma(z + c + N) - loggamma(z + N)
    return lg


def _cross(z1, z2, c1, c2):
    return (z1 - z2) * (z1 + c1 - z2 - c2) / ((z1 - z2 - c2) * (z1 + c1 - z2))


def _rectangle(left, right, h, nodes):
    """Nodes and weights (including dz) of a positively oriented rectangle."""
    x, w = np.polynomial.legendre.leggauss(nodes)

    def seg(a, b):
        m = max(1, int(math.ceil(abs(b - a))))
        pts, wts = [], []
        for p in range(m):
            lo = a + (b - a) * p / m
            hi = a + (b - a) * (p + 1) / m
            pts.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * x)
            wts.append(0.5 * (hi - lo) * w)
        return np.concatenate(pts), np.concatenate(wts)

    corners = [complex(left, -h), complex(right, -h), complex(right, h), complex(left, h)]
    zs, ws = [], []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        z, wz = seg(a, b)
        zs.append(z)
        ws.append(wz)
    return np.concatenate(zs), np.concatenate(ws)


def _laplace(q, plan, N=None):
    plan = plan or ContourPlan()
    cmax = max(q.c)
    plan.validate(cmax)
    if q.k == 1:
        return _series_k1(q.c[0], q.t[0], plan, N)
    if q.k >= 3:
        warnings.warn("k >= 3 nested quadrature is experimental", stacklevel=3)
    n = _auto_nmax(q, plan, N)
    left = -n - 0.5
    a = _residues(q.c[0], q.t[0], n, N)
    zin = -np.arange(a.size, dtype=float)

    # outer variables on nested rectangles, innermost summed by residues
    grids = []
    for i in range(1, q.k):
        z, w = _rectangle(left, plan.right_edge(i + 1, cmax), plan.half_height(i + 1), plan.nodes)
        wg = w * np.exp(_log_g(z, q.c[i], q.t[i], N)) / (2j * math.pi)
        grids.append((z, wg))
    size = np.prod([g[0].size for g in grids])
    if size * a.size > 5e8:
        raise PlanError(f"quadrature grid of {size} points is too large")

    if q.k == 2:
        z, wg = grids[0]
        X = _cross(zin[None, :], z[:, None], q.c[0], q.c[1])
        G = X @ a
        val = np.sum(wg * G)
        return float(val.real)

    # generic tensor contraction for k >= 3
    mesh = np.meshgrid(*[g[0] for g in grids], indexing="ij")
    wmesh = np.meshgrid(*[g[1] for g in grids], indexing="ij")
    W = np.ones(mesh[0].shape, dtype=complex)
    for wm in wmesh:
        W = W * wm
    for i in range(len(grids)):
        for j in range(i + 1, len(grids)):
            W = W * _cross(mesh[i], mesh[j], q.c[i + 1], q.c[j + 1])
    inner = np.zeros(mesh[0].shape, dtype=complex)
    for an, zn in zip(a, zin):
        term = np.full(mesh[0].shape, an, dtype=complex)
        for i in range(len(grids)):
            term = term * _cross(zn, mesh[i], q.c[0], q.c[i + 1])
        inner += term
    return float(np.sum(W * inner).real)


def laplace_limit(q, plan=None):
    """E[prod_i sum_j exp(c_i xi_j(t_i))] for the limiting line ensemble."""
    if not isinstance(q, LaplaceQuery):
        q = LaplaceQuery(*q)
    return _laplace(q, plan)


def laplace_finiteN(q, N, plan=None):
    """Same observable for Dyson BM with drift at size N.

    Centred as xi_j(t/4) - N t/2 - log N, so the residue sums carry N^{-c}.
    """
    if not isinstance(q, LaplaceQuery):
        q = LaplaceQuery(*q)
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    val = _laplace(q, plan, N)
    return val * math.exp(-sum(q.c) * math.log(N))


def _w_line(t, c_w, y, plan):
    # Gaussian decay e^{-t v^2/2} against the growth of 1/Gamma and e^{-i y v}
    b = 0.5 * math.pi
    tail = -math.log(plan.tail) + 10.0
    T = (b + math.sqrt(b * b + 2.0 * t * tail)) / t
    m = int(math.ceil(T / plan.dv))
    return c_w + 1j * plan.dv * np.arange(-m, m + 1)


def _auto_cw(t, y):
    # 1/Gamma(w+1/2) vanishes at every z pole, so the w integrand is entire and
    # the line may sit at the saddle y/t; that removes the cancellation in the
    # residue sum when y is far below the top curves
    c = min(0.25, y / t)
    f = c + 0.5
    r = f - round(f)
    if abs(r) < 0.25:
        c = round(f) - 0.5 + (0.25 if r >= 0 else -0.25)
    return c


def _n_range(s, x, plan):
    if plan.n_terms is not None:
        return np.arange(plan.n_terms)
    n = np.arange(0, 4000)
    zn = -(n + 0.5)
    lm = x * zn - 0.5 * s * zn ** 2 - gammaln(n + 1)
    keep = np.nonzero(lm > lm.max() - 80.0)[0]
    return np.arange(keep[-1] + 9)


def _double_point(s, x, t, y, plan):
    c_w = _auto_cw(t, y) if plan.c_w is None else plan.c_w
    if plan.c_w is not None and c_w <= -0.5:
        raise PlanError("the w line must lie to the right of -1/2")
    w = _w_line(t, c_w, y, plan)
    n = _n_range(s, x, plan)
    zn = -(n + 0.5)
    # 1/Gamma(w+1/2) = Gamma(1/2-w) sin(pi(w+1/2))/pi, stable for Re w << 0
    lw = 0.5 * t * w ** 2 - y * w + loggamma(-w + 0.5) + np.log(np.sin(math.pi * (w + 0.5)) / math.pi)
    # far left the z weights overflow while the w integrals underflow, so the
    # largest w exponent is carried separately
    top = float(np.max(lw.real))
    d = w[None, :] - zn[:, None]
    Iw = (np.exp(lw - top)[None, :] / d).sum(axis=1) * plan.dv / (2.0 * math.pi)
    lz = x * zn - 0.5 * s * zn ** 2 - gammaln(n + 1)
    sgn = (-1.0) ** n
    with np.errstate(divide="ignore"):
        terms = np.exp(lz + top + np.log(Iw.astype(complex)))
    return float(np.real(np.sum(sgn * terms)))


def _double_integral(s, x, t, y, plan):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return np.array([_double_point(s, a, t, b, plan) for a, b in zip(x, y)])


def kernel_eval(q, plan=None):
    plan = plan or KernelPlan()
    s, x, t, y = float(q.s), float(q.x), float(q.t), float(q.y)
    if s <= 0 or t <= 0:
        raise ValueError("times must be positive")
    val = float(_double_integral(s, np.array([x]), t, np.array([y]), plan)[0])
    if t > s:
        val -= math.exp(-(x - y) ** 2 / (2.0 * (t - s))) / math.sqrt(2.0 * math.pi * (t - s))
    return val


def density(t, x, plan=None):
    """One-point intensity rho_1(t, x) = K(t, x; t, x); vectorized in x."""
    plan = plan or KernelPlan()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _double_integral(t, x, t, x, plan)


def expected_count(t, a, plan=None, tol=1e-8):
    """Mean number of curves above a at time t."""
    plan = plan or KernelPlan()
    f = lambda x: float(density(t, x, plan)[0])
    total, lo, W = 0.0, float(a), 2.0
    while True:
        part, _ = integrate.quad(f, lo, lo + W, epsabs=1e-12, epsrel=1e-11, limit=200)
        total += part
        lo += W
        if abs(part) < tol and f(lo) < tol:
            return total
        W *= 2.0
        if lo - a > 200:
            raise TruncationError("density tail did not decay")
