"""Empirical measures on (0, inf) and their free-probability transforms.

psi, its inverse, the S-transform, the H-function that governs Bessel
asymptotics, Cauchy-determinant ratios, and the centering sequences used to
normalise products of random matrices.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

RE_MIN = -1.0 + 1e-9
RE_MAX = 0.1
IM_MAX = 0.1
POLE_TOL = 1e-12
NEWTON_MAXIT = 60


class DomainError(ValueError):
    pass


class PoleError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class BranchError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        if x.ndim != 1 or x.size == 0:
            raise ValueError("need a nonempty 1-d sequence of atoms")
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise ValueError("atoms must be finite and positive")
        if self.weights is None:
            w = np.full(x.size, 1.0 / x.size)
        else:
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if w.shape != x.shape:
                raise ValueError("atoms and weights differ in length")
            if np.any(w <= 0):
                raise ValueError("weights must be positive")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", x)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.atoms.size

    @property
    def degenerate(self):
        x = self.atoms
        return x.max() - x.min() <= 1e-15 * x.max()

    def scaled(self, c):
        return EmpiricalMeasure(c * self.atoms, self.weights)

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["atoms"], d.get("weights"))


@dataclass(frozen=True)
class Cumulants:
    kappa1: float
    kappa2: float
    m2: float
    m3: float


@dataclass(frozen=True)
class CenteringProfile:
    E_N: np.ndarray = field(repr=False)
    V_N: np.ndarray = field(repr=False)


def cumulants(mu):
    x, w = mu.atoms, mu.weights
    m1 = float(np.dot(w, x))
    m2 = float(np.dot(w, x * x))
    m3 = float(np.dot(w, x ** 3))
    k2 = m2 - m1 * m1
    if k2 < 0:
        if k2 < -1e-12 * m2:
            raise ArithmeticError("negative variance")
        k2 = 0.0
    if mu.degenerate:
        k2 = 0.0
    return Cumulants(m1, k2, m2, m3)


def _check_poles(mu, z):
    gap = np.min(np.abs(1.0 - z * mu.atoms))
    if gap < POLE_TOL:
        raise PoleError(f"z={z} is within {gap:.2e} of a pole")


def psi_eval(mu, z):
    _check_poles(mu, z)
    zx = z * mu.atoms
    return np.dot(mu.weights, zx / (1.0 - zx))


def psi_prime(mu, z):
    _check_poles(mu, z)
    x = mu.atoms
    return np.dot(mu.weights, x / (1.0 - z * x) ** 2)


def _in_domain(u):
    u = complex(u)
    return RE_MIN < u.real < RE_MAX and abs(u.imag) <= IM_MAX


def _inverse_real(mu, u):
    if u == 0.0:
        return 0.0
    x, w = mu.atoms, mu.weights

    def f(z):
        zx = z * x
        return np.dot(w, zx / (1.0 - zx)) - u

    if u < 0:
        hi, lo = 0.0, -1.0 / x.max()
        while f(lo) > 0:
            lo *= 4.0
            if lo < -1e300:
                raise ConvergenceError("bracket search failed")
    else:
        lo, hi = 0.0, 1.0 / x.max()
        # psi blows up at the first pole, so shrink the step toward it
        step = hi
        while True:
            step *= 0.5
            if f(hi - step) > 0:
                hi = hi - step
                break
            if step < 1e-300:
                raise ConvergenceError("bracket search failed")
    z = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        d = f(z) / np.dot(w, x / (1.0 - z * x) ** 2)
        z -= d
        if abs(d) <= 1e-16 * abs(z):
            break
    return z


def _newton(mu, z, target):
    with np.errstate(all="ignore"):
        for _ in range(NEWTON_MAXIT):
            d = (psi_eval(mu, z) - target) / psi_prime(mu, z)
            if not np.isfinite(d):
                return None
            z -= d
            # psi is flat for large |z|, so the step alone can sit above its floor
            if abs(d) <= 1e-14 * max(1.0, abs(z)) or abs(psi_eval(mu, z) - target) <= 1e-15:
                return z
    return None


def psi_inverse(mu, u):
    """z with psi(z) = u for u near (-1, 0]."""
    u = complex(u)
    if not _in_domain(u):
        raise DomainError(f"u={u} outside the inverse domain")
    if mu.degenerate:
        c = mu.atoms[0]
        z = u / (c * (1.0 + u))
        return z.real if u.imag == 0 else z
    z0 = _inverse_real(mu, u.real)
    if u.imag == 0:
        return z0
    # continuation in the imaginary part; the step halves whenever Newton
    # fails, which matters near u = -1 where the inverse is large
    z, s, ds = complex(z0), 0.0, 0.25
    while s < 1.0:
        step = min(ds, 1.0 - s)
        w = _newton(mu, z, complex(u.real, (s + step) * u.imag))
        if w is None:
            ds = step / 2
            if ds < 1e-6:
                raise ConvergenceError(f"continuation stalled at u={u}")
            continue
        z, s, ds = w, s + step, min(2 * step, 0.25)
    r = abs(psi_eval(mu, z) - u)
    if r > 1e-12:
        raise ConvergenceError(f"residual {r:.2e} at u={u}")
    return z


def s_derivs_at_zero(mu):
    k = cumulants(mu)
    m1, m2, m3 = k.kappa1, k.m2, k.m3
    if mu.degenerate:
        return 1.0 / m1, 0.0, 0.0
    s0 = 1.0 / m1
    s1 = -k.kappa2 / m1 ** 3
    s2 = 4 * m2 * m2 / m1 ** 5 - 2 * m3 / m1 ** 4 - 2 * m2 / m1 ** 3
    return s0, s1, s2


def s_transform(mu, u):
    u = complex(u)
    if u == -1.0:
        # the Laurent limit of psi at -inf
        return float(np.dot(mu.weights, 1.0 / mu.atoms))
    if mu.degenerate:
        if not _in_domain(u):
            raise DomainError(f"u={u} outside the inverse domain")
        return 1.0 / mu.atoms[0]
    if abs(u) < 1e-6:
        if not _in_domain(u):
            raise DomainError(f"u={u} outside the inverse domain")
        s0, s1, s2 = s_derivs_at_zero(mu)
        s = s0 + u * (s1 + 0.5 * u * s2)
    else:
        s = (1.0 + u) / u * psi_inverse(mu, u)
    return s.real if u.imag == 0 else s


def _h(mu, u, s):
    arg = (u + 1.0) / s - u * mu.atoms
    return -(u + 1.0) * np.log(s) - np.dot(mu.weights, np.log(arg)), arg


def h_eval(mu, u):
    """H(u) = -(u+1) log S(u) - int log((u+1)/S(u) - u x) dmu."""
    u = complex(u)
    if mu.degenerate:
        h = u * np.log(mu.atoms[0])
        return h.real if u.imag == 0 else h
    s = s_transform(mu, u)
    if u.imag == 0:
        h, arg = _h(mu, u.real, s)
        if np.any(arg <= 0):
            raise BranchError(f"nonpositive log argument at u={u.real}")
        return float(h)
    h, _ = _h(mu, u, complex(s))
    return h


def h_prime(mu, u):
    s = s_transform(mu, u)
    return -np.log(s)


def _unit_sqrt_track(f, u, npts=9):
    """sqrt of a nonvanishing f along the segment Re u -> u, continuous branch."""
    u = complex(u)
    if u.imag == 0:
        v = f(u)
        return np.sqrt(complex(v)) if np.real(v) <= 0 else np.sqrt(v.real)
    pts = u.real + 1j * u.imag * np.linspace(0.0, 1.0, npts)
    vals = np.array([f(p) for p in pts], dtype=complex)
    ph = np.unwrap(np.angle(vals))
    return np.sqrt(abs(vals[-1])) * np.exp(0.5j * ph[-1])


def _sqrt_psi_prime(mu, u):
    return _unit_sqrt_track(lambda p: psi_prime(mu, psi_inverse(mu, p)), u)


def _pair(mu, a, b, za, zb, ra, rb):
    """(a - b)/(psi^-1 a - psi^-1 b) / sqrt(psi' psi'); one when a = b."""
    d = a - b
    if d == 0:
        return 1.0
    if abs(d) < 1e-6 * (1.0 + abs(a)):
        # divided difference through the midpoint derivative
        m = 0.5 * (a + b)
        dz = 1.0 / psi_prime(mu, psi_inverse(mu, m))
        return 1.0 / dz / (ra * rb)
    return d / (za - zb) / (ra * rb)


def cauchy_ratio(mu, u, v):
    u = [complex(a) for a in np.atleast_1d(u)]
    v = [complex(b) for b in np.atleast_1d(v)]
    if len(u) != len(v) or not u:
        raise ValueError("u and v need the same positive length")
    if mu.degenerate:
        return 1.0
    zu = [psi_inverse(mu, a) for a in u]
    zv = [psi_inverse(mu, b) for b in v]
    ru = [_sqrt_psi_prime(mu, a) for a in u]
    rv = [_sqrt_psi_prime(mu, b) for b in v]
    for i in range(len(u)):
        for j in range(i + 1, len(u)):
            if abs(zu[i] - zu[j]) == 0 and u[i] != u[j] or abs(zv[i] - zv[j]) == 0 and v[i] != v[j]:
                raise ArithmeticError("collision of psi inverse images")
    k = len(u)
    r = 1.0 + 0j
    for i in range(k):
        r *= _pair(mu, u[i], v[i], zu[i], zv[i], ru[i], rv[i])
        for j in range(i + 1, k):
            num = _pair(mu, u[i], v[j], zu[i], zv[j], ru[i], rv[j]) * _pair(mu, v[i], u[j], zv[i], zu[j], rv[i], ru[j])
            den = _pair(mu, u[i], u[j], zu[i], zu[j], ru[i], ru[j]) * _pair(mu, v[i], v[j], zv[i], zv[j], rv[i], rv[j])
            r *= num / den
    if all(a.imag == 0 for a in u + v):
        return r.real
    return r


def centering(measures, N):
    k1 = np.array([cumulants(m).kappa1 for m in measures])
    k2 = np.array([cumulants(m).kappa2 for m in measures])
    E = np.concatenate([[0.0], np.cumsum(np.log(k1))])
    V = np.concatenate([[0.0], np.cumsum(k2 / k1 ** 2) / N])
    return CenteringProfile(E, V)
