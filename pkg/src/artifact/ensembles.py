"""Right-unitarily-invariant samplers and an overflow-safe product engine.

Products Y = X_M ... X_1 are carried as Q diag(e^s) T R with Q unitary, s the
log magnitudes, T a pending triangular factor and R with orthonormal rows.
Every multiply re-triangularizes with a QR step; every K multiplies (or when
the pending factor's dynamic range gets large) the pending part is collapsed
with a one-sided Jacobi SVD that works on column-scaled data, so singular
values thousands of nats apart come out with full relative accuracy.
"""

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import expm


class SingularFactorError(ValueError):
    pass


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self):
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def _gen(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class LogSpectrum:
    values: np.ndarray
    scale_offset: float = 0.0


def ginibre(rows, cols, rng, size=None):
    """i.i.d. standard complex Gaussians, E|g|^2 = 1."""
    rng = _gen(rng)
    shape = (rows, cols) if size is None else tuple(np.atleast_1d(size)) + (rows, cols)
    g = rng.standard_normal(shape + (2,))
    return (g[..., 0] + 1j * g[..., 1]) * math.sqrt(0.5)


def _phase_fix(q, r):
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = d / np.where(d == 0, 1.0, np.abs(d))
    ph = np.where(d == 0, 1.0, ph)
    return q * ph[..., None, :]


def haar_unitary(N, rng, size=None):
    if N < 1:
        raise ValueError("N must be positive")
    q, r = np.linalg.qr(ginibre(N, N, rng, size))
    return _phase_fix(q, r)


def truncated_unitary(N, N_ambient, rng, size=None):
    """Top-left N x N corner of a Haar unitary of size N_ambient."""
    if N_ambient <= N:
        raise ValueError("N_ambient must exceed N")
    # the first N columns of a Haar unitary are the phase-fixed QR of an
    # N_ambient x N Ginibre block
    q, r = np.linalg.qr(ginibre(N_ambient, N, rng, size))
    q = _phase_fix(q, r)
    return q[..., :N, :]


def fixed_spectrum(x, rng, size=None):
    """U diag(sqrt x) V* with independent Haar U, V."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("squared singular values must be positive")
    rng = _gen(rng)
    N = x.size
    U = haar_unitary(N, rng, size)
    V = haar_unitary(N, rng, size)
    return (U * np.sqrt(x)) @ np.conj(np.swapaxes(V, -1, -2))


@numba.njit(cache=True)
def _jacobi_graded(A, s, V, tol, max_sweeps):
    """One-sided Jacobi on the columns e^{s_j} A[:, j], in place.

    On exit the scaled columns are orthogonal and V holds the rotations.
    """
    m, n = A.shape
    for sweep in range(max_sweeps):
        off = 0.0
        for j in range(n - 1):
            for k in range(j + 1, n):
                a = 0.0
                b = 0.0
                g = 0j
                for r in range(m):
                    x = A[r, j]
                    y = A[r, k]
                    a += x.real * x.real + x.imag * x.imag
                    b += y.real * y.real + y.imag * y.imag
                    g += x.conjugate() * y
                ag = abs(g)
                if ag == 0.0:
                    continue
                cosang = ag / math.sqrt(a * b)
                if cosang <= tol:
                    continue
                off = max(off, cosang)
                d = s[j] - s[k]
                if d > 300.0:
                    coef = g / a
                    for r in range(m):
                        A[r, k] -= coef * A[r, j]
                    continue
                if d < -300.0:
                    coef = g.conjugate() / b
                    for r in range(m):
                        A[r, j] -= coef * A[r, k]
                    continue
                ph = g / ag
                rho = math.exp(-d)
                zeta = (rho * b - a / rho) / (2.0 * ag)
                if zeta == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = c * t
                pj = sn * ph.conjugate()
                pk = sn * ph
                for r in range(m):
                    x = A[r, j]
                    y = A[r, k]
                    A[r, j] = c * x - pj * rho * y
                    A[r, k] = pk / rho * x + c * y
                for r in range(n):
                    x = V[r, j]
                    y = V[r, k]
                    V[r, j] = c * x - pj * y
                    V[r, k] = pk * x + c * y
        if off <= tol:
            return sweep + 1
    return -1


def graded_svd(B, s, tol=1e-15, max_sweeps=80):
    """SVD of diag(e^s) B computed without forming it.

    Returns (W, logsig, Uh) with diag(e^s) B = W diag(e^logsig) Uh, logsig
    sorted decreasing.  Works on batches.
    """
    B = np.asarray(B, dtype=complex)
    s = np.asarray(s, dtype=float)
    batch = B.shape[:-2]
    N = B.shape[-1]
    Bf = B.reshape((-1, N, N))
    sf = s.reshape((-1, N))
    W = np.empty_like(Bf)
    Uh = np.empty_like(Bf)
    ls = np.empty(sf.shape)
    for p in range(Bf.shape[0]):
        # columns of B^H scaled by e^s are the rows of diag(e^s) B
        A = np.ascontiguousarray(np.conj(Bf[p].T))
        V = np.eye(N, dtype=complex)
        if _jacobi_graded(A, sf[p].copy(), V, tol, max_sweeps) < 0:
            raise ArithmeticError("Jacobi SVD did not converge")
        nrm = np.linalg.norm(A, axis=0)
        if np.any(nrm == 0):
            raise SingularFactorError("product is singular")
        lsig = sf[p] + np.log(nrm)
        order = np.argsort(-lsig, kind="stable")
        ls[p] = lsig[order]
        W[p] = V[:, order]
        Uh[p] = np.conj((A / nrm)[:, order].T)
    return W.reshape(B.shape), ls.reshape(s.shape), Uh.reshape(B.shape)


@dataclass
class ProductAccumulator:
    left_basis: np.ndarray
    log_sigma: np.ndarray
    right_basis: np.ndarray = None
    refactor_count: int = 0
    K: int = 10
    spread_limit: float = 300.0
    track_right: bool = True
    scale_offset: float = 0.0
    _tri: np.ndarray = field(default=None, repr=False)
    _pending: int = 0

    @classmethod
    def identity(cls, N, batch=(), K=10, spread_limit=300.0, track_right=True):
        batch = tuple(np.atleast_1d(batch)) if batch != () else ()
        eye = np.broadcast_to(np.eye(N, dtype=complex), batch + (N, N)).copy()
        return cls(
            left_basis=eye,
            log_sigma=np.zeros(batch + (N,)),
            right_basis=eye.copy() if track_right else None,
            K=K,
            spread_limit=spread_limit,
            track_right=track_right,
            _tri=eye.copy(),
        )

    @property
    def N(self):
        return self.left_basis.shape[-1]

    def dense(self):
        """The represented product; only sensible when it fits in doubles."""
        self.refactor()
        P = self.left_basis * np.exp(self.log_sigma)[..., None, :]
        if self.track_right:
            P = P @ self.right_basis
        return P

    def refactor(self):
        if self._pending == 0:
            return self
        W, ls, Uh = graded_svd(self._tri, self.log_sigma)
        self.left_basis = self.left_basis @ W
        self.log_sigma = ls
        if self.track_right:
            self.right_basis = Uh @ self.right_basis
        self._tri = np.broadcast_to(np.eye(self.N, dtype=complex), self._tri.shape).copy()
        self._pending = 0
        self.refactor_count += 1
        return self


def accumulate(acc, X):
    """Left-multiply the product held by acc by X (batched over leading axes)."""
    X = np.asarray(X, dtype=complex)
    if X.shape[-2:] != (acc.N, acc.N):
        raise ValueError("dimension mismatch")
    q, r = np.linalg.qr(X @ acc.left_basis)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ad = np.abs(d)
    if np.any(ad <= 1e-300 * np.max(np.abs(r), axis=(-2, -1))[..., None]):
        raise SingularFactorError("factor has a zero singular value")
    ph = d / ad
    q = q * ph[..., None, :]
    r = r * (np.conj(ph) / ad)[..., :, None]          # unit diagonal
    s = acc.log_sigma
    # diag(e^{-s_new}) R diag(e^{s}) T with s_new = s + log|d|; only the
    # relative scale e^{s_j - s_i} enters the off-diagonal part
    ex = s[..., None, :] - s[..., :, None]
    ex = np.triu(ex, 1)
    spread = np.max(ex) if ex.size else 0.0
    r = r * np.exp(np.minimum(ex, 700.0))
    acc._tri = r @ acc._tri
    acc.left_basis = q
    acc.log_sigma = s + np.log(ad)
    acc.scale_offset += 2.0 * float(np.sum(np.log(ad)))
    acc._pending += 1
    if acc._pending >= acc.K or spread > acc.spread_limit:
        acc.refactor()
    return acc


def log_sq_singular_values(acc):
    acc.refactor()
    return LogSpectrum(values=2.0 * acc.log_sigma.copy(), scale_offset=acc.scale_offset)


def _step_grid(times, step, check=True):
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be sorted and nonnegative")
    pos = times[times > 0]
    if step <= 0 or (check and pos.size and step > pos.min() / 10.0):
        raise StepSizeError("step must be positive and at most min(times)/10")
    grid, prev = [], 0.0
    for t in times:
        n = int(math.ceil((t - prev) / step - 1e-9)) if t > prev else 0
        grid.append((n, (t - prev) / n if n else 0.0))
        prev = t
    return grid


def _dyson_increment(N, h, g):
    """Exact-in-law increment diag(e^{lam/2}) V* of GL Brownian motion over raw time h.

    lam are the eigenvalues of Hermitian BM plus tau*diag(mu) at tau = 4h, with
    drifts mu_i = (N+1)/2 - i; V is Haar.  The left unitary drops out of
    singular values of left products.
    """
    tau = 4.0 * h
    mu = 0.5 * (N + 1) - np.arange(1, N + 1)
    G = ginibre(N, N, g)
    H = math.sqrt(0.5 * tau) * (G + G.conj().T) + np.diag(tau * mu)
    lam = np.linalg.eigvalsh(H)
    V = haar_unitary(N, g)
    return np.exp(0.5 * lam)[:, None] * V.conj().T


def _lie_block(N, h, n, g, scheme):
    """n consecutive Lie-algebra increments for one path."""
    k = 4 if scheme == "magnus2" else 2
    z = g.standard_normal((n, k, N, N))
    # E|w|^2 = 2h: real and imaginary parts each of variance h
    W = math.sqrt(h) * (z[:, 0] + 1j * z[:, 1])
    if scheme == "magnus2":
        # surrogate Levy area with the covariance of the true one
        A = (z[:, 2] + 1j * z[:, 3]) * math.sqrt(0.5)
        A -= (np.trace(A, axis1=-2, axis2=-1) / N)[:, None, None] * np.eye(N)
        W = W + h * math.sqrt(N) * A
    return W


DRAW_BLOCK = 25     # steps drawn per generator call; fixed so chunking never changes draws
GROUP = 5           # near-identity increments multiplied before each QR
PATH_CHUNK = 256


def _run_chunk(N, grid, gens, scheme, K):
    P = len(gens)
    acc = ProductAccumulator.identity(N, (P,), K=K, track_right=False)
    out = np.zeros((P, len(grid), N))
    # Y <- Y exp(W) has the singular values of exp(W^T) Y^T, and W^T has the
    # law of W, so the path is built by left multiplication
    for i, (n, h) in enumerate(grid):
        if scheme == "exact":
            for _ in range(n):
                accumulate(acc, np.stack([_dyson_increment(N, h, g) for g in gens]))
        else:
            done = 0
            while done < n:
                nb = min(DRAW_BLOCK, n - done)
                _push(acc, expm(np.stack([_lie_block(N, h, nb, g, scheme) for g in gens], axis=1)))
                done += nb
        out[:, i, :] = log_sq_singular_values(acc).values
    return out


def _lie_pair(N, h, n, g, scheme):
    """n coarse increments of size h and the 2n fine ones of size h/2 on shared draws.

    Coarse Brownian increments are sums of fine ones; the coarse area
    surrogate is the normalized sum of the fine ones, so each sequence has
    exactly the law of its own scheme.
    """
    k = 4 if scheme == "magnus2" else 2
    z = g.standard_normal((2 * n, k, N, N))
    hf = 0.5 * h
    Wf = math.sqrt(hf) * (z[:, 0] + 1j * z[:, 1])
    Wc = Wf[0::2] + Wf[1::2]
    if scheme == "magnus2":
        A = (z[:, 2] + 1j * z[:, 3]) * math.sqrt(0.5)
        A -= (np.trace(A, axis1=-2, axis2=-1) / N)[:, None, None] * np.eye(N)
        Wf = Wf + hf * math.sqrt(N) * A
        Wc = Wc + h * math.sqrt(N) * (A[0::2] + A[1::2]) / math.sqrt(2.0)
    return Wc, Wf


def _push(acc, E):
    for j in range(0, E.shape[0], GROUP):
        X = E[j]
        for e in E[j + 1:j + GROUP]:
            X = e @ X
        accumulate(acc, X)


def _run_chunk_coupled(N, grid, gens, scheme, K):
    P = len(gens)
    acc_c = ProductAccumulator.identity(N, (P,), K=K, track_right=False)
    acc_f = ProductAccumulator.identity(N, (P,), K=K, track_right=False)
    out = np.zeros((2, P, len(grid), N))
    for i, (n, h) in enumerate(grid):
        done = 0
        while done < n:
            nb = min(DRAW_BLOCK, n - done)
            pairs = [_lie_pair(N, h, nb, g, scheme) for g in gens]
            _push(acc_c, expm(np.stack([p[0] for p in pairs], axis=1)))
            _push(acc_f, expm(np.stack([p[1] for p in pairs], axis=1)))
            done += nb
        out[0, :, i, :] = log_sq_singular_values(acc_c).values
        out[1, :, i, :] = log_sq_singular_values(acc_f).values
    return out


def gl_brownian_paths_coupled(N, times, step, rngs, scheme="magnus2", K=1000):
    """Paths at step and step/2 driven by the same Brownian increments.

    Returns (coarse, fine), each shaped like gl_brownian_paths output; the
    difference isolates the discretization error of halving the step.
    """
    if scheme not in ("euler", "magnus2"):
        raise ValueError("coupling needs a discretized scheme")
    gens = [_gen(g) for g in rngs]
    grid = _step_grid(times, step)
    chunks = [_run_chunk_coupled(N, grid, gens[a:a + PATH_CHUNK], scheme, K)
              for a in range(0, len(gens), PATH_CHUNK)]
    both = np.concatenate(chunks, axis=1)
    return both[0], both[1]


def gl_brownian_paths(N, times, step, rngs, scheme="magnus2", K=1000):
    """Log squared singular values of GL(N, C) Brownian motion on a time grid.

    rngs: one generator (or RngStream) per path.  Returns an array of shape
    (paths, len(times), N), rows sorted decreasing.  Raw simulator time.

    Schemes: "euler" multiplies by exp(W_h); "magnus2" adds half a surrogate
    Levy area inside the exponential; "exact" draws increments whose singular
    values have the exact law of the process over one step.
    """
    if scheme not in ("euler", "magnus2", "exact"):
        raise ValueError(f"unknown scheme {scheme!r}")
    gens = [_gen(g) for g in rngs]
    # exact increments carry no discretization error, so any step is allowed
    grid = _step_grid(times, step, check=scheme != "exact")
    chunks = [_run_chunk(N, grid, gens[a:a + PATH_CHUNK], scheme, K)
              for a in range(0, len(gens), PATH_CHUNK)]
    return np.concatenate(chunks, axis=0)


def gl_brownian_path(N, times, step, rng, scheme="magnus2"):
    vals = gl_brownian_paths(N, times, step, [rng], scheme)[0]
    return [LogSpectrum(values=v) for v in vals]
