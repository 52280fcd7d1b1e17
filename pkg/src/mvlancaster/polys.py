"""One-dimensional and multivariate orthogonal polynomial families.

All multivariate families share one elementary basis ``u``.  The Krawtchouk
factor is read off the generating function ``prod_j (1 + sum_l w_l u_j^(l))^x_j``
by exact truncated series multiplication; the one-dimensional factors use
three-term recursions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import series
from .basis import Basis, build_basis, normalize_weights
from .errors import DegreeTooHigh, DomainError, LancasterError

# ---------------------------------------------------------------------------
# one-dimensional families


def charlier_table(max_n, x, lam):
    """``C_0..C_max_n`` at ``x`` for the Poisson(``lam``) Charlier polynomials."""
    x = np.asarray(x, dtype=float)
    out = np.empty((max_n + 1,) + x.shape)
    out[0] = 1.0
    if max_n >= 1:
        out[1] = 1.0 - x / lam
    for n in range(1, max_n):
        out[n + 1] = ((n + lam - x) * out[n] - n * out[n - 1]) / lam
    return out


def charlier_eval(n, x, lam):
    """Coefficient of ``z^n/n!`` in ``e^z (1 - z/lam)^x``."""
    val = charlier_table(n, x, lam)[n]
    return float(val) if val.ndim == 0 else val


def meixner_table(max_n, x, alpha, kappa):
    """``M_0..M_max_n`` for the negative binomial with shape ``alpha``, ``kappa = theta/(1+theta)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((max_n + 1,) + x.shape)
    out[0] = 1.0
    c = kappa
    for n in range(max_n):
        prev = out[n - 1] if n else 0.0
        out[n + 1] = (((c - 1) * x + n + (n + alpha) * c) * out[n] - n * prev) / (c * (n + alpha))
    return out


def meixner1d_eval(n, x, alpha, kappa):
    val = meixner_table(n, x, alpha, kappa)[n]
    return float(val) if val.ndim == 0 else val


def hermite_table(max_n, x, tau):
    """Hermite-Chebycheff polynomials orthogonal on N(0, ``tau``)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((max_n + 1,) + x.shape)
    out[0] = 1.0
    if max_n >= 1:
        out[1] = x
    for n in range(1, max_n):
        out[n + 1] = x * out[n] - n * tau * out[n - 1]
    return out


def hermite1d_eval(n, x, tau):
    val = hermite_table(n, x, tau)[n]
    return float(val) if val.ndim == 0 else val


def gamma_ratio(alpha, n):
    """``Gamma(alpha + n) / (Gamma(alpha) n!)`` by iterated product."""
    return series.rising(alpha, n) / math.factorial(n)


# ---------------------------------------------------------------------------
# Krawtchouk coefficient extraction


class KrawtchoukCoefficients:
    """Memoised coefficient boxes of ``prod_j (1 + sum_l w_l u_j^(l))^x_j``.

    ``rows`` is the ``(d-1) x d`` table of the non-constant basis functions.
    Lattice points are built incrementally from ``x - e_j`` so each new point
    costs one multiplication by a linear factor.
    """

    def __init__(self, rows, max_degree):
        self.rows = np.asarray(rows, dtype=float)
        self.m, self.d = self.rows.shape
        self.D = int(max_degree)
        self._cache = {(0,) * self.d: series.one(self.m, self.D)}

    def lattice(self, x):
        x = tuple(int(v) for v in x)
        hit = self._cache.get(x)
        if hit is not None:
            return hit
        path = []
        cur = x
        while cur not in self._cache:
            j = max(i for i, v in enumerate(cur) if v > 0)
            path.append((cur, j))
            cur = cur[:j] + (cur[j] - 1,) + cur[j + 1:]
        box = self._cache[cur]
        for point, j in reversed(path):
            box = series.mul_linear(box, self.rows[:, j])
            self._cache[point] = box
        return box

    def real(self, x):
        """Coefficient box at a real point (generalised binomial expansion)."""
        box = series.one(self.m, self.D)
        for j, xj in enumerate(np.asarray(x, dtype=float)):
            if xj != 0:
                box = series.mul(box, series.linear_power(self.rows[:, j], xj, self.D))
        return box

    def at(self, x):
        x = np.asarray(x, dtype=float)
        if np.all(x >= 0) and np.all(x == np.round(x)):
            return self.lattice(x.astype(int))
        return self.real(x)


def krawtchouk_partition_sum(basis, n1, x):
    """Symmetrised-product definition: sum over disjoint index sets of sizes ``n1``.

    Trials are labelled by expanding ``x`` into a sequence of states; each
    assignment of trial subsets ``A_1..A_{d-1}`` contributes
    ``prod_l prod_{k in A_l} u^{(l)}_{Z_k}``.
    """
    z = [j for j, c in enumerate(x) for _ in range(int(c))]
    N = len(z)
    n1 = tuple(int(v) for v in n1)
    total = 0.0

    def recurse(l, free, acc):
        nonlocal total
        if l == len(n1):
            total += acc
            return
        for subset in itertools.combinations(free, n1[l]):
            prod = acc
            for k in subset:
                prod *= basis.u[l + 1, z[k]]
            rest = [k for k in free if k not in subset]
            recurse(l + 1, rest, prod)

    if sum(n1) <= N:
        recurse(0, list(range(N)), 1.0)
    return total


# ---------------------------------------------------------------------------
# multivariate systems


class _System:
    """Shared plumbing: coefficient caches and batched evaluation."""

    family = ""

    def _coeffs(self, D):
        cache = self._caches.get(D)
        if cache is None:
            cache = KrawtchoukCoefficients(self.basis.u[1:], D)
            self._caches[D] = cache
        return cache

    @property
    def d(self):
        return self.basis.d

    def _kraw_values(self, points, indices1):
        """Krawtchouk factor for every point (rows) and index tail (columns)."""
        D = max([max(n) for n in indices1 if len(n)] + [0])
        cache = self._coeffs(D)
        boxes = np.stack([cache.at(x) for x in points])
        flat = boxes.reshape(len(points), -1)
        shape = boxes.shape[1:]
        cols = [np.ravel_multi_index(tuple(n), shape) for n in indices1]
        return flat[:, cols]

    def indices(self, max_degree, min_degree=0):
        return series.multi_indices(self.index_dim, max_degree, min_degree)

    @property
    def index_dim(self):
        return self.d

    def evaluate(self, n, x):
        return float(self.evaluate_many(np.asarray([x], dtype=float), [tuple(n)])[0, 0])

    def norms(self, indices):
        return np.array([self.norm(n) for n in indices])


@dataclass(eq=False)
class Krawtchouk(_System):
    """Multivariate Krawtchouk polynomials on the multinomial ``(N, p)``."""

    basis: Basis
    N: int
    family = "krawtchouk"
    _caches: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def index_dim(self):
        return self.d - 1

    def evaluate_many(self, points, indices):
        points = np.asarray(points, dtype=float)
        for n in indices:
            if sum(n) > self.N:
                raise DegreeTooHigh(f"|n| = {sum(n)} exceeds N = {self.N}")
        return self._kraw_values(points, [tuple(n) for n in indices])

    def norm(self, n1):
        return series.multinomial(self.N, n1) * float(np.prod(self.basis.a[1:] ** np.asarray(n1)))

    def transform(self, n1, s):
        s = np.asarray(s, dtype=float)
        S = self.basis.u @ (self.basis.p * s)
        return series.multinomial(self.N, n1) * S[0] ** (self.N - sum(n1)) * float(
            np.prod(S[1:] ** np.asarray(n1))
        )


def krawtchouk_eval(sys, n1, x):
    x = np.asarray(x, dtype=float)
    if round(x.sum()) != sys.N:
        raise LancasterError(f"point {x.tolist()} does not have |x| = {sys.N}")
    return sys.evaluate(n1, x)


@dataclass(eq=False)
class PoissonCharlier(_System):
    """Multivariate Poisson-Charlier polynomials on independent Poisson(``mu``)."""

    basis: Basis
    mu: np.ndarray
    family = "charlier"
    _caches: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if np.any(self.mu <= 0):
            raise LancasterError("Poisson means must be positive")
        if not np.allclose(self.basis.p, self.mu / self.mu.sum(), rtol=0, atol=1e-12):
            raise LancasterError("basis weights must equal mu / |mu|")

    @classmethod
    def from_means(cls, mu, basis=None):
        mu = np.asarray(mu, dtype=float)
        return cls(basis if basis is not None else build_basis(normalize_weights(mu)), mu)

    @property
    def total(self):
        return float(self.mu.sum())

    def evaluate_many(self, points, indices):
        points = np.asarray(points, dtype=float)
        indices = [tuple(n) for n in indices]
        kraw = self._kraw_values(points, [n[1:] for n in indices])
        size = points.sum(axis=1)
        out = np.empty_like(kraw)
        lam = self.total
        for c, n in enumerate(indices):
            k = sum(n[1:])
            ch = charlier_table(n[0], size - k, lam)[n[0]]
            out[:, c] = ch / math.factorial(n[0]) * lam ** (-k) * kraw[:, c]
        return out

    def norm(self, n):
        """Squared norm ``|mu|^{-|n|} prod a_j^{n_j} / n_j!``."""
        n = np.asarray(n)
        val = self.total ** (-int(n.sum()))
        for aj, nj in zip(self.basis.a, n):
            val *= aj ** nj / math.factorial(int(nj))
        return val

    def generating_function(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        lam = self.total
        inner = 1.0 - w[0] / lam + (w[1:] @ self.basis.u[1:]) / lam
        return math.exp(w[0]) * float(np.prod(inner ** x))

    def transform(self, n, s):
        n = np.asarray(n)
        s = np.asarray(s, dtype=float)
        S = self.basis.u @ (self.basis.p * s)
        fact = math.prod(math.factorial(int(k)) for k in n)
        return (
            math.exp(float(self.mu @ (s - 1.0)))
            * (1.0 - S[0]) ** int(n[0])
            * float(np.prod(S[1:] ** n[1:]))
            / fact
        )


def mv_charlier_eval(sys, n, x):
    return sys.evaluate(n, x)


@dataclass(eq=False)
class Meixner(_System):
    """Multivariate Meixner polynomials on the negative binomial mixture of multinomials.

    The one-dimensional factor in the total count uses shape ``alpha + |n_1|``:
    that is the coefficient of the generating function and the form whose
    squared norms are the closed-form ``norm``.
    """

    basis: Basis
    alpha: float
    theta: float
    family = "meixner"
    _caches: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.alpha <= 0 or self.theta <= 0:
            raise LancasterError("Meixner parameters alpha, theta must be positive")

    @property
    def kappa(self):
        return self.theta / (1.0 + self.theta)

    @property
    def p(self):
        return self.basis.p

    def evaluate_many(self, points, indices):
        points = np.asarray(points, dtype=float)
        indices = [tuple(n) for n in indices]
        kraw = self._kraw_values(points, [n[1:] for n in indices])
        size = points.sum(axis=1)
        out = np.empty_like(kraw)
        for c, n in enumerate(indices):
            k = sum(n[1:])
            shape = self.alpha + k
            m = meixner_table(n[0], size - k, shape, self.kappa)[n[0]]
            out[:, c] = gamma_ratio(shape, n[0]) * m * kraw[:, c]
        return out

    def norm(self, n):
        n = np.asarray(n)
        tot = int(n.sum())
        val = series.rising(self.alpha, tot)
        for nj in n:
            val /= math.factorial(int(nj))
        val *= ((1 + self.theta) / self.theta) ** int(n[0]) * self.theta ** (tot - int(n[0]))
        return val * float(np.prod(self.basis.a[1:] ** n[1:]))

    def generating_function(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        inner = 1.0 - w[0] / self.kappa + w[1:] @ self.basis.u[1:]
        return (1.0 - w[0]) ** (-(x.sum() + self.alpha)) * float(np.prod(inner ** x))

    def transform(self, n, s):
        n = np.asarray(n)
        s = np.asarray(s, dtype=float)
        th = self.theta
        if 1.0 - th * (float(self.p @ np.abs(s)) - 1.0) <= 0:
            raise DomainError("pgf argument outside the convergence region")
        S = self.basis.u @ (self.p * s)
        B = 1.0 - th * (S[0] - 1.0)
        tot = int(n.sum())
        val = series.rising(self.alpha, tot) / math.prod(math.factorial(int(k)) for k in n)
        val *= B ** (-(self.alpha + tot))
        val *= (1 + th) ** int(n[0]) * (1.0 - S[0]) ** int(n[0]) * th ** (tot - int(n[0]))
        return val * float(np.prod(S[1:] ** n[1:]))


def meixner1d_transform(n, s, alpha, theta):
    """``E[s^X M_n(X)]`` for the one-dimensional negative binomial."""
    if 1.0 - theta * (abs(s) - 1.0) <= 0:
        raise DomainError("pgf argument outside the convergence region")
    return (1 + theta) ** n * (1 - s) ** n * (1 - theta * (s - 1)) ** (-(alpha + n))


def mv_meixner_eval(sys, n, x):
    return sys.evaluate(n, x)


@dataclass(eq=False)
class Hermite(_System):
    """Products of Hermite-Chebycheff polynomials in the hat coordinates."""

    basis: Basis
    tau: np.ndarray
    family = "hermite"
    _caches: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        if np.any(self.tau <= 0):
            raise LancasterError("variances must be positive")
        if not np.allclose(self.basis.p, self.tau / self.tau.sum(), rtol=0, atol=1e-12):
            raise LancasterError("basis weights must equal tau / |tau|")

    @classmethod
    def from_variances(cls, tau, basis=None):
        tau = np.asarray(tau, dtype=float)
        return cls(basis if basis is not None else build_basis(normalize_weights(tau)), tau)

    @property
    def variances(self):
        """Variances of the hat coordinates, ``|tau| a_j``."""
        return self.tau.sum() * self.basis.a

    def evaluate_many(self, points, indices):
        points = np.asarray(points, dtype=float)
        hat = self.basis.hat(points)
        indices = [tuple(n) for n in indices]
        D = max(max(n) for n in indices)
        tables = [hermite_table(D, hat[:, j], v) for j, v in enumerate(self.variances)]
        out = np.ones((len(points), len(indices)))
        for c, n in enumerate(indices):
            for j, nj in enumerate(n):
                if nj:
                    out[:, c] *= tables[j][nj]
        return out

    def norm(self, n):
        val = 1.0
        for nj, v in zip(n, self.variances):
            val *= math.factorial(int(nj)) * v ** int(nj)
        return val

    def transform(self, n, phi):
        phi = np.asarray(phi, dtype=float)
        lin = self.basis.u @ (self.tau * phi)
        return math.exp(0.5 * float(self.tau @ phi**2)) * float(np.prod(lin ** np.asarray(n)))


def mv_hermite_eval(sys, n, x):
    return sys.evaluate(n, x)


def transform(sys, n, dual_point):
    """Closed-form transform ``E[exp-or-pgf(dual_point, X) P_n(X)]``."""
    return sys.transform(n, dual_point)
