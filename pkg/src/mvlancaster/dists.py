"""Ambient distributions and certified lattice truncations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .basis import check_weights
from .errors import LancasterError, OutOfSupport


@dataclass(frozen=True)
class LatticeSlab:
    """Points ``x`` with ``x_i <= bounds_i`` and ``min_total <= |x| <= max_total``."""

    bounds: tuple
    tail_mass_bound: float
    max_total: int | None = None
    min_total: int = 0

    @property
    def d(self):
        return len(self.bounds)

    def points(self):
        """Lexicographically ordered array of all contained points."""
        ranges = [range(b + 1) for b in self.bounds]
        pts = []
        for x in itertools.product(*ranges):
            s = sum(x)
            if s < self.min_total or (self.max_total is not None and s > self.max_total):
                continue
            pts.append(x)
        return np.array(pts, dtype=int).reshape(-1, self.d)

    def contains(self, x):
        x = np.asarray(x)
        s = x.sum(axis=-1)
        ok = np.all((x >= 0) & (x <= np.asarray(self.bounds)), axis=-1) & (s >= self.min_total)
        if self.max_total is not None:
            ok &= s <= self.max_total
        return ok

    def interior_mask(self, points=None):
        """Points from which every unit step ``+e_j`` (and so every type change) stays inside."""
        pts = self.points() if points is None else np.asarray(points)
        ok = np.all(pts + 1 <= np.asarray(self.bounds), axis=1)
        if self.max_total is not None:
            ok &= pts.sum(axis=1) + 1 <= self.max_total
        return ok


# ---------------------------------------------------------------------------


def _upper_quantile(frozen, epsilon):
    """Smallest integer ``B`` with ``P(N > B) < epsilon``.

    ``isf`` returns NaN for very small tails, so the search runs on ``logsf``.
    """
    guess = frozen.isf(epsilon)
    B = int(guess) if np.isfinite(guess) else int(frozen.mean())
    target = math.log(epsilon)
    while frozen.logsf(B) >= target:
        B = max(B + 1, int(B * 1.1))
    while B > 0 and frozen.logsf(B - 1) < target:
        B -= 1
    return B


def _log_multinomial(x):
    x = np.asarray(x, dtype=float)
    return special.gammaln(x.sum(axis=-1) + 1) - special.gammaln(x + 1).sum(axis=-1)


@dataclass(frozen=True)
class Multinomial:
    N: int
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", check_weights(self.p))

    def pmf(self, x):
        x = np.asarray(x)
        if np.any(x < 0) or np.any(x.sum(axis=-1) != self.N):
            raise OutOfSupport(f"multinomial support requires |x| = {self.N}")
        return np.exp(_log_multinomial(x) + (x * np.log(self.p)).sum(axis=-1))

    def slab(self, epsilon=0.0):
        d = self.p.size
        return LatticeSlab((self.N,) * d, 0.0, self.N, self.N)


@dataclass(frozen=True)
class PoissonProduct:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if np.any(mu <= 0):
            raise LancasterError("Poisson means must be positive")
        object.__setattr__(self, "mu", mu)

    @property
    def p(self):
        return self.mu / self.mu.sum()

    def pmf(self, x):
        x = np.asarray(x)
        if np.any(x < 0):
            raise OutOfSupport("Poisson support is the non-negative lattice")
        return np.exp((x * np.log(self.mu) - self.mu - special.gammaln(x + 1)).sum(axis=-1))

    def slab(self, epsilon):
        """Per-coordinate quantiles with a union bound on the outside mass."""
        d = self.mu.size
        bounds, tail = [], 0.0
        for m in self.mu:
            B = _upper_quantile(stats.poisson(m), epsilon / d)
            bounds.append(B)
            tail += float(stats.poisson.sf(B, m))
        return LatticeSlab(tuple(bounds), tail)

    def simplex_slab(self, epsilon):
        """Points with ``|x| <= K``; the outside mass is a Poisson(|mu|) tail."""
        lam = self.mu.sum()
        K = _upper_quantile(stats.poisson(lam), epsilon)
        return LatticeSlab((K,) * self.mu.size, float(stats.poisson.sf(K, lam)), K)


@dataclass(frozen=True)
class MeixnerDist:
    """Negative binomial number of trials split multinomially over ``p``."""

    alpha: float
    theta: float
    p: np.ndarray

    def __post_init__(self):
        if self.alpha <= 0 or self.theta <= 0:
            raise LancasterError("alpha and theta must be positive")
        object.__setattr__(self, "p", check_weights(self.p))

    def total_pmf(self, k):
        k = np.asarray(k, dtype=float)
        a, th = self.alpha, self.theta
        return np.exp(
            special.gammaln(a + k) - special.gammaln(a) - special.gammaln(k + 1)
            + k * math.log(th) - (a + k) * math.log1p(th)
        )

    def pmf(self, x):
        x = np.asarray(x)
        if np.any(x < 0):
            raise OutOfSupport("Meixner support is the non-negative lattice")
        k = x.sum(axis=-1)
        a, th = self.alpha, self.theta
        logp = (
            special.gammaln(a + k) - special.gammaln(a) - special.gammaln(k + 1)
            + k * math.log(th) - (a + k) * math.log1p(th)
            + _log_multinomial(x) + (x * np.log(self.p)).sum(axis=-1)
        )
        return np.exp(logp)

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        return (1.0 - self.theta * float(self.p @ (s - 1.0))) ** (-self.alpha)

    def slab(self, epsilon):
        """Bound the total count by a negative binomial quantile."""
        nb = stats.nbinom(self.alpha, 1.0 / (1.0 + self.theta))
        K = _upper_quantile(nb, epsilon)
        return LatticeSlab((K,) * self.p.size, float(nb.sf(K)), K)


@dataclass(frozen=True)
class NormalProduct:
    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if np.any(tau <= 0):
            raise LancasterError("variances must be positive")
        object.__setattr__(self, "tau", tau)

    def pmf(self, x):
        """Density of independent centred normals."""
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x**2 / self.tau).sum(axis=-1)) / np.sqrt(
            np.prod(2 * np.pi * self.tau)
        )

    def slab(self, epsilon):
        raise LancasterError("the normal product is continuous; use Monte Carlo")


def pmf(spec, x):
    return spec.pmf(x)


def slab_for(spec, epsilon):
    if not 0 < epsilon < 1 and not isinstance(spec, Multinomial):
        raise LancasterError("epsilon must lie in (0, 1)")
    return spec.slab(epsilon)


def slab_mass(spec, slab):
    return math.fsum(spec.pmf(slab.points()))


def verify_poisson_gamma_mixture(alpha, theta, p, nodes=200, points=None, epsilon=1e-12):
    """Max abs gap between the Meixner pmf and its Poisson-Gamma mixture integral.

    The Gamma(alpha, theta) variable is written ``theta * t`` and the integral
    over ``t`` uses generalised Gauss-Laguerre nodes for ``t^(alpha-1) e^-t``.
    """
    dist = MeixnerDist(alpha, theta, p)
    pts = dist.slab(epsilon).points() if points is None else np.atleast_2d(points)
    t, w = special.roots_genlaguerre(nodes, alpha - 1.0)
    w = w / special.gamma(alpha)
    logp = np.log(dist.p)
    worst = 0.0
    for x in pts:
        k = x.sum()
        log_rest = float((x * logp).sum() - special.gammaln(x + 1).sum())
        mu = theta * t
        vals = np.exp(-mu + k * np.log(mu) + log_rest) if k else np.exp(-mu + log_rest)
        integral = math.fsum(w * vals)
        worst = max(worst, abs(integral - float(dist.pmf(x))))
    return worst
