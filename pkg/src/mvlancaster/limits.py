"""Numerical checks of the limits connecting the polynomial families.

Each limit is evaluated on a fixed grid for a growing parameter and the
maximum absolute difference between the scaled polynomial and its limit is
reported.  Every check evaluates both sides independently: the limiting
family through its own evaluator, the approximating one through the
generating-function coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import series
from .basis import Basis, build_basis
from .polys import Hermite, KrawtchoukCoefficients, Meixner, PoissonCharlier, hermite_table

SCHEDULE = (10.0, 1e2, 1e3, 1e4)
DEFAULT_THRESHOLD = 1e-2


@dataclass
class LimitResult:
    name: str
    parameters: tuple
    discrepancies: tuple
    threshold: float
    scales: tuple = ()

    @property
    def monotone(self):
        return bool(all(b < a for a, b in zip(self.discrepancies, self.discrepancies[1:])))

    @property
    def final(self):
        return self.discrepancies[-1]

    @property
    def rate(self):
        """Least-squares slope of log discrepancy against log parameter."""
        x = np.log(np.asarray(self.parameters, dtype=float))
        y = np.log(np.asarray(self.discrepancies, dtype=float))
        return float(np.polyfit(x, y, 1)[0])

    @property
    def relative_final(self):
        return self.final / self.scales[-1] if self.scales else float("nan")

    @property
    def passed(self):
        return bool(self.monotone and self.final < self.threshold)

    def to_dict(self):
        return {
            "name": self.name,
            "parameters": list(self.parameters),
            "discrepancies": list(self.discrepancies),
            "threshold": self.threshold,
            "rate": self.rate,
            "relative_final": self.relative_final,
            "monotone": self.monotone,
            "passed": self.passed,
        }


@dataclass
class LimitReport:
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def to_dict(self):
        return {"passed": self.passed, "limits": [r.to_dict() for r in self.results]}


def _charlier_index_to_krawtchouk(n):
    # Krawtchouk slots are (u^(1), ..., u^(d-1), total-count direction)
    return tuple(n[1:]) + (n[0],)


def krawtchouk_to_charlier_basis(b, mu, N):
    """``(d+1)``-state basis whose Krawtchouk polynomials tend to the Poisson-Charlier ones."""
    mu = np.asarray(mu, dtype=float)
    d = b.d
    lam = mu.sum()
    p = np.append(mu, N) / (N + lam)
    v = np.zeros((d + 1, d + 1))
    v[0] = 1.0
    v[1:d, :d] = b.u[1:] / lam
    v[d, :d] = -1.0 / lam
    v[d, d] = 1.0 / N
    a = (v * v * p).sum(axis=1)
    return Basis(p, v, a)


def krawtchouk_charlier_gap(mu, N, points, indices, basis=None):
    sys = PoissonCharlier.from_means(mu, basis)
    vb = krawtchouk_to_charlier_basis(sys.basis, mu, N)
    D = max(max(n) for n in indices)
    coeffs = KrawtchoukCoefficients(vb.u[1:], D)
    target = sys.evaluate_many(points, indices)
    worst = 0.0
    for row, x in enumerate(points):
        xx = np.append(np.asarray(x, dtype=float), N - float(np.sum(x)))
        box = coeffs.real(xx)
        for col, n in enumerate(indices):
            worst = max(worst, abs(box[_charlier_index_to_krawtchouk(n)] - target[row, col]))
    return worst, float(np.max(np.abs(target)))


def charlier_hermite_gap(p, lam, zs, indices, basis=None):
    """``(-1)^{n_0} |mu|^{|n|/2} prod n_j! C_n(|mu|^{1/2} z + mu)`` against ``H_n(z; p, u)``."""
    p = np.asarray(p, dtype=float)
    b = basis if basis is not None else build_basis(p)
    mu = lam * p
    pc = PoissonCharlier(b, mu)
    herm = Hermite(b, p)
    x = math.sqrt(lam) * np.asarray(zs) + mu
    C = pc.evaluate_many(x, indices)
    H = herm.evaluate_many(zs, indices)
    scale = np.array(
        [(-1) ** n[0] * lam ** (sum(n) / 2) * math.prod(map(math.factorial, n)) for n in indices]
    )
    return float(np.max(np.abs(C * scale - H))), float(np.max(np.abs(H)))


def meixner_hermite_gap(p, theta, alpha, zs, indices, basis=None):
    """``prod n_j! (-theta)^{n_0} alpha^{-|n|/2} M_n(alpha^{1/2} z + alpha theta p)`` against ``H'_n(z)``.

    ``H'_n`` is the product of Hermite-Chebycheff polynomials in the hat
    coordinates with variances ``theta (1 + theta)`` for the total and
    ``theta a_j`` for ``j >= 1``.
    """
    p = np.asarray(p, dtype=float)
    b = basis if basis is not None else build_basis(p)
    mx = Meixner(b, alpha, theta)
    zs = np.asarray(zs, dtype=float)
    x = math.sqrt(alpha) * zs + alpha * theta * p
    M = mx.evaluate_many(x, indices)
    hat = b.hat(zs)
    var = theta * b.a.copy()
    var[0] = theta * (1.0 + theta)
    D = max(max(n) for n in indices)
    tables = [hermite_table(D, hat[:, j], var[j]) for j in range(b.d)]
    H = np.ones_like(M)
    for c, n in enumerate(indices):
        for j, nj in enumerate(n):
            H[:, c] *= tables[j][nj]
    scale = np.array(
        [
            math.prod(map(math.factorial, n)) * (-theta) ** n[0] * alpha ** (-sum(n) / 2)
            for n in indices
        ]
    )
    return float(np.max(np.abs(M * scale - H))), float(np.max(np.abs(H)))


def meixner_charlier_gap(mu, alpha, points, indices, basis=None):
    """``theta^{n_0} |mu|^{-|n|} M_n(x; alpha, theta = |mu|/alpha)`` against ``C_n(x; mu)``."""
    mu = np.asarray(mu, dtype=float)
    lam = mu.sum()
    pc = PoissonCharlier.from_means(mu, basis)
    theta = lam / alpha
    mx = Meixner(pc.basis, alpha, theta)
    M = mx.evaluate_many(points, indices)
    C = pc.evaluate_many(points, indices)
    scale = np.array([theta ** n[0] * lam ** (-sum(n)) for n in indices])
    return float(np.max(np.abs(M * scale - C))), float(np.max(np.abs(C)))


def lattice_grid(d, top):
    return np.array(list(itertools.product(range(top + 1), repeat=d)), dtype=float)


def real_grid(d, half_width=2.0, steps=5):
    axis = np.linspace(-half_width, half_width, steps)
    return np.array(list(itertools.product(axis, repeat=d)))


def verify_limits(
    schedule=SCHEDULE,
    max_degree=3,
    d=2,
    mu=None,
    theta=0.5,
    thresholds=None,
):
    """Run all four limits over ``schedule`` and report monotonicity and final gaps."""
    mu = np.ones(d) if mu is None else np.asarray(mu, dtype=float)
    p = mu / mu.sum()
    b = build_basis(p)
    th = {
        "krawtchouk->charlier": DEFAULT_THRESHOLD,
        "charlier->hermite": DEFAULT_THRESHOLD,
        "meixner->hermite": DEFAULT_THRESHOLD,
        "meixner->charlier": DEFAULT_THRESHOLD,
    }
    th.update(thresholds or {})
    idx = series.multi_indices(d, max_degree, 1)
    lat = lattice_grid(d, 3)
    zs = real_grid(d)
    report = LimitReport()

    runs = [
        ("krawtchouk->charlier", lambda t: krawtchouk_charlier_gap(mu, t, lat, idx, b)),
        ("charlier->hermite", lambda t: charlier_hermite_gap(p, t, zs, idx, b)),
        ("meixner->hermite", lambda t: meixner_hermite_gap(p, theta, t, zs, idx, b)),
        ("meixner->charlier", lambda t: meixner_charlier_gap(mu, t, lat, idx, b)),
    ]
    for name, fn in runs:
        out = [fn(t) for t in schedule]
        report.results.append(
            LimitResult(
                name,
                tuple(schedule),
                tuple(g for g, _ in out),
                th[name],
                tuple(s for _, s in out),
            )
        )
    return report
