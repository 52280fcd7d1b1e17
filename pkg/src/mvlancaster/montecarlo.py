"""Reproducible simulation of the structural models, kernels and generators.

Paths are processed in fixed-size chunks and chunk ``c`` draws from a Philox
stream keyed by ``(seed, c)``, so results do not depend on how chunks are
scheduled.  Every statistic carries its standard error; a statistic passes
when its z-score is below the threshold (4 by default, no multiplicity
correction; the report states how many statistics were tested).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import series
from .basis import build_basis
from .errors import ConfigError
from .lancaster import poisson_structural_sampler_params, rho_factors
from .markov import GaussAR, NBBranch, PoissonQueue, kernel_from_dict, product_eigenvalues
from .polys import Hermite, Meixner, PoissonCharlier

Z_THRESHOLD = 4.0
CHUNK = 1 << 16


def stream(seed, chunk):
    """Counter-based generator for one chunk of paths."""
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=seed + (int(chunk) << 64)))


def _chunks(n):
    for c, start in enumerate(range(0, n, CHUNK)):
        yield c, min(CHUNK, n - start)


@dataclass(frozen=True)
class SimConfig:
    model: dict
    n_samples: int
    seed: int = 0
    burn_in: int = 0
    stream_policy: str = "philox-per-chunk"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be at least 1")

    def to_dict(self):
        return {
            "model": self.model,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "burn_in": self.burn_in,
            "stream_policy": self.stream_policy,
            "chunk": CHUNK,
        }


@dataclass
class Statistic:
    name: str
    estimate: float
    target: float
    stderr: float

    @property
    def z(self):
        gap = abs(self.estimate - self.target)
        if self.stderr > 0:
            return gap / self.stderr
        return 0.0 if gap <= 1e-12 * max(1.0, abs(self.target)) else math.inf

    def to_dict(self):
        return {"name": self.name, "estimate": self.estimate, "target": self.target, "stderr": self.stderr, "z": self.z}


@dataclass
class SimReport:
    kind: str
    config: dict
    stats: list = field(default_factory=list)
    threshold: float = Z_THRESHOLD
    extra: dict = field(default_factory=dict)

    @property
    def max_z(self):
        return max((s.z for s in self.stats), default=0.0)

    @property
    def passed(self):
        return bool(self.max_z < self.threshold)

    def to_dict(self):
        return {
            "kind": self.kind,
            "config": self.config,
            "threshold": self.threshold,
            "n_statistics": len(self.stats),
            "note": "per-statistic threshold without Bonferroni correction",
            "max_z": self.max_z,
            "passed": self.passed,
            "statistics": [s.to_dict() for s in self.stats],
            "extra": self.extra,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, default=_jsonable)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "estimate", "target", "stderr", "z"])
            for s in self.stats:
                w.writerow([s.name, repr(s.estimate), repr(s.target), repr(s.stderr), repr(s.z)])


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class _Moments:
    """Chunked sums of a fixed set of columns; chunk order is fixed so sums are reproducible."""

    def __init__(self, k):
        self.n = 0
        self.s1 = np.zeros(k)
        self.s2 = np.zeros(k)

    def add(self, cols):
        self.n += cols.shape[0]
        self.s1 += cols.sum(axis=0)
        self.s2 += (cols * cols).sum(axis=0)

    def mean_se(self):
        mean = self.s1 / self.n
        var = np.maximum(self.s2 / self.n - mean**2, 0.0) * self.n / max(self.n - 1, 1)
        return mean, np.sqrt(var / self.n)


def _label(n):
    return "(" + ",".join(map(str, n)) + ")"


def _draw_atoms(rng, weights, size):
    return rng.choice(len(weights), size=size, p=np.asarray(weights) / np.sum(weights))


# ---------------------------------------------------------------------------
# structural constructions


def simulate_structural_poisson(b, m, mu, n_samples, seed, max_degree=3):
    """Compare empirical ``E[C_m(X) C_n(Y)]`` with ``delta_mn rho_n ||C_n||^2`` for ``1 <= |m|,|n| <= D``."""
    params = poisson_structural_sampler_params(b, m, mu)
    sys = PoissonCharlier(b, np.asarray(mu, dtype=float))
    idx = series.multi_indices(b.d, max_degree, 1)
    rho = {n: 0.0 for n in idx}
    for prm in params:
        f = rho_factors(b, prm.xi, "charlier")
        for n in idx:
            rho[n] += prm.weight * float(np.prod(f ** np.array(n)))
    pairs = [(i, j) for i in range(len(idx)) for j in range(len(idx))]
    acc = _Moments(len(pairs))
    identical = 0
    for c, size in _chunks(n_samples):
        rng = stream(seed, c)
        which = _draw_atoms(rng, [prm.weight for prm in params], size)
        X = np.zeros((size, b.d), dtype=np.int64)
        Y = np.zeros_like(X)
        for a, prm in enumerate(params):
            sel = np.flatnonzero(which == a)
            k = sel.size
            if k == 0:
                continue
            Z = rng.poisson(np.clip(prm.array_mean, 0, None), size=(k, b.d, b.d))
            X[sel] = rng.poisson(np.clip(prm.z_mean, 0, None), size=(k, b.d)) + Z.sum(axis=2)
            Y[sel] = rng.poisson(np.clip(prm.zprime_mean, 0, None), size=(k, b.d)) + Z.sum(axis=1)
        identical += int(np.all(X == Y, axis=1).sum())
        PX = sys.evaluate_many(X, idx)
        PY = sys.evaluate_many(Y, idx)
        acc.add(np.stack([PX[:, i] * PY[:, j] for i, j in pairs], axis=1))
    mean, se = acc.mean_se()
    rep = SimReport(
        "structural-poisson",
        {"mu": list(map(float, mu)), "measure": m.to_dict(), "n_samples": n_samples, "seed": seed, "max_degree": max_degree},
    )
    for k, (i, j) in enumerate(pairs):
        n = idx[j]
        target = rho[n] * sys.norm(n) if i == j else 0.0
        rep.stats.append(Statistic(f"E[C{_label(idx[i])}(X)C{_label(n)}(Y)]", float(mean[k]), float(target), float(se[k])))
    rep.extra["fraction_x_equals_y"] = identical / n_samples
    return rep


def simulate_gaussian_lancaster(b, tau, m, n_samples, seed, max_degree=2):
    """Mixture of Gaussian autoregressions started from ``X ~ N(0, diag(tau))``.

    Reports hat-coordinate correlations against ``E[xi_r]`` and the
    eigenvalue estimates ``E[H_n(X) H_n(Y)] / ||H_n||^2`` against
    ``E[prod xi_j^{n_j}]``.
    """
    tau = np.asarray(tau, dtype=float)
    sys = Hermite(b, tau)
    idx = series.multi_indices(b.d, max_degree, 1)
    kernels = [GaussAR(tau, xi, b) for xi, _ in m.atoms]
    weights = [w for _, w in m.atoms]
    rho = {n: sum(w * float(np.prod(np.asarray(xi) ** np.array(n))) for xi, w in m.atoms) for n in idx}
    hat_var = tau.sum() * b.a
    acc = _Moments(b.d + len(idx))
    for c, size in _chunks(n_samples):
        rng = stream(seed, c)
        which = _draw_atoms(rng, weights, size)
        X = rng.standard_normal((size, b.d)) * np.sqrt(tau)
        Y = np.empty_like(X)
        for a, ker in enumerate(kernels):
            sel = np.flatnonzero(which == a)
            if sel.size:
                Y[sel] = ker.sample(X[sel], rng)
        hx, hy = b.hat(X), b.hat(Y)
        cols = [hx[:, r] * hy[:, r] / hat_var[r] for r in range(b.d)]
        HX, HY = sys.evaluate_many(X, idx), sys.evaluate_many(Y, idx)
        cols += [HX[:, k] * HY[:, k] / sys.norm(n) for k, n in enumerate(idx)]
        acc.add(np.stack(cols, axis=1))
    mean, se = acc.mean_se()
    rep = SimReport(
        "gaussian-lancaster",
        {"tau": tau.tolist(), "measure": m.to_dict(), "n_samples": n_samples, "seed": seed, "max_degree": max_degree},
    )
    exi = sum(w * np.asarray(xi) for xi, w in m.atoms)
    for r in range(b.d):
        rep.stats.append(Statistic(f"corr(hatX_{r},hatY_{r})", float(mean[r]), float(exi[r]), float(se[r])))
    for k, n in enumerate(idx):
        rep.stats.append(Statistic(f"rho{_label(n)}", float(mean[b.d + k]), rho[n], float(se[b.d + k])))
    return rep


# ---------------------------------------------------------------------------
# discrete chains


def polynomial_system_for(kernel):
    """Stationary orthogonal system whose polynomials the kernel's eigenvalues refer to."""
    if isinstance(kernel, PoissonQueue):
        return PoissonCharlier(kernel.basis, kernel.mu)
    if isinstance(kernel, NBBranch):
        return Meixner(build_basis(kernel.p), kernel.alpha, kernel.theta)
    if isinstance(kernel, GaussAR):
        return Hermite(kernel.basis, kernel.tau)
    raise ConfigError(f"no discrete chain for {type(kernel).__name__}")


def kernel_eigenvalues(kernel, sys, max_degree):
    if isinstance(kernel, NBBranch):
        f = kernel.eigenvalues(sys.basis)
    else:
        f = kernel.eigenvalues()
    return product_eigenvalues(f, max_degree)


def simulate_chain(kernel, init, steps, n_paths, seed, max_degree=2, min_expected=5.0):
    """Run ``steps`` steps from ``init`` and compare the end state with the stationary law.

    Lattice kernels get one z-score per cell with expected count at least
    ``min_expected``; the Gaussian kernel gets hat-coordinate means and
    variances.  One extra step gives the eigenvalue estimates
    ``E[P_n(X) P_n(Y)] / ||P_n||^2``.
    """
    if steps < 0:
        raise ConfigError("steps must be non-negative")
    sys = polynomial_system_for(kernel)
    rho = kernel_eigenvalues(kernel, sys, max_degree)
    idx = [n for n in rho if sum(n) >= 1]
    lattice = not isinstance(kernel, GaussAR)
    counts: dict = {}
    hat_acc = _Moments(2 * kernel.d) if not lattice else None
    eig = _Moments(len(idx))
    init = np.asarray(init)
    for c, size in _chunks(n_paths):
        rng = stream(seed, c)
        X = np.repeat(init[None, :], size, axis=0)
        X = X.astype(np.int64) if lattice else X.astype(float)
        for _ in range(steps):
            X = kernel.sample(X, rng)
        Y = kernel.sample(X, rng)
        if lattice:
            keys, cnt = np.unique(X, axis=0, return_counts=True)
            for k, v in zip(map(tuple, keys.tolist()), cnt.tolist()):
                counts[k] = counts.get(k, 0) + v
        else:
            h = kernel.basis.hat(X)
            hat_acc.add(np.concatenate([h, h * h], axis=1))
        PX, PY = sys.evaluate_many(X, idx), sys.evaluate_many(Y, idx)
        eig.add(PX * PY / np.array([sys.norm(n) for n in idx]))
    rep = SimReport(
        "chain",
        {"kernel": kernel.to_dict(), "init": init.tolist(), "steps": steps, "n_paths": n_paths, "seed": seed, "max_degree": max_degree},
    )
    if lattice:
        pi = kernel.stationary()
        support = sorted(counts)
        probs = pi.pmf(np.array(support)) if support else np.array([])
        # cells never visited still count when their expected count is large
        slab = pi.slab(min_expected / (10 * n_paths)) if hasattr(pi, "slab") else None
        if slab is not None:
            pts = slab.points()
            exp_all = pi.pmf(pts) * n_paths
            for x, e in zip(map(tuple, pts.tolist()), exp_all):
                if e >= min_expected:
                    q = e / n_paths
                    obs = counts.get(x, 0)
                    rep.stats.append(Statistic(f"freq{_label(x)}", obs / n_paths, float(q), math.sqrt(q * (1 - q) / n_paths)))
        rep.extra["distinct_states"] = len(support)
        rep.extra["visited_mass"] = float(np.sum(probs))
    else:
        mean, se = hat_acc.mean_se()
        var = kernel.hat_variances
        d = kernel.d
        for r in range(d):
            rep.stats.append(Statistic(f"mean(hatX_{r})", float(mean[r]), 0.0, float(se[r])))
            rep.stats.append(Statistic(f"var(hatX_{r})", float(mean[d + r]), float(var[r]), float(se[d + r])))
    mean, se = eig.mean_se()
    for k, n in enumerate(idx):
        rep.stats.append(Statistic(f"rho{_label(n)}", float(mean[k]), rho[n], float(se[k])))
    return rep


def sampler_agreement(kernel, x, n_samples, seed, bounds, min_expected=5.0):
    """One-step sample frequencies against the exact step law, one z per well-populated cell."""
    law = kernel.step_law(x, bounds)
    counts = np.zeros(law.shape, dtype=np.int64)
    for c, size in _chunks(n_samples):
        rng = stream(seed, c)
        Y = kernel.sample(np.repeat(np.asarray(x, dtype=np.int64)[None, :], size, axis=0), rng)
        inside = np.all(Y <= np.asarray(bounds), axis=1)
        np.add.at(counts, tuple(Y[inside].T), 1)
    rep = SimReport("sampler-agreement", {"kernel": kernel.to_dict(), "x": list(map(int, x)), "n_samples": n_samples, "seed": seed})
    for cell in zip(*np.nonzero(law * n_samples >= min_expected)):
        q = float(law[cell])
        rep.stats.append(
            Statistic(f"P{_label(cell)}", counts[cell] / n_samples, q, math.sqrt(q * (1 - q) / n_samples))
        )
    return rep


# ---------------------------------------------------------------------------
# continuous time


def gillespie_paths(spec, times, init, n_paths, seed):
    """States at each of the sorted ``times`` for ``n_paths`` event-driven paths.

    Returns an array of shape ``(len(times), n_paths, d)``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ConfigError("observation times must be sorted and non-negative")
    rates = spec.affine_rates()
    init = np.asarray(init, dtype=np.int64)
    out = np.empty((len(times), n_paths, init.size), dtype=np.int64)
    done = 0
    for c, size in _chunks(n_paths):
        rng = stream(seed, c)
        X = np.repeat(init[None, :], size, axis=0)
        T = np.zeros(size)
        snap = np.empty((len(times), size, init.size), dtype=np.int64)
        nxt = np.zeros(size, dtype=int)  # next observation index per path
        active = np.ones(size, dtype=bool)
        while active.any():
            a = np.flatnonzero(active)
            R = rates.rates(X[a])
            total = R.sum(axis=1)
            with np.errstate(divide="ignore"):
                dt = np.where(total > 0, rng.exponential(1.0, a.size) / total, np.inf)
            u = rng.random(a.size) * total
            Tn = T[a] + dt
            # record every observation time passed before the next event
            for k in range(len(times)):
                hit = (nxt[a] == k) & (Tn > times[k])
                snap[k, a[hit]] = X[a[hit]]
                nxt[a[hit]] += 1
            fire = nxt[a] < len(times)
            a, R, u, Tn = a[fire], R[fire], u[fire], Tn[fire]
            move = (np.cumsum(R, axis=1) > u[:, None]).argmax(axis=1)
            X[a] += rates.moves[move]
            T[a] = Tn
            active[:] = False
            active[a] = True
        out[:, done : done + size] = snap
        done += size
    return out


def gillespie_ct(spec, t_horizon, init, n_paths, seed, max_degree=1, times=None):
    """Event-driven paths of a continuous-time generator against its spectral prediction.

    For each observation time ``t`` and ``1 <= |n| <= D`` the empirical
    ``E[P_n(X(t)) | X(0) = init]`` is compared with ``exp(-lambda_n t) P_n(init)``.
    The fitted decay rate of the first-degree means is also reported.
    """
    times = np.asarray([t_horizon] if times is None else times, dtype=float)
    sys = PoissonCharlier(spec.basis, spec.mu) if spec.variant == "CTPoissonGen" else Meixner(spec.basis, spec.alpha, spec.theta)
    idx = series.multi_indices(spec.d, max_degree, 1)
    paths = gillespie_paths(spec, times, init, n_paths, seed)
    P0 = sys.evaluate_many(np.asarray(init)[None, :], idx)[0]
    rep = SimReport(
        "gillespie",
        {"generator": spec.to_dict(), "times": times.tolist(), "init": list(map(int, init)), "n_paths": n_paths, "seed": seed, "max_degree": max_degree},
    )
    means = np.empty((len(times), len(idx)))
    ses = np.empty_like(means)
    for k, t in enumerate(times):
        P = sys.evaluate_many(paths[k], idx)
        means[k] = P.mean(axis=0)
        ses[k] = P.std(axis=0, ddof=1) / math.sqrt(n_paths)
        for c, n in enumerate(idx):
            target = math.exp(-spec.eigenvalue(n) * t) * P0[c]
            rep.stats.append(Statistic(f"E[P{_label(n)}(X({t:g}))]", float(means[k, c]), float(target), float(ses[k, c])))
    if len(times) >= 2:
        for c, n in enumerate(idx):
            if sum(n) != 1:
                continue
            fit = _decay_fit(times, means[:, c], ses[:, c], P0[c])
            if fit is not None:
                rep.stats.append(Statistic(f"decay_rate{_label(n)}", fit[0], spec.eigenvalue(n), fit[1]))
    return rep


def _decay_fit(times, means, ses, start):
    """Weighted least-squares rate of ``log(mean / start)`` against ``t`` (through the origin)."""
    ratio = means / start if start != 0 else None
    if ratio is None or np.any(ratio <= 0):
        return None
    y = -np.log(ratio)
    sy = ses / np.abs(means)
    w = 1.0 / sy**2
    rate = float(np.sum(w * times * y) / np.sum(w * times**2))
    se = float(1.0 / math.sqrt(np.sum(w * times**2)))
    return rate, se


def stationary_frequencies(spec, samples, n_paths, min_expected=5.0):
    """Cell z-scores of end states against the generator's stationary law."""
    pi = spec.stationary()
    keys, cnt = np.unique(samples, axis=0, return_counts=True)
    counts = dict(zip(map(tuple, keys.tolist()), cnt.tolist()))
    pts = pi.slab(min_expected / (10 * n_paths)).points()
    stats_ = []
    for x, q in zip(map(tuple, pts.tolist()), pi.pmf(pts)):
        if q * n_paths >= min_expected:
            stats_.append(Statistic(f"freq{_label(x)}", counts.get(x, 0) / n_paths, float(q), math.sqrt(q * (1 - q) / n_paths)))
    return stats_


def run_config(cfg: SimConfig):
    """Dispatch a ``SimConfig`` whose model names a kernel or generator."""
    model = dict(cfg.model)
    spec = kernel_from_dict(model)
    init = model.get("init", [0] * spec.d)
    if spec.variant in ("CTPoissonGen", "CTMeixnerGen"):
        times = model.get("times", [1.0])
        rep = gillespie_ct(spec, times[-1], init, cfg.n_samples, cfg.seed, model.get("max_degree", 1), times)
        if model.get("stationary_check", False):
            end = gillespie_paths(spec, [times[-1]], init, cfg.n_samples, cfg.seed)[0]
            rep.stats.extend(stationary_frequencies(spec, end, cfg.n_samples))
        return rep
    return simulate_chain(spec, init, cfg.burn_in, cfg.n_samples, cfg.seed, model.get("max_degree", 2))
