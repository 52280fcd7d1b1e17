"""Markov kernels and generators whose eigenfunctions are the multivariate polynomials.

Discrete-time kernels expose an exact one-step law on a box (built by
convolution, so it is exact at every point of the box), a pgf or mgf in
closed form, and a vectorised sampler.  Continuous-time generators are
described by rates that are affine in the state, which serves both the
sparse truncated generator and the event-driven simulator.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse, stats

from . import series
from .basis import HYPERGROUP_TOL, Basis, build_basis, check_weights, hypergroup_tensor
from .dists import MeixnerDist, PoissonProduct
from .errors import ConfigError, DomainError, InfeasibleKernel, LancasterError, NegativeRate
from .lancaster import _omega_pair_law, normal_cross_covariance, rho_factors

# ---------------------------------------------------------------------------
# box helpers



def _shift(arr, axis, k=1):
    """Move mass ``k`` steps up along ``axis``; whatever leaves the box is dropped."""
    out = np.zeros_like(arr)
    dst = [slice(None)] * arr.ndim
    src = [slice(None)] * arr.ndim
    dst[axis] = slice(k, None)
    src[axis] = slice(None, arr.shape[axis] - k)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _box_points(bounds):
    return np.indices(tuple(int(v) + 1 for v in bounds)).reshape(len(bounds), -1).T


def _as_state(x):
    x = np.asarray(x)
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise DomainError(f"state {x.tolist()} is not a lattice point")
    return x.astype(int)


# ---------------------------------------------------------------------------
# discrete-time kernels


@dataclass(frozen=True)
class PoissonQueue:
    """Infinite-server queue: Poisson arrivals, each customer served or moved to another type."""

    mu: np.ndarray
    xi: np.ndarray
    basis: Basis | None = None
    tol: float = HYPERGROUP_TOL
    variant = "PoissonQueue"

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if np.any(mu <= 0):
            raise InfeasibleKernel("arrival means must be positive")
        if xi.size != mu.size or np.any(xi < 0) or xi.sum() > 1 + 1e-12:
            raise InfeasibleKernel("xi must lie in the unit simplex")
        b = self.basis if self.basis is not None else build_basis(mu / mu.sum())
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "basis", b)
        if self.p_cond.min() < -self.tol:
            raise InfeasibleKernel("p_{j|i}(omega) has negative entries; the basis is not a hypergroup here")

    @property
    def d(self):
        return self.mu.size

    @property
    def xi_norm(self):
        return float(self.xi.sum())

    @property
    def p_cond(self):
        return _omega_pair_law(self.basis, self.xi) / self.basis.p[:, None]

    def eigenvalues(self):
        """``rho_j(xi)`` for the basis functions ``j = 0..d-1``."""
        return rho_factors(self.basis, self.xi, "charlier")

    def stationary(self):
        return PoissonProduct(self.mu)

    def pgf(self, x, t):
        x = _as_state(x)
        t = np.asarray(t, dtype=float)
        s = self.xi_norm
        imm = np.exp(self.mu.sum() * (1 - s) * (self.basis.p @ t - 1))
        per = 1 - s + s * (self.p_cond @ t)
        return float(imm * np.prod(per ** x))

    def step_law(self, x, bounds):
        x = _as_state(x)
        s = self.xi_norm
        law = np.ones(())
        for m in self.mu * (1 - s):
            law = np.multiply.outer(law, stats.poisson.pmf(np.arange(bounds[len(law.shape)] + 1), m))
        P = self.p_cond
        for i, count in enumerate(x):
            for _ in range(count):
                new = (1 - s) * law
                for j in range(self.d):
                    if P[i, j] != 0:
                        new += s * P[i, j] * _shift(law, j)
                law = new
        return law

    def sample(self, X, rng):
        X = np.asarray(X, dtype=np.int64)
        n, d = X.shape
        s = self.xi_norm
        Y = rng.poisson(self.mu * (1 - s), size=(n, d))
        for i in range(d):
            probs = np.append(s * np.clip(self.p_cond[i], 0, None), 1 - s)
            probs /= probs.sum()
            Y += rng.multinomial(X[:, i], probs)[:, :d]
        return Y

    def to_dict(self):
        return {"variant": self.variant, "mu": self.mu.tolist(), "xi": self.xi.tolist(), "basis": self.basis.to_dict()}


@dataclass(frozen=True)
class NBBranch:
    """Branching with negative binomial immigration; stationary law is multivariate Meixner."""

    alpha: float
    beta: float
    kappa: float
    Q: np.ndarray
    p: np.ndarray
    tol: float = HYPERGROUP_TOL
    variant = "NBBranch"

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        p = check_weights(self.p)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "p", p)
        if self.alpha <= 0:
            raise InfeasibleKernel("alpha must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise InfeasibleKernel("beta must lie in [0, 1]")
        if not (0.0 <= self.kappa < 1.0 - self.beta or (self.beta == 1.0 and self.kappa == 0.0)):
            raise InfeasibleKernel("kappa must lie in [0, 1 - beta)")
        if Q.shape != (p.size, p.size) or Q.min() < -self.tol or np.abs(Q.sum(axis=1) - 1).max() > 1e-10:
            raise InfeasibleKernel("Q must be a row-stochastic matrix")

    @classmethod
    def from_mixing(cls, alpha, theta, xi_norm, p_cond, p):
        from .lancaster import map_to_branching

        bp = map_to_branching(theta, xi_norm, p_cond, p)
        return cls(alpha, bp.beta, bp.kappa, bp.Q, p)

    @property
    def d(self):
        return self.p.size

    @property
    def theta(self):
        """Stationary Meixner ``theta``; undefined when ``beta = 1`` (no immigration)."""
        if self.beta + self.kappa >= 1.0:
            raise InfeasibleKernel("beta = 1 has no stationary law")
        return self.kappa / (1.0 - self.beta - self.kappa)

    def stationary(self):
        return MeixnerDist(self.alpha, self.theta, self.p)

    def eigenvalues(self, basis):
        """``rho_j`` on ``basis``: ``|xi|`` for the total, ``|xi| theta_j(omega)`` for the rest."""
        xi_norm = self.beta / (1.0 - self.kappa)
        p_cond = (1.0 - self.kappa) * self.Q + self.kappa * self.p[None, :]
        theta = np.einsum("ri,i,ij,rj->r", basis.u, basis.p, p_cond, basis.u) / basis.a
        return xi_norm * theta

    def pgf(self, x, t):
        x = _as_state(x)
        t = np.asarray(t, dtype=float)
        k, b = self.kappa, self.beta
        den = 1.0 - k * float(self.p @ t)
        imm = ((1 - k) / den) ** self.alpha
        per = 1 - b + b * (1 - k) * (self.Q @ t) / den
        return float(imm * np.prod(per ** x))

    def step_law(self, x, bounds):
        """Exact one-step law on the box.

        The pgf is ``(1-k)^{-|x|}`` times a polynomial of degree ``|x|``, the
        product of ``(1-b)(1 - k p.t) + b (1-k) Q_i.t`` over individuals, times
        the pgf of a Meixner law with shape ``alpha + |x|`` and ``theta =
        k / (1-k)``.  Only shifts are involved, so every entry is exact.
        """
        x = _as_state(x)
        shape = tuple(int(v) + 1 for v in bounds)
        b, k = self.beta, self.kappa
        poly = np.zeros(shape)
        poly[(0,) * self.d] = 1.0
        for i, count in enumerate(x):
            lin = b * (1 - k) * self.Q[i] - (1 - b) * k * self.p
            for _ in range(count):
                new = (1 - b) * poly
                for j in range(self.d):
                    new += lin[j] * _shift(poly, j)
                poly = new
        total = int(x.sum())
        if k == 0.0:
            return poly
        base = MeixnerDist(self.alpha + total, k / (1 - k), self.p).pmf(_box_points(bounds)).reshape(shape)
        law = np.zeros(shape)
        for idx in zip(*np.nonzero(poly)):
            dst = tuple(slice(s, None) for s in idx)
            src = tuple(slice(None, n - s) for n, s in zip(shape, idx))
            law[dst] += poly[idx] * base[src]
        return law * (1 - k) ** (-total)

    def sample(self, X, rng):
        X = np.asarray(X, dtype=np.int64)
        n, d = X.shape
        Y = np.zeros((n, d), dtype=np.int64)
        survivors = np.zeros(n, dtype=np.int64)
        for i in range(d):
            s_i = rng.binomial(X[:, i], self.beta)
            survivors += s_i
            Y += rng.multinomial(s_i, np.clip(self.Q[i], 0, None) / np.clip(self.Q[i], 0, None).sum())
        q = 1.0 - self.kappa
        extra = np.zeros(n, dtype=np.int64)
        has = survivors > 0
        if self.kappa > 0:
            extra[has] = rng.negative_binomial(survivors[has], q)
            extra += rng.negative_binomial(self.alpha, q, size=n)
        Y += rng.multinomial(extra, self.p)
        return Y

    def to_dict(self):
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "beta": self.beta,
            "kappa": self.kappa,
            "Q": self.Q.tolist(),
            "p": self.p.tolist(),
        }


@dataclass(frozen=True)
class GaussAR:
    """Gaussian autoregression diagonal in the hat coordinates."""

    tau: np.ndarray
    xi: np.ndarray
    basis: Basis | None = None
    variant = "GaussAR"

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if np.any(tau <= 0):
            raise InfeasibleKernel("variances must be positive")
        if xi.size != tau.size or np.any(np.abs(xi) > 1):
            raise InfeasibleKernel("xi must be a d-vector in [-1, 1]^d")
        b = self.basis if self.basis is not None else build_basis(tau / tau.sum())
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "basis", b)

    @property
    def d(self):
        return self.tau.size

    def eigenvalues(self):
        return self.xi.copy()

    @property
    def hat_variances(self):
        return self.tau.sum() * self.basis.a

    def back_transform(self, hat):
        """Invert ``x_hat = u x`` using ``u^{-1} = diag(p) u^T diag(1/a)``."""
        b = self.basis
        return (np.asarray(hat) / b.a) @ b.u * b.p

    def sample(self, X, rng):
        X = np.asarray(X, dtype=float)
        hat = self.basis.hat(X)
        noise = rng.standard_normal(hat.shape) * np.sqrt((1 - self.xi**2) * self.hat_variances)
        return self.back_transform(self.xi * hat + noise)

    def conditional_mean_cov(self, x):
        T = np.diag(self.tau)
        V = normal_cross_covariance(self.basis, self.tau, self.xi)
        Tinv = np.diag(1.0 / self.tau)
        mean = V.T @ Tinv @ np.asarray(x, dtype=float)
        cov = T - V.T @ Tinv @ V
        return mean, cov

    def mgf(self, x, phi):
        """``E[exp(phi . Y) | X = x]`` for the Gaussian conditional law."""
        phi = np.asarray(phi, dtype=float)
        m, S = self.conditional_mean_cov(x)
        return float(np.exp(phi @ m + 0.5 * phi @ S @ phi))

    def to_dict(self):
        return {"variant": self.variant, "tau": self.tau.tolist(), "xi": self.xi.tolist(), "basis": self.basis.to_dict()}


# ---------------------------------------------------------------------------
# continuous-time generators


@dataclass(frozen=True)
class AffineRates:
    """Moves ``x -> x + moves[k]`` at rate ``const[k] + x @ slope[:, k]``."""

    moves: np.ndarray
    const: np.ndarray
    slope: np.ndarray
    kinds: tuple

    def rates(self, X):
        return self.const + np.asarray(X, dtype=float) @ self.slope


def _type_change_rates(b, gamma):
    """``p_j sum_l gamma_l s(i, j, l)`` over states ``l = 1..d-1``."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.size != b.d - 1 or np.any(gamma < 0):
        raise ConfigError(f"gamma must hold {b.d - 1} non-negative rates")
    s = hypergroup_tensor(b).s
    return b.p[None, :] * np.einsum("ijl,l->ij", s[:, :, : b.d - 1], gamma)


def theta_gamma(b, gamma):
    """``theta_j(gamma) = sum_{i<d} gamma_i (1 - u_i^(j))`` for every basis function."""
    gamma = np.asarray(gamma, dtype=float)
    return (1.0 - b.u[:, : b.d - 1]) @ gamma


@dataclass(frozen=True)
class CTPoissonGen:
    mu: np.ndarray
    nu: float
    gamma: np.ndarray
    basis: Basis | None = None
    variant = "CTPoissonGen"

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if np.any(mu <= 0) or self.nu < 0:
            raise ConfigError("need positive means and nu >= 0")
        b = self.basis if self.basis is not None else build_basis(mu / mu.sum())
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "basis", b)

    @property
    def d(self):
        return self.mu.size

    def change_rates(self):
        R = _type_change_rates(self.basis, self.gamma)
        for i in range(self.d):
            for j in range(self.d):
                if i != j and R[i, j] < -HYPERGROUP_TOL:
                    raise NegativeRate(i, j, float(R[i, j]))
        return np.maximum(R, 0.0)

    def eigenvalue(self, n):
        n = np.asarray(n)
        return float(n.sum() * self.nu + n[1:] @ theta_gamma(self.basis, self.gamma)[1:])

    def stationary(self):
        return PoissonProduct(self.mu)

    def lumped_rates(self, k):
        return self.nu * self.mu.sum(), self.nu * k

    def affine_rates(self):
        d = self.d
        R = self.change_rates()
        moves, const, cols, kinds = [], [], [], []
        for j in range(d):
            moves.append(np.eye(d, dtype=int)[j])
            const.append(self.nu * self.mu[j])
            cols.append(np.zeros(d))
            kinds.append("immigration")
        for i in range(d):
            moves.append(-np.eye(d, dtype=int)[i])
            const.append(0.0)
            cols.append(self.nu * np.eye(d)[i])
            kinds.append("death")
        for i in range(d):
            for j in range(d):
                if i != j and R[i, j] > 0:
                    moves.append(np.eye(d, dtype=int)[j] - np.eye(d, dtype=int)[i])
                    const.append(0.0)
                    cols.append(R[i, j] * np.eye(d)[i])
                    kinds.append("change")
        return AffineRates(np.array(moves), np.array(const), np.array(cols).T, tuple(kinds))

    def to_dict(self):
        return {
            "variant": self.variant,
            "mu": self.mu.tolist(),
            "nu": self.nu,
            "gamma": self.gamma.tolist(),
            "basis": self.basis.to_dict(),
        }


@dataclass(frozen=True)
class CTMeixnerGen:
    alpha: float
    theta: float
    nu: float
    gamma: np.ndarray
    p: np.ndarray
    basis: Basis | None = None
    variant = "CTMeixnerGen"

    def __post_init__(self):
        if self.alpha <= 0 or self.theta <= 0 or self.nu < 0:
            raise ConfigError("need alpha, theta > 0 and nu >= 0")
        p = check_weights(self.p)
        b = self.basis if self.basis is not None else build_basis(p)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "basis", b)

    @property
    def d(self):
        return self.p.size

    def change_rates(self):
        """``r~_{j|i} = p_j sum_l gamma_l s(i,j,l) - theta nu p_j``, off the diagonal."""
        R = _type_change_rates(self.basis, self.gamma) - self.theta * self.nu * self.p[None, :]
        for i in range(self.d):
            for j in range(self.d):
                if i != j and R[i, j] < -HYPERGROUP_TOL:
                    raise NegativeRate(i, j, float(R[i, j]))
        return np.maximum(R, 0.0)

    def eigenvalue(self, n):
        """Conjectured ``|n| nu + sum_{j>=1} n_j theta_j(gamma)``; checked, not assumed."""
        n = np.asarray(n)
        return float(n.sum() * self.nu + n[1:] @ theta_gamma(self.basis, self.gamma)[1:])

    def stationary(self):
        return MeixnerDist(self.alpha, self.theta, self.p)

    def lumped_rates(self, k):
        return self.theta * self.nu * (self.alpha + k), self.nu * (1 + self.theta) * k

    def affine_rates(self):
        d = self.d
        R = self.change_rates()
        moves, const, cols, kinds = [], [], [], []
        for j in range(d):
            moves.append(np.eye(d, dtype=int)[j])
            const.append(self.theta * self.nu * self.alpha * self.p[j])
            cols.append(np.full(d, self.theta * self.nu * self.p[j]))
            kinds.append("birth")
        for i in range(d):
            moves.append(-np.eye(d, dtype=int)[i])
            const.append(0.0)
            cols.append(self.nu * (1 + self.theta) * np.eye(d)[i])
            kinds.append("death")
        for i in range(d):
            for j in range(d):
                if i != j and R[i, j] > 0:
                    moves.append(np.eye(d, dtype=int)[j] - np.eye(d, dtype=int)[i])
                    const.append(0.0)
                    cols.append(R[i, j] * np.eye(d)[i])
                    kinds.append("change")
        return AffineRates(np.array(moves), np.array(const), np.array(cols).T, tuple(kinds))

    def to_dict(self):
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "theta": self.theta,
            "nu": self.nu,
            "gamma": self.gamma.tolist(),
            "p": self.p.tolist(),
            "basis": self.basis.to_dict(),
        }


_VARIANTS = {
    "PoissonQueue": (PoissonQueue, ("mu", "xi")),
    "NBBranch": (NBBranch, ("alpha", "beta", "kappa", "Q", "p")),
    "GaussAR": (GaussAR, ("tau", "xi")),
    "CTPoissonGen": (CTPoissonGen, ("mu", "nu", "gamma")),
    "CTMeixnerGen": (CTMeixnerGen, ("alpha", "theta", "nu", "gamma", "p")),
}


def kernel_from_dict(doc):
    try:
        cls, fields = _VARIANTS[doc["variant"]]
    except KeyError:
        raise ConfigError(f"unknown or missing kernel variant: {doc.get('variant')!r}") from None
    missing = [f for f in fields if f not in doc]
    if missing:
        raise ConfigError(f"kernel {doc['variant']} is missing field(s) {missing}")
    kw = {f: doc[f] for f in fields}
    if "basis" in doc and "basis" in cls.__dataclass_fields__:
        kw["basis"] = Basis.from_dict(doc["basis"])
    return cls(**kw)


def kernel_from_json(text):
    return kernel_from_dict(json.loads(text))


def kernel_to_json(spec):
    return json.dumps(spec.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# truncated generator and spectral checks


@dataclass(frozen=True)
class TruncatedGenerator:
    states: np.ndarray
    matrix: sparse.csr_matrix
    interior: np.ndarray
    max_move: int
    spec: object = None

    def index(self):
        return {tuple(x): k for k, x in enumerate(self.states.tolist())}


def build_ct_generator(spec, slab):
    """Sparse generator of ``spec`` restricted to ``slab``.

    Moves leaving the slab are dropped from the off-diagonal part but kept in
    the diagonal, so interior rows sum to zero and boundary rows leak.
    """
    rates = spec.affine_rates()
    states = slab.points()
    lookup = {tuple(x): k for k, x in enumerate(states.tolist())}
    R = rates.rates(states)
    rows, cols, vals = [], [], []
    for k, move in enumerate(rates.moves):
        dest = states + move
        for src, y in enumerate(dest.tolist()):
            r = R[src, k]
            if r == 0:
                continue
            tgt = lookup.get(tuple(y))
            if tgt is not None:
                rows.append(src)
                cols.append(tgt)
                vals.append(r)
    n = len(states)
    G = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    G = G - sparse.diags(R.sum(axis=1))
    max_move = int(np.abs(rates.moves).sum(axis=1).max())
    return TruncatedGenerator(states, G.tocsr(), slab.interior_mask(states), max_move, spec)


@dataclass
class SpectralRow:
    n: tuple
    lambda_theory: float
    lambda_measured: float
    residual: float
    residual_fit: float


@dataclass
class SpectralReport:
    rows: list = field(default_factory=list)

    @property
    def max_residual(self):
        return max(r.residual for r in self.rows)

    @property
    def max_fit_residual(self):
        return max(r.residual_fit for r in self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "lambda_theoretical", "lambda_measured", "residual", "residual_fit"])
            for r in self.rows:
                w.writerow(["-".join(map(str, r.n)), repr(r.lambda_theory), repr(r.lambda_measured), repr(r.residual), repr(r.residual_fit)])

    def to_dict(self):
        return {
            "max_residual": self.max_residual,
            "rows": [
                {
                    "n": list(r.n),
                    "lambda_theoretical": r.lambda_theory,
                    "lambda_measured": r.lambda_measured,
                    "residual": r.residual,
                    "residual_fit": r.residual_fit,
                }
                for r in self.rows
            ],
        }


def spectral_check(gen, sys, max_degree):
    """Residuals ``|(G P_n)(x) + lambda_n P_n(x)| / max(1, |P_n(x)|)`` over interior states."""
    if gen.max_move > 2:
        raise LancasterError("generator moves farther than one type change")
    idx = series.multi_indices(sys.d, max_degree)
    P = sys.evaluate_many(gen.states, idx)
    GP = gen.matrix @ P
    inner = gen.interior
    out = SpectralReport()
    for c, n in enumerate(idx):
        p_in, g_in = P[inner, c], GP[inner, c]
        lam = gen.spec.eigenvalue(n)
        denom = np.maximum(1.0, np.abs(p_in))
        fit = -float(p_in @ g_in / (p_in @ p_in)) if np.any(p_in) else 0.0
        out.rows.append(
            SpectralRow(
                tuple(n),
                lam,
                fit,
                float(np.max(np.abs(g_in + lam * p_in) / denom)),
                float(np.max(np.abs(g_in + fit * p_in) / denom)),
            )
        )
    return out


def lumping_check(gen):
    """Largest gap between the total-count rates of ``gen`` and the expected birth-death rates."""
    states = gen.states
    tot = states.sum(axis=1)
    G = gen.matrix.tocoo()
    up = np.zeros(len(states))
    down = np.zeros(len(states))
    rise = tot[G.col] == tot[G.row] + 1
    fall = tot[G.col] == tot[G.row] - 1
    np.add.at(up, G.row[rise], G.data[rise])
    np.add.at(down, G.row[fall], G.data[fall])
    worst = 0.0
    for k in range(len(states)):
        if not gen.interior[k]:
            continue
        birth, death = gen.spec.lumped_rates(int(tot[k]))
        worst = max(worst, abs(up[k] - birth), abs(down[k] - death))
    return worst


def generator_stationarity(gen):
    """``sum |pi^T G|`` over interior columns with ``pi`` the claimed stationary law."""
    pi = gen.spec.stationary().pmf(gen.states)
    flow = gen.matrix.T @ pi
    return float(np.abs(flow[gen.interior]).sum())


# ---------------------------------------------------------------------------
# discrete kernels on slabs


def kernel_matrix(kernel, slab):
    """One-step probabilities between the points of a box slab (rows leak beyond it)."""
    if slab.max_total is not None:
        raise LancasterError("kernel matrices need a box slab")
    pts = slab.points()
    return np.stack([kernel.step_law(x, slab.bounds).ravel() for x in pts]), pts


def kernel_stationarity(kernel, slab):
    K, pts = kernel_matrix(kernel, slab)
    pi = kernel.stationary().pmf(pts)
    return float(np.abs(pi @ K - pi).sum())


def detailed_balance(kernel, slab):
    K, pts = kernel_matrix(kernel, slab)
    pi = kernel.stationary().pmf(pts)
    F = pi[:, None] * K
    return float(np.abs(F - F.T).max())


@dataclass
class DiscreteSpectralRow:
    n: tuple
    rho: float
    residual: float
    leak: float = 0.0
    z: float = float("nan")


def discrete_spectral_check(kernel, sys, rho, max_degree, points, bounds=None, n_samples=None, rng=None):
    """Check ``E[P_n(Y) | X = x] = rho_n P_n(x)`` at each of ``points``.

    Lattice kernels enumerate the one-step law on ``bounds`` (which must leak
    negligible mass; the largest leak is reported) and give the residual
    ``max_x |E[P_n(Y)|x] - rho_n P_n(x)| / max(1, |P_n(x)|)``.  ``GaussAR``
    uses ``n_samples`` draws per point and reports the largest |z|.
    """
    idx = series.multi_indices(sys.d, max_degree)
    points = np.atleast_2d(np.asarray(points))
    Px = sys.evaluate_many(points, idx)
    rho_of = rho if callable(rho) else (lambda n: rho[n])
    if isinstance(kernel, GaussAR):
        if n_samples is None or rng is None:
            raise ConfigError("the Gaussian kernel is checked by Monte Carlo; pass n_samples and rng")
        means = np.empty((len(points), len(idx)))
        errs = np.empty_like(means)
        for k, x in enumerate(points):
            Y, _ = gauss_ar_step(kernel, x, rng, n_samples)
            Py = sys.evaluate_many(Y, idx)
            means[k] = Py.mean(axis=0)
            errs[k] = Py.std(axis=0, ddof=1) / np.sqrt(n_samples)
        rows = []
        for c, n in enumerate(idx):
            r = float(rho_of(n))
            gap = means[:, c] - r * Px[:, c]
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(errs[:, c] > 0, np.abs(gap) / errs[:, c], np.where(np.abs(gap) < 1e-12, 0.0, np.inf))
            rows.append(DiscreteSpectralRow(tuple(n), r, float(np.max(np.abs(gap) / np.maximum(1.0, np.abs(Px[:, c])))), 0.0, float(z.max())))
        return rows
    if bounds is None:
        raise ConfigError("lattice kernels need enumeration bounds")
    ys = _box_points(bounds)
    Py = sys.evaluate_many(ys, idx)
    laws = np.stack([kernel.step_law(x, bounds).ravel() for x in points])
    leak = float(np.max(1.0 - laws.sum(axis=1)))
    cond = laws @ Py
    rows = []
    for c, n in enumerate(idx):
        r = float(rho_of(n))
        resid = np.abs(cond[:, c] - r * Px[:, c]) / np.maximum(1.0, np.abs(Px[:, c]))
        rows.append(DiscreteSpectralRow(tuple(n), r, float(resid.max()), leak))
    return rows


def product_eigenvalues(factors, max_degree):
    """``rho_n = prod_j factors_j^{n_j}`` for a single atom."""
    factors = np.asarray(factors, dtype=float)
    return {n: float(np.prod(factors ** np.array(n))) for n in series.multi_indices(factors.size, max_degree)}


def k_step_eigenvalue(rho_n, k):
    return rho_n**k


def imbedded_eigenvalue(rho_n, rate, t):
    """Eigenvalue of the Poisson imbedding ``exp(-rate t (1 - rho_n))``."""
    return float(np.exp(-rate * t * (1.0 - rho_n)))


def gauss_ar_step(spec, x, rng, n_samples=1):
    """``n_samples`` draws of ``Y | X = x`` plus the conditional mgf evaluator."""
    X = np.repeat(np.atleast_2d(np.asarray(x, dtype=float)), n_samples, axis=0)
    return spec.sample(X, rng), (lambda phi: spec.mgf(x, phi))


def queue_step_distribution(spec, x, bounds):
    return spec.step_law(x, bounds), (lambda t: spec.pgf(x, t))


def nb_branch_step_distribution(spec, x, bounds):
    return spec.step_law(x, bounds), (lambda t: spec.pgf(x, t))
