"""Bivariate Lancaster laws built from mixing measures.

A mixing measure is a finite list of atoms ``xi``.  For the Poisson and
Meixner families ``xi`` lies in the unit simplex (a ``d``-vector with
``|xi| <= 1``) and the eigenvalue attached to ``u^(j)`` is
``rho_j(xi) = sum_i u_i^(j) xi_i``, so ``rho_0(xi) = |xi|``.  For the normal
family ``xi`` lies in the box ``[-1, 1]^d`` and ``rho_j(xi) = xi_j``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import series
from .basis import HYPERGROUP_TOL, Basis, build_basis, check_weights, hypergroup_tensor, pair_law
from .dists import MeixnerDist, NormalProduct, PoissonProduct, slab_for
from .errors import (
    DomainError,
    DomainMismatch,
    InfeasibleBasis,
    LancasterError,
    NegativeQ,
    NoLancasterForm,
)
from .polys import Krawtchouk, PoissonCharlier

SIMPLEX_FAMILIES = ("charlier", "meixner")
BOX_FAMILIES = ("hermite",)


# ---------------------------------------------------------------------------
# mixing measures and eigenvalue sequences


@dataclass(frozen=True)
class MixingMeasure:
    atoms: tuple
    domain: str = "simplex"

    def __post_init__(self):
        if self.domain not in ("simplex", "box"):
            raise LancasterError(f"unknown mixing domain {self.domain!r}")
        atoms = []
        for xi, w in self.atoms:
            xi = np.array(xi, dtype=float)
            xi.setflags(write=False)
            atoms.append((xi, float(w)))
        if not atoms:
            raise LancasterError("a mixing measure needs at least one atom")
        weights = np.array([w for _, w in atoms])
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise LancasterError("atom weights must be positive and sum to 1")
        if len({xi.size for xi, _ in atoms}) != 1:
            raise LancasterError("all atoms must have the same dimension")
        for xi, _ in atoms:
            if self.domain == "simplex":
                if np.any(xi < 0) or xi.sum() > 1.0 + 1e-12:
                    raise LancasterError(f"atom {xi.tolist()} is outside the unit simplex")
            elif np.any(np.abs(xi) > 1.0):
                raise LancasterError(f"atom {xi.tolist()} is outside [-1, 1]^d")
        object.__setattr__(self, "atoms", tuple(atoms))

    @classmethod
    def single(cls, xi, domain="simplex"):
        return cls(((xi, 1.0),), domain)

    @property
    def dim(self):
        return self.atoms[0][0].size

    def to_dict(self):
        return {
            "domain": self.domain,
            "atoms": [{"xi": xi.tolist(), "w": w} for xi, w in self.atoms],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        try:
            atoms = tuple((a["xi"], a["w"]) for a in doc["atoms"])
            return cls(atoms, doc.get("domain", "simplex"))
        except (KeyError, TypeError) as exc:
            raise LancasterError(f"malformed mixing measure: {exc}") from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RhoSequence:
    values: dict
    family: str

    def __getitem__(self, n):
        return self.values[tuple(int(k) for k in n)]

    @property
    def indices(self):
        return list(self.values)

    def max_abs(self, min_degree=1):
        vals = [abs(v) for n, v in self.values.items() if sum(n) >= min_degree]
        return max(vals, default=0.0)


def _check_domain(m, family):
    want = "box" if family in BOX_FAMILIES else "simplex"
    if family not in SIMPLEX_FAMILIES + BOX_FAMILIES:
        raise LancasterError(f"unknown family {family!r}")
    if m.domain != want:
        raise DomainMismatch(f"family {family!r} needs a {want} measure, got {m.domain!r}")


def rho_factors(b, xi, family):
    """Per-function eigenvalues ``rho_j(xi)``, ``j = 0..d-1``."""
    xi = np.asarray(xi, dtype=float)
    if xi.size != b.d:
        raise DomainMismatch(f"atom has {xi.size} entries, basis has {b.d} states")
    if family in BOX_FAMILIES:
        return xi.copy()
    return b.u @ xi


def rho_from_measure(b, m, family, max_degree):
    """``rho_n = E_xi[prod_j rho_j(xi)^{n_j}]`` for all ``|n| <= max_degree``."""
    _check_domain(m, family)
    idx = series.multi_indices(b.d, max_degree)
    powers = np.array(idx, dtype=float)
    vals = np.zeros(len(idx))
    for xi, w in m.atoms:
        r = rho_factors(b, xi, family)
        vals += w * np.prod(r[None, :] ** powers, axis=1)
    return RhoSequence({n: float(v) for n, v in zip(idx, vals)}, family)


def rho_from_function(b, family, max_degree, fn):
    """Eigenvalue sequence from an arbitrary function of the index (diagnostics)."""
    idx = series.multi_indices(b.d, max_degree)
    return RhoSequence({n: float(fn(n)) for n in idx}, family)


# ---------------------------------------------------------------------------
# assembled joint laws


def ambient(system):
    """Marginal distribution on which ``system`` is orthogonal."""
    if system.family == "charlier":
        return PoissonProduct(system.mu)
    if system.family == "meixner":
        return MeixnerDist(system.alpha, system.theta, system.basis.p)
    if system.family == "hermite":
        return NormalProduct(system.tau)
    raise LancasterError(f"no ambient law for family {system.family!r}")


@dataclass(eq=False)
class LancasterLaw:
    system: object
    rho: RhoSequence
    D: int = 8

    def __post_init__(self):
        if self.rho.family != self.system.family:
            raise DomainMismatch("eigenvalue sequence and polynomial system disagree on family")

    @property
    def family(self):
        return self.system.family


@dataclass(frozen=True)
class JointTable:
    """Joint values on ``points x points`` plus diagnostics."""

    points: np.ndarray
    values: np.ndarray
    min_value: float
    argmin: tuple
    mass: float
    shell_residual: float

    def to_csv(self, path):
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["value"])
            for i, x in enumerate(self.points):
                for j, y in enumerate(self.points):
                    w.writerow(list(map(int, x)) + list(map(int, y)) + [repr(float(self.values[i, j]))])


def _expansion_terms(law, points):
    sys = law.system
    idx = series.multi_indices(sys.d, law.D, 1)
    P = sys.evaluate_many(points, idx)
    w = np.array([law.rho[n] / sys.norm(n) for n in idx])
    deg = np.array([sum(n) for n in idx])
    return P, w, deg


def assemble_joint(law, points=None, epsilon=1e-12):
    """``f(x) f(y) {1 + sum_{1<=|n|<=D} rho_n h_n P_n(x) P_n(y)}`` on ``points^2``.

    ``points`` defaults to the certified slab of the marginal law.  The shell
    residual is the largest contribution of the degree-``D`` shell alone and
    serves as a truncation estimate.
    """
    dist = ambient(law.system)
    if points is None:
        points = slab_for(dist, epsilon).points()
    points = np.asarray(points)
    f = dist.pmf(points)
    P, w, deg = _expansion_terms(law, points)
    core = 1.0 + (P * w) @ P.T
    outer = np.outer(f, f)
    values = outer * core
    shell = deg == law.D
    shell_part = outer * ((P[:, shell] * w[shell]) @ P[:, shell].T)
    k = int(np.argmin(values))
    i, j = divmod(k, values.shape[1])
    return JointTable(
        points,
        values,
        float(values[i, j]),
        (tuple(points[i].tolist()), tuple(points[j].tolist())),
        math.fsum(values.ravel()),
        float(np.max(np.abs(shell_part))) if shell.any() else 0.0,
    )


def conditional_moments(table, system, indices):
    """``E[P_n(Y) | X = x]`` from an assembled table, for every slab point ``x``."""
    P = system.evaluate_many(table.points, indices)
    rows = table.values.sum(axis=1)
    return (table.values @ P) / rows[:, None]


# ---------------------------------------------------------------------------
# exact Poisson superpositions


def poisson_superposition(shape, components):
    """Exact law, truncated to a box, of ``sum_c N_c v_c`` with independent ``N_c ~ Poisson(m_c)``.

    ``components`` is a list of ``(mean, axes)``; ``v_c`` has a one in each of
    ``axes``.  Every component only moves mass upward, so the returned
    probabilities are exact at every point of the box.
    """
    law = np.zeros(shape)
    law[(0,) * len(shape)] = 1.0
    for mean, axes in components:
        if mean < 0:
            raise LancasterError("Poisson component with negative mean")
        if mean == 0:
            continue
        kmax = min(shape[a] for a in axes) - 1
        pk = stats.poisson.pmf(np.arange(kmax + 1), mean)
        new = pk[0] * law
        for k in range(1, kmax + 1):
            dst = [slice(None)] * len(shape)
            src = [slice(None)] * len(shape)
            for a in axes:
                dst[a] = slice(k, None)
                src[a] = slice(None, shape[a] - k)
            new[tuple(dst)] += pk[k] * law[tuple(src)]
        law = new
    return law


@dataclass(frozen=True)
class StructuralParams:
    """Conditional Poisson means of ``Z``, ``Z'`` and the array ``(Z_jk)`` at one atom."""

    xi: np.ndarray
    weight: float
    z_mean: np.ndarray
    zprime_mean: np.ndarray
    array_mean: np.ndarray


def poisson_structural_sampler_params(b, m, mu, tol=HYPERGROUP_TOL):
    """Means of the latent Poisson variables with ``X_j = Z_j + sum_k Z_jk``, ``Y_k = Z'_k + sum_j Z_jk``."""
    _check_domain(m, "charlier")
    mu = np.asarray(mu, dtype=float)
    if not np.allclose(b.p, mu / mu.sum(), rtol=0, atol=1e-12):
        raise LancasterError("basis weights must equal mu / |mu|")
    s = hypergroup_tensor(b, tol).s
    total = mu.sum()
    out = []
    for xi, w in m.atoms:
        arr = total * np.outer(b.p, b.p) * np.einsum("jkl,l->jk", s, xi)
        if arr.min() < -tol:
            loc = np.unravel_index(np.argmin(arr), arr.shape)
            raise InfeasibleBasis(
                f"array mean at cell {tuple(int(i) + 1 for i in loc)} is negative ({arr.min()!r})"
            )
        arr = np.maximum(arr, 0.0)
        z = (1.0 - xi.sum()) * mu
        out.append(StructuralParams(xi, w, z, z.copy(), arr))
    return out


def structural_poisson_law(b, m, mu, bounds):
    """Exact law of ``(X, Y)`` on the box ``prod [0, bounds]^2`` from the latent Poisson structure.

    Axes ``0..d-1`` are ``X`` and ``d..2d-1`` are ``Y``.
    """
    d = b.d
    shape = tuple(int(v) + 1 for v in bounds) * 2
    law = np.zeros(shape)
    for par in poisson_structural_sampler_params(b, m, mu):
        comps = [(par.z_mean[j], (j,)) for j in range(d)]
        comps += [(par.zprime_mean[k], (d + k,)) for k in range(d)]
        comps += [(par.array_mean[j, k], (j, d + k)) for j in range(d) for k in range(d)]
        law += par.weight * poisson_superposition(shape, comps)
    return law


def structural_table(b, m, mu, slab):
    """Structural law as a ``points x points`` matrix aligned with ``slab.points()``."""
    if slab.max_total is not None:
        raise LancasterError("structural tables need a box slab")
    law = structural_poisson_law(b, m, mu, slab.bounds)
    size = int(np.prod([v + 1 for v in slab.bounds]))
    return law.reshape(size, size)


# ---------------------------------------------------------------------------
# Meixner feasibility and the branching parametrisation


@dataclass(frozen=True)
class AtomFeasibility:
    xi: np.ndarray
    slack: float
    extra_slack: float
    witness: tuple


@dataclass(frozen=True)
class MeixnerFeasibility:
    atoms: tuple
    passed: bool
    extra_passed: bool

    @property
    def min_slack(self):
        return min(a.slack for a in self.atoms)

    def to_dict(self):
        return {
            "passed": self.passed,
            "extra_passed": self.extra_passed,
            "atoms": [
                {
                    "xi": a.xi.tolist(),
                    "slack": a.slack,
                    "extra_slack": a.extra_slack,
                    "witness": list(a.witness),
                }
                for a in self.atoms
            ],
        }


def _omega_pair_law(b, xi):
    """``p_ij(omega)`` with ``omega = xi / |xi|``; the zero atom maps to independence."""
    norm = float(np.sum(xi))
    if norm == 0.0:
        return np.outer(b.p, b.p)
    return pair_law(b, np.asarray(xi) / norm)


def meixner_feasibility(b, m, theta, tol=HYPERGROUP_TOL):
    """Check ``p_ij(omega) >= theta (1-|xi|) / (1 + theta (1-|xi|)) p_i p_j`` atom by atom.

    Also reports the stronger bound with ``theta / (1 + theta)`` on the right.
    For a random ``xi`` passing is sufficient only.
    """
    _check_domain(m, "meixner")
    if theta <= 0:
        raise LancasterError("theta must be positive")
    pp = np.outer(b.p, b.p)
    reports = []
    for xi, _ in m.atoms:
        rest = 1.0 - float(xi.sum())
        kappa = theta * rest / (1.0 + theta * rest)
        pij = _omega_pair_law(b, xi)
        gap = pij - kappa * pp
        extra = pij - theta / (1.0 + theta) * pp
        k = np.unravel_index(np.argmin(gap), gap.shape)
        reports.append(
            AtomFeasibility(xi, float(gap.min()), float(extra.min()), tuple(int(i) for i in k))
        )
    return MeixnerFeasibility(
        tuple(reports),
        all(r.slack >= -tol for r in reports),
        all(r.extra_slack >= -tol for r in reports),
    )


@dataclass(frozen=True)
class BranchingParams:
    beta: float
    kappa: float
    Q: np.ndarray


def stationary_of(p_cond):
    """Stationary distribution of a row-stochastic matrix."""
    p_cond = np.asarray(p_cond, dtype=float)
    vals, vecs = np.linalg.eig(p_cond.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def map_to_branching(theta, xi_norm, p_cond, p=None, tol=HYPERGROUP_TOL):
    """``(beta, kappa, Q)`` for the negative binomial branching kernel."""
    p_cond = np.asarray(p_cond, dtype=float)
    p = stationary_of(p_cond) if p is None else np.asarray(p, dtype=float)
    if not 0.0 <= xi_norm <= 1.0 or theta <= 0:
        raise DomainError("need theta > 0 and 0 <= |xi| <= 1")
    den = 1.0 + theta * (1.0 - xi_norm)
    beta = xi_norm / den
    kappa = theta * (1.0 - xi_norm) / den
    Q = (p_cond - kappa * p[None, :]) / (1.0 - kappa)
    if Q.min() < -tol:
        i, j = np.unravel_index(np.argmin(Q), Q.shape)
        raise NegativeQ(f"q[{j + 1}|{i + 1}] = {Q.min()!r} < 0; the feasibility condition fails")
    return BranchingParams(float(beta), float(kappa), Q)


def branching_to_mixing(beta, kappa, Q, p):
    """Inverse map: ``(theta, |xi|, p_{j|i}(omega))`` from ``(beta, kappa, Q)``."""
    Q = np.asarray(Q, dtype=float)
    p = np.asarray(p, dtype=float)
    if not (0.0 <= beta <= 1.0 and 0.0 < kappa < 1.0 - beta):
        raise DomainError("need 0 <= beta <= 1 and 0 < kappa < 1 - beta")
    theta = kappa / (1.0 - beta - kappa)
    xi_norm = beta / (1.0 - kappa)
    p_cond = (1.0 - kappa) * Q + kappa * p[None, :]
    return float(theta), float(xi_norm), p_cond


# ---------------------------------------------------------------------------
# finite constructions: contingency tables and Poisson arrays


@dataclass(frozen=True)
class CanonicalDecomposition:
    """``p_ij = p^r_i p^c_j {1 + sum_k rho_k u_i^(k) v_j^(k)}`` with orthonormal ``u``, ``v``."""

    row: Basis
    col: Basis
    rho: np.ndarray

    def reconstruct(self):
        core = 1.0 + np.einsum("k,ki,kj->ij", self.rho, self.row.u[1:], self.col.u[1 : self.row.d])
        return np.outer(self.row.p, self.col.p) * core


def _orthonormal_complement(p):
    """Columns: orthonormal basis of the complement of ``sqrt(p)`` in ``R^d``."""
    q = np.sqrt(p)[:, None]
    full, _ = np.linalg.qr(np.hstack([q, np.eye(p.size)]))
    comp = full[:, 1 : p.size]
    # re-orthogonalise against sqrt(p) so the constant function is exact
    comp -= q @ (q.T @ comp)
    return np.linalg.qr(comp)[0]


def canonical_decomposition(cell_probs, row_basis=None, col_basis=None, rho=None, tol=1e-10):
    """Canonical correlations of a cell-probability matrix (rows ``<=`` columns).

    Without user bases this is the weighted singular value decomposition of
    ``(p_ij - p_i p_j) / sqrt(p_i p_j)``; the column basis is completed to all
    ``c`` functions.  Supplied ``(row_basis, col_basis, rho)`` are checked.
    """
    P = np.asarray(cell_probs, dtype=float)
    if P.ndim != 2 or np.any(P < 0) or abs(P.sum() - 1.0) > 1e-12:
        raise LancasterError("cell probabilities must form a non-negative matrix summing to 1")
    r, c = P.shape
    if r > c:
        raise LancasterError("transpose the table so rows <= columns")
    pr = check_weights(P.sum(axis=1))
    pc = check_weights(P.sum(axis=0))
    if row_basis is not None:
        dec = CanonicalDecomposition(row_basis, col_basis, np.asarray(rho, dtype=float))
        if np.max(np.abs(dec.reconstruct() - P)) > tol:
            raise NoLancasterForm("the supplied bases and correlations do not reproduce the cells")
        return dec
    A = (P - np.outer(pr, pc)) / np.sqrt(np.outer(pr, pc))
    Qr = _orthonormal_complement(pr)
    Qc = _orthonormal_complement(pc)
    U, sv, Vt = np.linalg.svd(Qr.T @ A @ Qc, full_matrices=True)
    left = (Qr @ U).T / np.sqrt(pr)
    right = (Qc @ Vt.T).T / np.sqrt(pc)
    u = np.vstack([np.ones(r), left])
    v = np.vstack([np.ones(c), right])
    dec = CanonicalDecomposition(Basis(pr, u, np.ones(r)), Basis(pc, v, np.ones(c)), sv[: r - 1])
    if np.max(np.abs(dec.reconstruct() - P)) > tol:
        raise NoLancasterForm("weighted SVD failed to reproduce the cell matrix")
    return dec


@dataclass(frozen=True)
class FiniteLawReport:
    decomposition: CanonicalDecomposition
    exact: dict
    residual: float
    tail_bound: float = 0.0
    shell_residual: float = 0.0
    extra: dict = field(default_factory=dict)


def contingency_exact_law(N, cell_probs):
    """Exact law of (row margins, column margins) by enumerating every table with ``N`` counts."""
    P = np.asarray(cell_probs, dtype=float)
    r, c = P.shape
    flat = P.ravel()
    law = {}
    for cells in series.compositions(N, r * c):
        tab = np.array(cells).reshape(r, c)
        prob = series.multinomial(N, cells[:-1]) * float(np.prod(flat ** np.array(cells)))
        key = (tuple(tab.sum(axis=1).tolist()), tuple(tab.sum(axis=0).tolist()))
        law[key] = law.get(key, 0.0) + prob
    return law


def contingency_joint(N, cell_probs, **basis_kw):
    """Exact joint law of the margins of an ``N``-observation table against its Krawtchouk expansion."""
    P = np.asarray(cell_probs, dtype=float)
    r, c = P.shape
    if N > 8 or r * c > 9:
        raise LancasterError("contingency enumeration is limited to N <= 8 and r*c <= 9")
    dec = canonical_decomposition(P, **basis_kw)
    exact = contingency_exact_law(N, P)
    kr = Krawtchouk(dec.row, N)
    kc = Krawtchouk(dec.col, N)
    xs = list(series.compositions(N, r))
    ys = list(series.compositions(N, c))
    idx = series.multi_indices(r - 1, N, 1)
    Qx = kr.evaluate_many(xs, idx)
    Qy = kc.evaluate_many(ys, [n + (0,) * (c - r) for n in idx])
    w = np.array([np.prod(dec.rho ** np.array(n)) / series.multinomial(N, n) for n in idx])
    mx = np.array([series.multinomial(N, x[:-1]) * np.prod(dec.row.p ** np.array(x)) for x in xs])
    my = np.array([series.multinomial(N, y[:-1]) * np.prod(dec.col.p ** np.array(y)) for y in ys])
    expansion = np.outer(mx, my) * (1.0 + (Qx * w) @ Qy.T)
    resid = 0.0
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            resid = max(resid, abs(expansion[i, j] - exact.get((tuple(x), tuple(y)), 0.0)))
    return FiniteLawReport(dec, exact, float(resid))


def poisson_array_exact_law(mu_cells, row_bounds, col_bounds):
    """Exact law of (row sums, column sums) of independent Poisson cells on a box."""
    M = np.asarray(mu_cells, dtype=float)
    r, c = M.shape
    shape = tuple(int(v) + 1 for v in row_bounds) + tuple(int(v) + 1 for v in col_bounds)
    comps = [(M[i, j], (i, r + j)) for i in range(r) for j in range(c)]
    return poisson_superposition(shape, comps)


def poisson_array_joint(mu_cells, epsilon=1e-12, D=8, **basis_kw):
    """Compare the exact margin law of a Poisson array with its Poisson-Charlier expansion.

    The expansion eigenvalue for ``n = (n_0, n_1)`` is ``prod_k rho_k^{n_k}``
    (no factor in ``n_0`` since ``|X| = |Y|``); terms with ``1 <= |n| <= D``
    are kept.  The residual is the maximum over the product of the two
    certified margin slabs.
    """
    M = np.asarray(mu_cells, dtype=float)
    if np.any(M < 0):
        raise LancasterError("cell means must be non-negative")
    r, c = M.shape
    total = M.sum()
    dec = canonical_decomposition(M / total, **basis_kw)
    mux, muy = M.sum(axis=1), M.sum(axis=0)
    sx = PoissonProduct(mux).slab(epsilon / 2)
    sy = PoissonProduct(muy).slab(epsilon / 2)
    law = poisson_array_exact_law(M, sx.bounds, sy.bounds)
    xs, ys = sx.points(), sy.points()
    exact = law.reshape(len(xs), len(ys))
    cx = PoissonCharlier(dec.row, mux)
    cy = PoissonCharlier(dec.col, muy)
    idx = series.multi_indices(r, D, 1)
    Px = cx.evaluate_many(xs, idx)
    Py = cy.evaluate_many(ys, [n + (0,) * (c - r) for n in idx])
    # squared norms with a = 1 are |mu|^{-|n|} / prod n_j!
    w = np.array(
        [
            np.prod(dec.rho ** np.array(n[1:])) * total ** sum(n) * math.prod(map(math.factorial, n))
            for n in idx
        ]
    )
    deg = np.array([sum(n) for n in idx])
    fx = PoissonProduct(mux).pmf(xs)
    fy = PoissonProduct(muy).pmf(ys)
    outer = np.outer(fx, fy)
    expansion = outer * (1.0 + (Px * w) @ Py.T)
    shell = deg == D
    shell_part = outer * ((Px[:, shell] * w[shell]) @ Py[:, shell].T)
    resid = float(np.max(np.abs(expansion - exact)))
    resummed = _array_resummed(dec, total, xs, ys, D)
    return FiniteLawReport(
        dec,
        {"x": xs, "y": ys, "law": exact, "expansion": expansion},
        resid,
        sx.tail_mass_bound + sy.tail_mass_bound,
        float(np.max(np.abs(shell_part))),
        {
            "mu_x": mux,
            "mu_y": muy,
            "resummed_residual": float(np.max(np.abs(resummed - exact))),
        },
    )


def _array_resummed(dec, total, xs, ys, D):
    """Expansion with the total-count direction summed exactly.

    Summing over ``n_0`` collapses to ``1{|x| = |y| = N}`` times the
    contingency expansion for ``N`` observations, weighted by
    ``Poisson(N; |mu|)``; only the Krawtchouk degree is truncated at ``D``.
    """
    r, c = dec.row.d, dec.col.d
    out = np.zeros((len(xs), len(ys)))
    sx, sy = xs.sum(axis=1), ys.sum(axis=1)
    for N in np.intersect1d(sx, sy):
        N = int(N)
        ix, iy = np.nonzero(sx == N)[0], np.nonzero(sy == N)[0]
        mx = np.array([series.multinomial(N, x[:-1]) * np.prod(dec.row.p ** x) for x in xs[ix]])
        my = np.array([series.multinomial(N, y[:-1]) * np.prod(dec.col.p ** y) for y in ys[iy]])
        core = np.ones((len(ix), len(iy)))
        idx = series.multi_indices(r - 1, min(N, D), 1)
        if idx:
            Qx = Krawtchouk(dec.row, N).evaluate_many(xs[ix], idx)
            Qy = Krawtchouk(dec.col, N).evaluate_many(ys[iy], [n + (0,) * (c - r) for n in idx])
            w = np.array([np.prod(dec.rho ** np.array(n)) / series.multinomial(N, n) for n in idx])
            core += (Qx * w) @ Qy.T
        out[np.ix_(ix, iy)] = stats.poisson.pmf(N, total) * np.outer(mx, my) * core
    return out


def array_cross_moment(report, n, m=None):
    """``E[C_n(X) C_m(Y)]`` under the exact (slab-enumerated) array law."""
    dec = report.decomposition
    xs, ys, law = report.exact["x"], report.exact["y"], report.exact["law"]
    m = n if m is None else m
    cx = PoissonCharlier(dec.row, report.extra["mu_x"])
    cy = PoissonCharlier(dec.col, report.extra["mu_y"])
    a = cx.evaluate_many(xs, [tuple(n)])[:, 0]
    bvals = cy.evaluate_many(ys, [tuple(m) + (0,) * (dec.col.d - len(m))])[:, 0]
    return float(a @ law @ bvals)


# ---------------------------------------------------------------------------
# normal family


def normal_cross_covariance(b, tau, xi):
    """``V_ij = |tau| p_i p_j sum_l xi_l u_i^(l) u_j^(l) / a_l``."""
    tau = np.asarray(tau, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.size != b.d or np.any(np.abs(xi) > 1.0):
        raise DomainError("xi must be a d-vector in [-1, 1]^d")
    if not np.allclose(b.p, tau / tau.sum(), rtol=0, atol=1e-12):
        raise LancasterError("basis weights must equal tau / |tau|")
    core = np.einsum("l,li,lj->ij", xi / b.a, b.u, b.u)
    return tau.sum() * np.outer(b.p, b.p) * core


def block_covariance(tau, V):
    T = np.diag(np.asarray(tau, dtype=float))
    return np.block([[T, V], [V.T, T]])


def hat_correlations(b, tau, V):
    """Correlations of ``(X_hat_r, Y_hat_r)`` for each basis function."""
    var = np.asarray(tau, dtype=float).sum() * b.a
    return np.diag(b.u @ V @ b.u.T) / var


def is_psd(M, tol=1e-10):
    return bool(np.linalg.eigvalsh((M + M.T) / 2).min() >= -tol * max(1.0, np.abs(M).max()))


def default_basis_for(means):
    return build_basis(np.asarray(means, dtype=float) / np.sum(means))

