"""Verification workflows: each returns named checks plus tables for CSV export.

A check passes when its residual is at most its tolerance.  The property
column says in words what identity the residual measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import hermite_e

from . import series
from .basis import HYPERGROUP_TOL, ORTHO_TOL, hypergroup_tensor
from .dists import MeixnerDist, Multinomial, PoissonProduct
from .errors import ConfigError
from .lancaster import (
    LancasterLaw,
    ambient,
    array_cross_moment,
    assemble_joint,
    branching_to_mixing,
    conditional_moments,
    contingency_joint,
    map_to_branching,
    meixner_feasibility,
    poisson_array_joint,
    rho_from_measure,
    structural_table,
    _omega_pair_law,
)
from .limits import verify_limits
from .markov import (
    CTMeixnerGen,
    CTPoissonGen,
    GaussAR,
    NBBranch,
    PoissonQueue,
    build_ct_generator,
    detailed_balance,
    discrete_spectral_check,
    generator_stationarity,
    kernel_stationarity,
    lumping_check,
    product_eigenvalues,
    spectral_check,
)
from .dists import LatticeSlab
from .polys import Hermite, Krawtchouk, Meixner, PoissonCharlier, krawtchouk_partition_sum


@dataclass
class Check:
    name: str
    property: str
    residual: float
    tol: float

    @property
    def passed(self):
        return bool(self.residual <= self.tol)

    def to_dict(self):
        return {
            "name": self.name,
            "property": self.property,
            "residual": float(self.residual),
            "tol": float(self.tol),
            "passed": self.passed,
        }


@dataclass
class Workflow:
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, prop, residual, tol):
        self.checks.append(Check(name, prop, float(residual), float(tol)))


def _label(n):
    return "-".join(map(str, n))


# ---------------------------------------------------------------------------
# basis


def basis_workflow(b, tol=ORTHO_TOL):
    wf = Workflow()
    wf.add("orthogonality", "sum_j u_j^k u_j^l p_j = delta_kl a_k", b.orthogonality_residual(), tol)
    wf.add("constant row", "u^(0) = 1", float(np.max(np.abs(b.u[0] - 1.0))), tol)
    wf.data["basis"] = b.to_dict()
    wf.tables["basis"] = (
        ["function", "a"] + [f"u_{i + 1}" for i in range(b.d)],
        [[r, repr(float(b.a[r]))] + [repr(float(v)) for v in b.u[r]] for r in range(b.d)],
    )
    return wf


def hypergroup_workflow(b, tol=HYPERGROUP_TOL):
    wf = Workflow()
    ht = hypergroup_tensor(b, tol)
    ident = np.einsum("j,k,jkl->l", b.p, b.p, ht.s)
    wf.add("weighted tensor sums", "sum_jk p_j p_k s(j,k,l) = 1 for every l", float(np.max(np.abs(ident - 1.0))), tol)
    wf.add("tensor nonnegativity", "min s(j,k,l) >= 0 (hypergroup property)", max(0.0, -ht.min_entry), tol)
    wf.data.update({"min_entry": ht.min_entry, "argmin": list(ht.argmin()), "feasible": ht.feasible})
    d = b.d
    wf.tables["tensor"] = (
        ["j", "k", "l", "s"],
        [[j, k, l, repr(float(ht.s[j, k, l]))] for j in range(d) for k in range(d) for l in range(d)],
    )
    return wf


# ---------------------------------------------------------------------------
# polynomial systems


def _quadrature_normal(tau, nodes):
    x, w = hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    d = len(tau)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1) * np.sqrt(tau)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wts *= g.ravel()
    return pts, wts


def enumeration_support(sys, max_degree, epsilon):
    """Points, weights and outside mass for exact moment sums under ``sys``'s law."""
    if isinstance(sys, Krawtchouk):
        pts = np.array(list(series.compositions(sys.N, sys.d)))
        return pts, Multinomial(sys.N, sys.basis.p).pmf(pts), 0.0
    if isinstance(sys, Hermite):
        # Gauss-Hermite with D + 1 nodes is exact for products of degree <= 2D
        pts, wts = _quadrature_normal(sys.tau, max_degree + 1)
        return pts, wts, 0.0
    dist = ambient(sys)
    slab = dist.slab(epsilon)
    pts = slab.points()
    return pts, dist.pmf(pts), slab.tail_mass_bound


def orthogonality_workflow(sys, max_degree, epsilon=1e-20, tol=1e-8):
    """Gram matrix ``E[P_m P_n]`` by exact enumeration against ``delta_mn ||P_n||^2``.

    Residuals are scaled by ``sqrt(||P_m||^2 ||P_n||^2)``.
    """
    if isinstance(sys, Krawtchouk):
        idx = series.multi_indices(sys.d - 1, min(max_degree, sys.N))
    else:
        idx = series.multi_indices(sys.d, max_degree)
    pts, wts, tail = enumeration_support(sys, max_degree, epsilon)
    P = sys.evaluate_many(pts, idx)
    G = (P * wts[:, None]).T @ P
    norms = np.array([sys.norm(n) for n in idx])
    R = np.abs(G - np.diag(norms)) / np.sqrt(np.outer(norms, norms))
    wf = Workflow()
    wf.add(f"{sys.family} orthogonality", "E[P_m P_n] = delta_mn ||P_n||^2 (scaled)", float(R.max()), tol)
    wf.data.update({"family": sys.family, "max_degree": max_degree, "tail_mass": tail, "support_size": len(pts)})
    rows = []
    for i, m in enumerate(idx):
        for j, n in enumerate(idx):
            rows.append([_label(m), _label(n), repr(float(G[i, j])), repr(float(norms[i]) if i == j else 0.0), repr(float(R[i, j]))])
    wf.tables["orthogonality"] = (["m", "n", "value", "target", "residual"], rows)
    return wf


def partition_sum_workflow(b, N, tol=1e-10):
    """Krawtchouk values from the partition-sum representation against coefficient extraction."""
    sys = Krawtchouk(b, N)
    pts = np.array(list(series.compositions(N, b.d)))
    idx = series.multi_indices(b.d - 1, N)
    P = sys.evaluate_many(pts, idx)
    worst = 0.0
    for r, x in enumerate(pts):
        for c, n in enumerate(idx):
            worst = max(worst, abs(krawtchouk_partition_sum(b, n, x) - P[r, c]) / max(1.0, abs(P[r, c])))
    wf = Workflow()
    wf.add(f"partition sum N={N}", "partition-sum Krawtchouk = generating-function coefficient", worst, tol)
    return wf


def generating_product_workflow(sys, radius=0.3, n_points=10, seed=0, epsilon=1e-20, tol=1e-8):
    """``E[G(X, z) G(X, w)] = exp(sum_j a_j z_j w_j / |mu|)`` for the Poisson-Charlier system."""
    if not isinstance(sys, PoissonCharlier):
        raise ConfigError("the generating-function product identity is implemented for Poisson-Charlier")
    pts, wts, tail = enumeration_support(sys, 0, epsilon)
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for _ in range(n_points):
        z = rng.uniform(-radius, radius, sys.d)
        w = rng.uniform(-radius, radius, sys.d)
        gz = np.array([sys.generating_function(x, z) for x in pts])
        gw = np.array([sys.generating_function(x, w) for x in pts])
        lhs = math.fsum(wts * gz * gw)
        rhs = math.exp(float(np.sum(sys.basis.a * z * w)) / sys.total)
        worst = max(worst, abs(lhs - rhs))
    wf = Workflow()
    wf.add("generating-function product", "E[G(X,z)G(X,w)] = exp(sum a_j z_j w_j / |mu|)", worst, tol)
    wf.data["tail_mass"] = tail
    return wf


def transform_workflow(sys, max_degree, n_points=20, seed=0, epsilon=1e-20, tol=1e-9):
    """Closed-form transforms against enumerated (or quadrature) sums at random dual points."""
    rng = np.random.Generator(np.random.Philox(seed))
    if isinstance(sys, Hermite):
        pts, wts = _quadrature_normal(sys.tau, 60)
        duals = rng.uniform(-1.0, 1.0, (n_points, sys.d))
        kern = lambda phi: np.exp(pts @ phi)  # noqa: E731
    else:
        pts, wts, _ = enumeration_support(sys, max_degree, epsilon)
        duals = rng.uniform(0.0, 1.0, (n_points, sys.d))
        kern = lambda s: np.prod(s ** pts, axis=1)  # noqa: E731
    if isinstance(sys, Krawtchouk):
        idx = series.multi_indices(sys.d - 1, min(max_degree, sys.N))
    else:
        idx = series.multi_indices(sys.d, max_degree)
    P = sys.evaluate_many(pts, idx)
    worst = 0.0
    for s in duals:
        direct = (wts * kern(s)) @ P
        closed = np.array([sys.transform(n, s) for n in idx])
        worst = max(worst, float(np.max(np.abs(direct - closed) / np.maximum(1.0, np.abs(closed)))))
    wf = Workflow()
    wf.add(f"{sys.family} transform", "closed-form transform = enumerated expectation", worst, tol)
    return wf


def limits_workflow(max_degree=3, d=2, mu=None, theta=0.5, schedule=None, tol=None):
    kw = {"max_degree": max_degree, "d": d, "mu": mu, "theta": theta}
    if schedule is not None:
        kw["schedule"] = tuple(schedule)
    if tol is not None:
        kw["thresholds"] = dict.fromkeys(
            ["krawtchouk->charlier", "charlier->hermite", "meixner->hermite", "meixner->charlier"], tol
        )
    rep = verify_limits(**kw)
    wf = Workflow()
    rows = []
    for r in rep.results:
        # a non-monotone sequence fails regardless of the final gap
        wf.add(r.name, "monotone decrease and final gap below threshold", r.final if r.monotone else math.inf, r.threshold)
        for t, g in zip(r.parameters, r.discrepancies):
            rows.append([r.name, repr(float(t)), repr(float(g))])
    wf.tables["limits"] = (["limit", "parameter", "discrepancy"], rows)
    wf.data["limits"] = rep.to_dict()["limits"]
    return wf


# ---------------------------------------------------------------------------
# Lancaster laws


def system_for(family, b, params):
    if family == "charlier":
        return PoissonCharlier(b, np.asarray(params["mu"], dtype=float))
    if family == "meixner":
        return Meixner(b, float(params["alpha"]), float(params["theta"]))
    if family == "hermite":
        return Hermite(b, np.asarray(params["tau"], dtype=float))
    if family == "krawtchouk":
        return Krawtchouk(b, int(params["N"]))
    raise ConfigError(f"unknown family {family!r}")


def lancaster_build_workflow(sys, m, D=8, epsilon=1e-12, tol=1e-8, structural_tol=1e-7):
    """Assemble a truncated joint law and check positivity, margins, symmetry and conditional moments.

    For the Poisson family the assembled table is also compared with the
    exact law of the latent Poisson structure.
    """
    if isinstance(sys, Hermite):
        raise ConfigError("the normal family has no lattice slab; use simulate for Gaussian laws")
    rho = rho_from_measure(sys.basis, m, sys.family, D)
    law = LancasterLaw(sys, rho, D)
    table = assemble_joint(law, epsilon=epsilon)
    dist = ambient(sys)
    f = dist.pmf(table.points)
    wf = Workflow()
    wf.add("nonnegativity", "min joint value >= 0 on slab^2", max(0.0, -table.min_value), tol)
    wf.add("margins", "row sums of the joint table = marginal pmf", float(np.max(np.abs(table.values.sum(axis=1) - f))), tol)
    wf.add("exchangeability", "joint(x, y) = joint(y, x)", float(np.max(np.abs(table.values - table.values.T))), 1e-15)
    idx = series.multi_indices(sys.d, min(D, 3), 1)
    # well-supported x only: truncation error is relative to f(x)
    interior = f >= 1e-3 * f.max()
    cm = conditional_moments(table, sys, idx)
    Px = sys.evaluate_many(table.points, idx)
    target = Px * np.array([rho[n] for n in idx])
    wf.add(
        "conditional moments",
        "E[P_n(Y)|X=x] = rho_n P_n(x) at interior x",
        float(np.max(np.abs(cm[interior] - target[interior]) / np.maximum(1.0, np.abs(target[interior])))),
        1e-7,
    )
    if sys.family == "charlier":
        slab = dist.slab(epsilon)
        exact = structural_table(sys.basis, m, sys.mu, slab)
        wf.add("structural law", "assembled law = exact latent-Poisson law", float(np.max(np.abs(exact - table.values))), structural_tol)
    wf.data.update(
        {
            "min_value": table.min_value,
            "argmin": [list(table.argmin[0]), list(table.argmin[1])],
            "mass": table.mass,
            "shell_residual": table.shell_residual,
            "rho": {_label(n): v for n, v in sorted(rho.values.items())},
        }
    )
    d = table.points.shape[1]
    rows = []
    for i, x in enumerate(table.points):
        for j, y in enumerate(table.points):
            rows.append(list(map(int, x)) + list(map(int, y)) + [repr(float(table.values[i, j]))])
    wf.tables["joint"] = ([f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["value"], rows)
    return wf


def feasibility_workflow(b, m, theta, tol=HYPERGROUP_TOL):
    rep = meixner_feasibility(b, m, theta, tol)
    wf = Workflow()
    wf.add("meixner feasibility", "p_ij(omega) >= kappa' p_i p_j for every atom", max(0.0, -rep.min_slack), tol)
    worst = 0.0
    for a in rep.atoms:
        if a.slack < -tol:
            continue
        xi_norm = float(a.xi.sum())
        p_cond = _omega_pair_law(b, a.xi) / b.p[:, None]
        bp = map_to_branching(theta, xi_norm, p_cond, b.p)
        if 0.0 < bp.kappa < 1.0 - bp.beta:
            th, xn, pc = branching_to_mixing(bp.beta, bp.kappa, bp.Q, b.p)
            worst = max(worst, abs(th - theta), abs(xn - xi_norm), float(np.max(np.abs(pc - p_cond))))
    wf.add("branching round trip", "inverse branching map recovers (theta, |xi|, p_cond)", worst, 1e-12)
    wf.data.update(rep.to_dict())
    wf.data["extra_condition_passed"] = rep.extra_passed
    wf.tables["feasibility"] = (
        ["atom", "xi", "slack", "extra_slack", "witness"],
        [[k, " ".join(repr(float(v)) for v in a.xi), repr(a.slack), repr(a.extra_slack), " ".join(map(str, a.witness))] for k, a in enumerate(rep.atoms)],
    )
    return wf


def contingency_workflow(N, cells, tol=1e-12):
    rep = contingency_joint(N, cells)
    wf = Workflow()
    wf.add("contingency expansion", "exact margin law = Krawtchouk expansion", rep.residual, tol)
    wf.add("canonical decomposition", "cell matrix rebuilt from (p_r, p_c, u, v, rho)", float(np.max(np.abs(rep.decomposition.reconstruct() - np.asarray(cells, dtype=float)))), 1e-12)
    wf.data.update({"rho": rep.decomposition.rho.tolist(), "row_basis": rep.decomposition.row.to_dict(), "col_basis": rep.decomposition.col.to_dict()})
    wf.tables["contingency"] = (
        ["x", "y", "probability"],
        [[_label(x), _label(y), repr(v)] for (x, y), v in sorted(rep.exact.items())],
    )
    return wf


def poisson_array_workflow(mu_cells, D=8, epsilon=1e-12, tol=1e-6, moment_tol=1e-9, moment_target=None):
    rep = poisson_array_joint(mu_cells, epsilon, D)
    wf = Workflow()
    wf.add("array expansion (total degree)", "exact margin law = truncated Poisson-Charlier expansion", rep.residual + rep.tail_bound, tol)
    wf.add(
        "array expansion (total count resummed)",
        "exact margin law = expansion with the total-count direction summed",
        rep.extra["resummed_residual"] + rep.tail_bound,
        tol,
    )
    r = rep.decomposition.row.d
    e1 = tuple(1 if k == 1 else 0 for k in range(r))
    moment = array_cross_moment(rep, e1)
    if moment_target is not None:
        wf.add("cross moment", "E[C_e1(X) C_e1(Y)] against the supplied value", abs(moment - moment_target), moment_tol)
    rho1 = float(rep.decomposition.rho[0]) if rep.decomposition.rho.size else 0.0
    implied = rho1 * PoissonCharlier(rep.decomposition.row, rep.extra["mu_x"]).norm(e1)
    wf.add("cross moment vs eigenvalue", "E[C_e1(X) C_e1(Y)] = rho_1 ||C_e1||^2", abs(moment - implied), moment_tol)
    wf.data.update(
        {
            "rho": rep.decomposition.rho.tolist(),
            "tail_bound": rep.tail_bound,
            "shell_residual": rep.shell_residual,
            "cross_moment_e1": moment,
            "residual": rep.residual,
            "resummed_residual": rep.extra["resummed_residual"],
            "D": D,
        }
    )
    xs, ys, law, exp_ = rep.exact["x"], rep.exact["y"], rep.exact["law"], rep.exact["expansion"]
    rows = [[_label(x), _label(y), repr(float(law[i, j])), repr(float(exp_[i, j]))] for i, x in enumerate(xs) for j, y in enumerate(ys)]
    wf.tables["poisson_array"] = (["x", "y", "exact", "expansion"], rows)
    return wf


# ---------------------------------------------------------------------------
# Markov kernels and generators


def spectral_workflow(spec, max_degree=4, bound=None, epsilon=1e-14, tol=1e-8, points=None):
    """Eigenfunction, stationarity and structural checks for one kernel or generator."""
    wf = Workflow()
    if isinstance(spec, (CTPoissonGen, CTMeixnerGen)):
        if isinstance(spec, CTPoissonGen):
            sys = PoissonCharlier(spec.basis, spec.mu)
            K = bound if bound is not None else 30
        else:
            sys = Meixner(spec.basis, spec.alpha, spec.theta)
            K = bound if bound is not None else 40
        gen = build_ct_generator(spec, LatticeSlab((K,) * spec.d, 0.0, K))
        rep = spectral_check(gen, sys, max_degree)
        if isinstance(spec, CTPoissonGen):
            wf.add("generator eigenfunctions", "(G P_n)(x) = -lambda_n P_n(x) at interior x", rep.max_residual, tol)
        else:
            wf.add("generator eigenfunctions (best-fit lambda)", "(G P_n)(x) = -lambda_n P_n(x), lambda_n fitted", rep.max_fit_residual, tol)
            wf.add("generator eigenvalues (conjectured formula)", "lambda_n = |n| nu + sum n_j theta_j(gamma)", rep.max_residual, tol)
        wf.add("generator stationarity", "pi^T G = 0 on interior columns", generator_stationarity(gen), tol)
        wf.add("lumped total count", "|X| is a birth-death chain with the stated rates", lumping_check(gen), 1e-12)
        wf.add("move distance", "every move has l1 length <= 2", max(0, gen.max_move - 2), 0)
        wf.data["spectral"] = rep.to_dict()
        wf.tables["spectral"] = (
            ["n", "lambda_theoretical", "lambda_measured", "residual", "residual_fit"],
            [[_label(r.n), repr(r.lambda_theory), repr(r.lambda_measured), repr(r.residual), repr(r.residual_fit)] for r in rep.rows],
        )
        return wf
    if isinstance(spec, GaussAR):
        raise ConfigError("the Gaussian kernel is checked by simulation; use the simulate subcommand")
    if isinstance(spec, PoissonQueue):
        sys = PoissonCharlier(spec.basis, spec.mu)
        rho = product_eigenvalues(spec.eigenvalues(), max_degree)
        dist = PoissonProduct(spec.mu)
        stat_bounds = dist.slab(1e-12).bounds
    elif isinstance(spec, NBBranch):
        sys = Meixner(_basis_for_branch(spec), spec.alpha, spec.theta)
        rho = product_eigenvalues(spec.eigenvalues(sys.basis), max_degree)
        dist = MeixnerDist(spec.alpha, spec.theta, spec.p)
        K = dist.slab(1e-12).max_total
        stat_bounds = (K,) * spec.d
    else:
        raise ConfigError(f"no spectral workflow for {type(spec).__name__}")
    pts = np.asarray(points) if points is not None else _default_points(spec.d)
    enum_bounds = bound if bound is not None else _enumeration_bound(spec, pts, epsilon)
    rows = discrete_spectral_check(spec, sys, rho, max_degree, pts, (enum_bounds,) * spec.d)
    leak = max(r.leak for r in rows)
    wf.add("kernel eigenfunctions", "E[P_n(Y)|X=x] = rho_n P_n(x) by enumeration", max(r.residual for r in rows), tol)
    wf.add("enumeration leak", "one-step mass outside the enumeration box", leak, epsilon * 10)
    wf.add("kernel stationarity", "||pi K - pi||_1 on the slab", kernel_stationarity(spec, LatticeSlab(tuple(stat_bounds), 0.0)), tol)
    small = LatticeSlab((min(8, stat_bounds[0]),) * spec.d, 0.0)
    wf.add("detailed balance", "pi(x) K(x,y) = pi(y) K(y,x)", detailed_balance(spec, small), 1e-10)
    wf.tables["spectral"] = (["n", "rho", "residual"], [[_label(r.n), repr(r.rho), repr(r.residual)] for r in rows])
    wf.data["rho"] = {_label(r.n): r.rho for r in rows}
    return wf


def _basis_for_branch(spec):
    from .basis import build_basis

    return build_basis(spec.p)


def _default_points(d):
    return np.array(list(np.ndindex(*((4,) * d))))


def _enumeration_bound(spec, pts, epsilon):
    """Smallest box edge whose one-step leak from every point is below ``epsilon``."""
    B = 8
    worst = max(pts.tolist(), key=sum)
    while True:
        leak = 1.0 - spec.step_law(worst, (B,) * spec.d).sum()
        if leak < epsilon or B > 400:
            return B
        B = int(B * 1.3) + 1
