import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvlancaster.basis import build_basis, hypergroup_tensor
from mvlancaster.dists import PoissonProduct
from mvlancaster.errors import DomainMismatch, InfeasibleBasis, LancasterError, NegativeQ
from mvlancaster.lancaster import (
    LancasterLaw,
    MixingMeasure,
    array_cross_moment,
    assemble_joint,
    block_covariance,
    canonical_decomposition,
    contingency_joint,
    hat_correlations,
    is_psd,
    map_to_branching,
    meixner_feasibility,
    normal_cross_covariance,
    poisson_array_joint,
    poisson_structural_sampler_params,
    rho_from_function,
    rho_from_measure,
    structural_table,
)
from mvlancaster.polys import Meixner, PoissonCharlier
from mvlancaster.verify import feasibility_workflow, lancaster_build_workflow


def poisson_sys(mu=(1.0, 1.0)):
    return PoissonCharlier.from_means(list(mu))


# ---------------------------------------------------------------------------
# mixing measures and eigenvalues


def test_rho_vertex_is_identity():
    b = build_basis([0.3, 0.7])
    rho = rho_from_measure(b, MixingMeasure.single([0.0, 1.0]), "charlier", 5)
    assert all(v == pytest.approx(1.0) for v in rho.values.values())


def test_rho_zero_atom_is_independence():
    b = build_basis([0.3, 0.7])
    rho = rho_from_measure(b, MixingMeasure.single([0.0, 0.0]), "charlier", 5)
    for n, v in rho.values.items():
        assert v == (1.0 if sum(n) == 0 else 0.0)


def test_rho_two_atom_mixture():
    b = build_basis([0.3, 0.7])
    m = MixingMeasure((([0.0, 1.0], 0.3), ([0.0, 0.0], 0.7)))
    rho = rho_from_measure(b, m, "charlier", 4)
    for n, v in rho.values.items():
        assert v == pytest.approx(1.0 if sum(n) == 0 else 0.3)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10**6))
def test_rho_bounded_for_feasible_bases(d, seed):
    rng = np.random.default_rng(seed)
    # d=2 is always hypergroup-feasible; the seeded chain in higher d with a heavy last state too
    p = rng.dirichlet(np.ones(d))
    b = build_basis(p)
    if not hypergroup_tensor(b).feasible:
        return
    xi = rng.dirichlet(np.ones(d + 1))[:d]
    rho = rho_from_measure(b, MixingMeasure.single(xi), "charlier", 4)
    assert rho[(0,) * d] == 1.0
    assert rho.max_abs() <= 1 + 1e-12


def test_domain_mismatch():
    b = build_basis([0.5, 0.5])
    with pytest.raises(DomainMismatch):
        rho_from_measure(b, MixingMeasure.single([0.2, 0.2], "box"), "charlier", 2)
    with pytest.raises(DomainMismatch):
        rho_from_measure(b, MixingMeasure.single([0.2, 0.2]), "hermite", 2)


def test_measure_validation_and_json():
    with pytest.raises(LancasterError):
        MixingMeasure((([0.1, 0.2], 0.5),))
    with pytest.raises(LancasterError):
        MixingMeasure.single([0.7, 0.7])
    m = MixingMeasure((([0.1, 0.2], 0.25), ([0.0, 1.0], 0.75)))
    doc = json.loads(m.to_json())
    assert doc["domain"] == "simplex"
    assert doc["atoms"][0] == {"xi": [0.1, 0.2], "w": 0.25}
    again = MixingMeasure.from_json(m.to_json())
    assert again.to_json() == m.to_json()


# ---------------------------------------------------------------------------
# assembled joint laws


def test_zero_rho_gives_product_law():
    sys = poisson_sys()
    rho = rho_from_function(sys.basis, "charlier", 4, lambda n: 1.0 if sum(n) == 0 else 0.0)
    table = assemble_joint(LancasterLaw(sys, rho, 4))
    f = PoissonProduct(sys.mu).pmf(table.points)
    assert np.allclose(table.values, np.outer(f, f), atol=0)
    assert table.min_value >= 0
    assert table.mass == pytest.approx(f.sum() ** 2)


def test_diagonal_atom_approaches_identity_law():
    sys = poisson_sys()
    m = MixingMeasure.single([0.0, 1.0])
    pts = np.array(list(np.ndindex(4, 4)))
    f = PoissonProduct(sys.mu).pmf(pts)
    off = []
    for D in (2, 4, 6):
        law = LancasterLaw(sys, rho_from_measure(sys.basis, m, "charlier", D), D)
        table = assemble_joint(law, pts)
        off.append(float(np.max(np.abs(table.values - np.diag(f)))))
    assert off[0] > off[1] > off[2]


def test_infeasible_rho_has_negativity_witness():
    sys = poisson_sys()
    rho = rho_from_function(sys.basis, "charlier", 6, lambda n: (-1.0) ** sum(n))
    table = assemble_joint(LancasterLaw(sys, rho, 6))
    assert table.min_value < 0
    x, y = table.argmin
    i = [tuple(p) for p in table.points.tolist()].index(x)
    j = [tuple(p) for p in table.points.tolist()].index(y)
    assert table.values[i, j] == table.min_value


def test_single_atom_build_matches_structural_law():
    sys = poisson_sys()
    wf = lancaster_build_workflow(sys, MixingMeasure.single([0.0, 0.5]), D=12)
    assert wf.passed, [(c.name, c.residual) for c in wf.checks]


def test_assembled_pgf_matches_closed_form():
    # single atom: E[s^X t^Y] = exp(sum mu_i (s_i - 1) + mu_i (t_i - 1) + |mu| sum_j rho_j S_j T_j / a_j)
    sys = poisson_sys((1.0, 1.0))
    b = sys.basis
    xi = np.array([0.2, 0.5])
    m = MixingMeasure.single(xi)
    rho_j = b.u @ xi
    pts = PoissonProduct(sys.mu).slab(1e-14).points()
    s, t = np.array([0.4, 0.8]), np.array([0.7, 0.3])
    S = b.u @ (b.p * (s - 1))
    T = b.u @ (b.p * (t - 1))
    tot = sys.total
    closed = np.exp(tot * S[0] + tot * T[0] + tot * np.sum(rho_j * S * T / b.a))
    errs = []
    for D in (4, 8, 12):
        table = assemble_joint(LancasterLaw(sys, rho_from_measure(b, m, "charlier", D), D), pts)
        ps = np.prod(s**pts, axis=1)
        pt = np.prod(t**pts, axis=1)
        errs.append(abs(ps @ table.values @ pt - closed))
    assert errs[-1] < 1e-8
    assert errs[0] > errs[-1]


def test_structural_params_examples():
    b = build_basis([0.5, 0.5])
    mu = np.array([1.0, 1.0])
    (zero,) = poisson_structural_sampler_params(b, MixingMeasure.single([0.0, 0.0]), mu)
    assert np.all(zero.array_mean == 0)
    assert np.allclose(zero.z_mean, mu)
    (full,) = poisson_structural_sampler_params(b, MixingMeasure.single([0.3, 0.7]), mu)
    assert np.allclose(full.z_mean, 0)
    (half,) = poisson_structural_sampler_params(b, MixingMeasure.single([0.0, 0.5]), mu)
    # s(.,.,2) = [[2,0],[0,2]], |mu| p_j p_k = 1/2
    assert np.allclose(half.array_mean, [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)
    assert np.allclose(half.z_mean + half.array_mean.sum(axis=1), mu, atol=1e-12)


def test_structural_params_infeasible_basis():
    b = build_basis(np.full(3, 1 / 3))
    l = hypergroup_tensor(b).argmin()[2]
    with pytest.raises(InfeasibleBasis):
        poisson_structural_sampler_params(b, MixingMeasure.single(np.eye(3)[l]), [1.0, 1.0, 1.0])


def test_structural_law_margins():
    sys = poisson_sys((1.0, 2.0))
    slab = PoissonProduct(sys.mu).slab(1e-12)
    T = structural_table(sys.basis, MixingMeasure.single([0.2, 0.6]), sys.mu, slab)
    f = PoissonProduct(sys.mu).pmf(slab.points())
    assert np.allclose(T.sum(axis=1), f, atol=1e-11)
    assert np.allclose(T.sum(axis=0), f, atol=1e-11)


# ---------------------------------------------------------------------------
# Meixner feasibility and the branching map


def test_feasibility_vertex_atoms_pass():
    b = build_basis([0.3, 0.7])
    assert meixner_feasibility(b, MixingMeasure.single([0.4, 0.6]), 2.0).passed


def test_feasibility_zero_atom_passes():
    b = build_basis([0.3, 0.7])
    rep = meixner_feasibility(b, MixingMeasure.single([0.0, 0.0]), 2.0)
    assert rep.passed


def test_feasibility_fails_with_slack():
    b = build_basis([0.5, 0.5])
    rep = meixner_feasibility(b, MixingMeasure.single([0.5, 0.0]), 1.0)
    assert not rep.passed
    # p_11(omega) = 0, kappa' = (1/2)/(3/2) = 1/3, p_1^2 = 1/4
    assert rep.min_slack == pytest.approx(-1 / 12)
    assert rep.atoms[0].witness == (0, 0)


def test_branching_map_special_cases():
    p = np.array([0.3, 0.7])
    p_cond = np.array([[0.6, 0.4], [0.2, 0.8]])
    one = map_to_branching(0.8, 1.0, p_cond, p)
    assert one.beta == 1.0 and one.kappa == 0.0
    assert np.allclose(one.Q, p_cond)
    zero = map_to_branching(0.8, 0.0, p_cond, p)
    assert zero.beta == 0.0
    assert zero.kappa == pytest.approx(0.8 / 1.8)


def test_branching_map_negative_q():
    p = np.array([0.5, 0.5])
    with pytest.raises(NegativeQ):
        map_to_branching(1.0, 0.5, np.array([[0.0, 1.0], [1.0, 0.0]]), p)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.01, 0.99), st.integers(0, 10**6))
def test_branching_round_trip(theta, xi_norm, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(3))
    b = build_basis(p)
    omega = np.eye(3)[rng.integers(3)]
    m = MixingMeasure.single(xi_norm * omega)
    if not meixner_feasibility(b, m, theta).passed:
        return
    wf = feasibility_workflow(b, m, theta)
    assert wf.passed


# ---------------------------------------------------------------------------
# finite constructions


def test_contingency_independent_cells():
    P = np.outer([0.3, 0.7], [0.2, 0.5, 0.3])
    rep = contingency_joint(3, P)
    assert np.allclose(rep.decomposition.rho, 0, atol=1e-12)
    assert rep.residual < 1e-12


def test_contingency_symmetric_example():
    P = np.array([[0.375, 0.125], [0.125, 0.375]])
    rep = contingency_joint(2, P)
    dec = rep.decomposition
    assert dec.rho[0] == pytest.approx(0.5)
    assert np.allclose(np.abs(dec.row.u[1]), 1) and np.allclose(np.abs(dec.col.u[1]), 1)
    assert rep.residual < 1e-12
    # brute-force table: X = Y = (1,1) occurs when the two observations share a row and column split
    assert rep.exact[((2, 0), (2, 0))] == pytest.approx(0.375**2)


def test_contingency_random_two_by_three(rng):
    P = rng.dirichlet(np.ones(6)).reshape(2, 3)
    rep = contingency_joint(3, P)
    assert rep.residual < 1e-10
    assert sum(rep.exact.values()) == pytest.approx(1.0)


def test_canonical_decomposition_reconstructs(rng):
    P = rng.dirichlet(np.ones(9)).reshape(3, 3)
    dec = canonical_decomposition(P)
    assert np.allclose(dec.reconstruct(), P, atol=1e-12)
    assert dec.row.orthogonality_residual() < 1e-12
    assert np.all(dec.rho >= 0)


def test_poisson_array_cross_moment():
    rep = poisson_array_joint([[1.5, 0.5], [0.5, 1.5]], D=8)
    assert rep.decomposition.rho[0] == pytest.approx(0.5)
    assert np.allclose(rep.decomposition.row.p, [0.5, 0.5])
    assert array_cross_moment(rep, (0, 1)) == pytest.approx(0.125, abs=1e-9)


def test_poisson_array_product_cells():
    mu = np.outer([1.0, 0.5], [0.4, 0.6]) * 2
    rep = poisson_array_joint(mu, D=8)
    # rho = 0 leaves only the |X| = |Y| coupling, which the resummed form carries exactly
    assert np.allclose(rep.decomposition.rho, 0, atol=1e-12)
    assert rep.extra["resummed_residual"] < 1e-9
    sx = rep.exact["x"].sum(axis=1)
    sy = rep.exact["y"].sum(axis=1)
    assert np.all(rep.exact["law"][sx[:, None] != sy[None, :]] == 0)


def test_poisson_array_diagonal_cells():
    rep = poisson_array_joint(np.diag([1.0, 0.7]), D=6)
    law, xs, ys = rep.exact["law"], rep.exact["x"], rep.exact["y"]
    assert np.allclose(rep.decomposition.rho, 1.0)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            if not np.array_equal(x, y):
                assert law[i, j] == 0.0


# ---------------------------------------------------------------------------
# normal family


def test_normal_cross_covariance_examples():
    tau = np.array([1.0, 1.0])
    b = build_basis(tau / 2)
    assert np.allclose(normal_cross_covariance(b, tau, [1.0, 1.0]), np.diag(tau))
    assert np.allclose(normal_cross_covariance(b, tau, [0.0, 0.0]), 0)
    V = normal_cross_covariance(b, tau, [1.0, 0.0])
    assert np.allclose(V, 0.5)
    assert is_psd(block_covariance(tau, V))
    assert np.allclose(hat_correlations(b, tau, V), [1.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10**6))
def test_block_covariance_psd_in_box(d, seed):
    rng = np.random.default_rng(seed)
    tau = rng.uniform(0.2, 3.0, d)
    b = build_basis(tau / tau.sum())
    xi = rng.uniform(-1, 1, d)
    V = normal_cross_covariance(b, tau, xi)
    assert is_psd(block_covariance(tau, V))
    assert np.allclose(hat_correlations(b, tau, V), xi)


def test_meixner_build_margins_and_symmetry():
    sys = Meixner(build_basis([0.4, 0.6]), 1.5, 0.7)
    m = MixingMeasure.single([0.3, 0.5])
    assert meixner_feasibility(sys.basis, m, sys.theta).passed
    wf = lancaster_build_workflow(sys, m, D=10, epsilon=1e-10)
    by = {c.name: c for c in wf.checks}
    # truncated expansions need not be pointwise nonnegative far in the tail
    assert by["margins"].passed and by["exchangeability"].passed
