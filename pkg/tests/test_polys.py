import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mvlancaster import series
from mvlancaster.basis import build_basis
from mvlancaster.errors import DegreeTooHigh, DomainError
from mvlancaster.limits import verify_limits
from mvlancaster.polys import (
    Hermite,
    Krawtchouk,
    Meixner,
    PoissonCharlier,
    charlier_eval,
    hermite1d_eval,
    krawtchouk_eval,
    krawtchouk_partition_sum,
    meixner1d_eval,
    meixner1d_transform,
    transform,
)
from mvlancaster.verify import (
    generating_product_workflow,
    orthogonality_workflow,
    partition_sum_workflow,
    transform_workflow,
)


def cauchy_coefficients(fn, d, D, radius=0.5, m=32):
    """Taylor coefficients of an entire function of ``d`` variables by the trapezoid rule on a torus."""
    ang = 2 * np.pi * np.arange(m) / m
    vals = np.empty((m,) * d, dtype=complex)
    for k in itertools.product(range(m), repeat=d):
        vals[k] = fn(radius * np.exp(1j * ang[list(k)]))
    coef = np.fft.fftn(vals) / m**d
    out = {}
    for n in itertools.product(range(D + 1), repeat=d):
        out[n] = (coef[n] / radius ** sum(n)).real
    return out


# ---------------------------------------------------------------------------
# one-dimensional families


@pytest.mark.parametrize("x", [0, 1, 3, 7])
def test_charlier_low_degree(x):
    assert charlier_eval(0, x, 2.5) == 1.0
    assert charlier_eval(1, x, 2.5) == pytest.approx(1 - x / 2.5)


def test_charlier_second_moment():
    xs = np.arange(61)
    w = stats.poisson.pmf(xs, 2.0)
    assert math.fsum(w * charlier_eval(1, xs, 2.0) ** 2) == pytest.approx(0.5, abs=1e-14)
    # E[C_m C_n] = delta m!/lam^m
    C = np.array([charlier_eval(n, xs, 2.0) for n in range(5)])
    G = (C * w) @ C.T
    assert np.allclose(G, np.diag([math.factorial(n) / 2.0**n for n in range(5)]), atol=1e-12)


def test_charlier_matches_generating_function():
    lam, x = 1.7, 4
    coefs = cauchy_coefficients(lambda z: np.exp(z[0]) * (1 - z[0] / lam) ** x, 1, 6, radius=1.0)
    for n in range(7):
        assert charlier_eval(n, x, lam) / math.factorial(n) == pytest.approx(coefs[(n,)], abs=1e-12)


def test_meixner_low_degree():
    alpha, kappa = 1.5, 0.4
    for x in range(5):
        assert meixner1d_eval(0, x, alpha, kappa) == 1.0
        assert meixner1d_eval(1, x, alpha, kappa) == pytest.approx(1 - x * (1 - kappa) / (alpha * kappa))


def test_meixner1d_orthogonality():
    alpha, theta = 1.5, 0.7
    kappa = theta / (1 + theta)
    xs = np.arange(400)
    w = stats.nbinom.pmf(xs, alpha, 1 - kappa)
    M = np.array([meixner1d_eval(n, xs, alpha, kappa) for n in range(4)])
    G = (M * w) @ M.T
    assert G[1, 1] == pytest.approx(1 / (alpha * kappa), rel=1e-12)
    target = [math.gamma(alpha) * math.factorial(n) / (math.gamma(alpha + n) * kappa**n) for n in range(4)]
    assert np.allclose(G, np.diag(target), rtol=1e-10, atol=1e-12)


def test_meixner_transform_one_dimensional():
    alpha, theta = 2.0, 0.5
    kappa = theta / (1 + theta)
    xs = np.arange(400)
    w = stats.nbinom.pmf(xs, alpha, 1 - kappa)
    for n in range(4):
        for s in (0.2, 0.9):
            direct = math.fsum(w * s**xs * meixner1d_eval(n, xs, alpha, kappa))
            assert direct == pytest.approx(meixner1d_transform(n, s, alpha, theta), abs=1e-12)
    with pytest.raises(DomainError):
        meixner1d_transform(1, 4.0, alpha, theta)


def test_hermite_low_degree():
    for x in (-1.3, 0.0, 2.2):
        assert hermite1d_eval(1, x, 3.0) == pytest.approx(x)
        assert hermite1d_eval(2, x, 3.0) == pytest.approx(x * x - 3.0)


def test_hermite_second_moment():
    x, w = np.polynomial.hermite_e.hermegauss(20)
    tau = 2.5
    val = np.sum(w / math.sqrt(2 * math.pi) * hermite1d_eval(2, math.sqrt(tau) * x, tau) ** 2)
    assert val == pytest.approx(2 * tau**2)


# ---------------------------------------------------------------------------
# Krawtchouk


def test_krawtchouk_hand_values(sym2):
    k = Krawtchouk(sym2, 1)
    assert krawtchouk_eval(k, (0,), [1, 0]) == 1.0
    assert krawtchouk_eval(k, (1,), [1, 0]) == pytest.approx(-1)
    assert krawtchouk_eval(k, (1,), [0, 1]) == pytest.approx(1)


def test_krawtchouk_second_moment(sym2):
    k = Krawtchouk(sym2, 2)
    pts = np.array([[2, 0], [1, 1], [0, 2]])
    w = np.array([0.25, 0.5, 0.25])
    vals = k.evaluate_many(pts, [(1,)])[:, 0]
    assert float(w @ vals**2) == pytest.approx(2.0)


def test_krawtchouk_degree_too_high(sym2):
    with pytest.raises(DegreeTooHigh):
        Krawtchouk(sym2, 2).evaluate([3], [2, 0])


def test_krawtchouk_norm_carries_basis_scale():
    # d=3, N=4, non-orthonormal rows: the squared norm is multinomial * prod a_j^{n_j}
    b = build_basis([0.2, 0.3, 0.5])
    assert not np.allclose(b.a[1:], 1.0)
    wf = orthogonality_workflow(Krawtchouk(b, 4), 4)
    assert wf.passed


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 4), st.integers(0, 10**6))
def test_partition_sum_equivalence(d, N, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(d)) * 0.9 + 0.1 / d
    assert partition_sum_workflow(build_basis(p), N).passed


def test_krawtchouk_generating_function_coefficients():
    b = build_basis([0.2, 0.3, 0.5])
    x = (2, 1, 1)
    coefs = cauchy_coefficients(
        lambda w: np.prod((1 + w @ b.u[1:]) ** np.array(x)), 2, 4, radius=0.3
    )
    k = Krawtchouk(b, 4)
    for n1 in series.multi_indices(2, 4):
        assert k.evaluate(n1, x) == pytest.approx(coefs[tuple(n1)], abs=1e-10)
    assert krawtchouk_partition_sum(b, (1, 1), x) == pytest.approx(coefs[(1, 1)], abs=1e-10)


# ---------------------------------------------------------------------------
# multivariate Poisson-Charlier


def test_poisson_charlier_examples():
    sys = PoissonCharlier.from_means([1.0, 2.0, 1.5])
    x = np.array([2.0, 0.0, 3.0])
    tot = sys.total
    assert sys.evaluate((0, 0, 0), x) == 1.0
    assert sys.evaluate((1, 0, 0), x) == pytest.approx(1 - x.sum() / tot)
    assert sys.evaluate((0, 1, 0), x) == pytest.approx(float(sys.basis.u[1] @ x) / tot)


def test_poisson_charlier_generating_function_coefficients():
    sys = PoissonCharlier.from_means([1.0, 3.0])
    lam = sys.total
    u1 = sys.basis.u[1]
    for x in ([0, 0], [2, 1], [3, 4]):
        x = np.array(x)

        def gf(w):
            return np.exp(w[0]) * np.prod((1 - w[0] / lam + w[1] * u1 / lam) ** x)

        coefs = cauchy_coefficients(gf, 2, 4, radius=0.6)
        for n in series.multi_indices(2, 4):
            assert sys.evaluate(n, x) == pytest.approx(coefs[tuple(n)], abs=1e-11)


@pytest.mark.parametrize("mu", [[1.0, 1.0], [0.5, 1.0, 2.0]])
def test_poisson_charlier_orthogonality(mu):
    wf = orthogonality_workflow(PoissonCharlier.from_means(mu), 4)
    assert wf.passed, wf.checks[0].residual


def test_poisson_charlier_generating_product():
    wf = generating_product_workflow(PoissonCharlier.from_means([1.0, 1.0]), n_points=4)
    assert wf.passed


def test_poisson_charlier_transform_examples():
    sys = PoissonCharlier.from_means([1.0, 1.0])
    assert transform(sys, (0, 0), [1.0, 1.0]) == pytest.approx(1.0)
    assert transform(sys, (1, 0), [1.0, 1.0]) == 0.0
    slab = np.array(list(itertools.product(range(40), repeat=2)), dtype=float)
    w = stats.poisson.pmf(slab, 1.0).prod(axis=1)
    s = np.array([0.5, 0.5])
    direct = float(np.sum(w * np.prod(s**slab, axis=1) * sys.evaluate_many(slab, [(0, 1)])[:, 0]))
    assert transform(sys, (0, 1), s) == pytest.approx(direct, abs=1e-10)


# ---------------------------------------------------------------------------
# multivariate Meixner and Hermite


def test_meixner_examples():
    b = build_basis([0.3, 0.7])
    sys = Meixner(b, 1.5, 0.7)
    x = np.array([2.0, 5.0])
    assert sys.evaluate((0, 0), x) == 1.0
    assert sys.evaluate((0, 1), x) == pytest.approx(float(b.u[1] @ x))


def test_meixner_generating_function_coefficients():
    b = build_basis([0.3, 0.7])
    sys = Meixner(b, 1.5, 0.7)
    for x in ([0, 0], [1, 2], [3, 1]):
        x = np.array(x)
        coefs = cauchy_coefficients(lambda w: (
            (1 - w[0]) ** (-(x.sum() + sys.alpha)) * np.prod((1 - w[0] / sys.kappa + w[1] * b.u[1]) ** x)
        ), 2, 3, radius=0.2)
        for n in series.multi_indices(2, 3):
            assert sys.evaluate(n, x) == pytest.approx(coefs[tuple(n)], abs=1e-9)


def test_meixner_orthogonality():
    wf = orthogonality_workflow(Meixner(build_basis([0.3, 0.7]), 1.5, 0.7), 4, tol=1e-7)
    assert wf.passed, wf.checks[0].residual


def test_hermite_examples():
    sys = Hermite.from_variances([1.0, 1.0])
    assert np.allclose(sys.basis.u[1], [-1, 1])
    x = np.array([0.3, -1.1])
    assert sys.evaluate((0, 1), x) == pytest.approx(x[1] - x[0])
    assert sys.evaluate((1, 0), x) == pytest.approx(x.sum())
    assert sys.evaluate((0, 2), x) == pytest.approx((x[1] - x[0]) ** 2 - 2)


def test_hermite_orthogonality_quadrature():
    assert orthogonality_workflow(Hermite.from_variances([1.0, 2.0, 0.5]), 3).passed


def test_hermite_orthogonality_monte_carlo():
    sys = Hermite.from_variances([1.0, 2.0])
    rng = np.random.Generator(np.random.Philox(7))
    X = rng.standard_normal((200_000, 2)) * np.sqrt(sys.tau)
    idx = series.multi_indices(2, 2)
    P = sys.evaluate_many(X, idx)
    for i, j in itertools.combinations_with_replacement(range(len(idx)), 2):
        prod = P[:, i] * P[:, j]
        target = sys.norm(idx[i]) if i == j else 0.0
        se = prod.std() / math.sqrt(len(prod))
        assert abs(prod.mean() - target) <= 4 * se


@pytest.mark.parametrize(
    "sys",
    [
        PoissonCharlier.from_means([1.0, 2.0]),
        Meixner(build_basis([0.4, 0.6]), 1.5, 0.7),
        Hermite.from_variances([1.0, 3.0]),
        Krawtchouk(build_basis([0.2, 0.3, 0.5]), 3),
    ],
    ids=lambda s: s.family,
)
def test_transforms_match_enumeration(sys):
    wf = transform_workflow(sys, 3, n_points=5)
    assert wf.passed, wf.checks[0].residual


def test_meixner_transform_domain():
    sys = Meixner(build_basis([0.4, 0.6]), 1.5, 0.7)
    with pytest.raises(DomainError):
        sys.transform((1, 0), [5.0, 5.0])


@pytest.mark.parametrize(
    "sys",
    [
        PoissonCharlier.from_means([1.0, 2.0]),
        Meixner(build_basis([0.4, 0.6]), 1.5, 0.7),
        Hermite.from_variances([1.0, 3.0]),
    ],
    ids=lambda s: s.family,
)
def test_degree_zero_is_one(sys, rng):
    pts = rng.integers(0, 6, (10, 2)).astype(float)
    assert np.all(sys.evaluate_many(pts, [(0, 0)]) == 1.0)


def test_single_leading_term():
    """Highest-degree finite difference in U equals that of prod U_j^{n_j} alone."""
    sys = PoissonCharlier.from_means([1.0, 1.0])
    b = sys.basis
    # invert the linear map x -> U = u x to evaluate in U coordinates
    uinv = np.linalg.inv(b.u)
    n = (1, 2)
    lam = sys.total
    scale = 1 / (math.factorial(n[0]) * math.factorial(n[1])) * (-1 / lam) ** n[0] * lam ** (-n[1])

    def poly(U):
        return sys.evaluate(n, uinv @ np.asarray(U, dtype=float))

    # third mixed difference: once in U0, twice in U1 picks out the leading coefficient
    h = 1.0
    total = 0.0
    for i in range(2):
        for j in range(3):
            c = (-1) ** (1 - i) * math.comb(1, i) * (-1) ** (2 - j) * math.comb(2, j)
            total += c * poly([3 + i * h, 1 + j * h])
    assert total / (h**3 * 2) == pytest.approx(scale, rel=1e-10)


def test_limits_report():
    rep = verify_limits(schedule=(10.0, 1e2, 1e3, 1e4), max_degree=2)
    by = {r.name: r for r in rep.results}
    assert by["krawtchouk->charlier"].passed
    assert by["meixner->charlier"].passed
    for r in rep.results:
        assert r.monotone
