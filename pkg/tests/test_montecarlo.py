import numpy as np
import pytest

from mvlancaster.basis import build_basis
from mvlancaster.errors import ConfigError, InfeasibleBasis
from mvlancaster.lancaster import MixingMeasure
from mvlancaster.markov import GaussAR, NBBranch, PoissonQueue
from mvlancaster.montecarlo import (
    SimConfig,
    Statistic,
    run_config,
    sampler_agreement,
    simulate_chain,
    simulate_gaussian_lancaster,
    simulate_structural_poisson,
    stream,
)

SYM = build_basis([0.5, 0.5])
MU = np.array([1.0, 1.0])


def test_streams_are_reproducible_and_distinct():
    a = stream(7, 0).random(4)
    assert np.array_equal(a, stream(7, 0).random(4))
    assert not np.array_equal(a, stream(7, 1).random(4))
    assert not np.array_equal(a, stream(8, 0).random(4))
    with pytest.raises(ConfigError):
        stream(-1, 0)


def test_statistic_z():
    assert Statistic("a", 1.2, 1.0, 0.1).z == pytest.approx(2.0)
    assert Statistic("b", 1.0, 1.0, 0.0).z == 0.0
    assert Statistic("c", 1.1, 1.0, 0.0).z == np.inf


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig({"variant": "PoissonQueue"}, 0)


def test_structural_independent_atom():
    rep = simulate_structural_poisson(SYM, MixingMeasure.single([0.0, 0.0]), MU, 40_000, seed=1)
    assert rep.passed, rep.max_z
    assert all(s.target == 0.0 for s in rep.stats)


def test_structural_identity_atom():
    rep = simulate_structural_poisson(SYM, MixingMeasure.single([0.0, 1.0]), MU, 20_000, seed=2)
    assert rep.extra["fraction_x_equals_y"] == 1.0
    assert rep.passed


def test_structural_mixed_atom():
    rep = simulate_structural_poisson(SYM, MixingMeasure.single([0.0, 0.5]), MU, 100_000, seed=3, max_degree=2)
    assert rep.passed, rep.max_z


def test_structural_infeasible_basis():
    b = build_basis(np.full(3, 1 / 3))
    from mvlancaster.basis import hypergroup_tensor

    l = hypergroup_tensor(b).argmin()[2]
    with pytest.raises(InfeasibleBasis):
        simulate_structural_poisson(b, MixingMeasure.single(np.eye(3)[l]), np.ones(3), 10, seed=0)


def test_gaussian_lancaster_mixture():
    tau = np.array([1.0, 2.0])
    b = build_basis(tau / tau.sum())
    m = MixingMeasure((([0.8, -0.3], 0.5), ([0.2, 0.6], 0.5)), "box")
    rep = simulate_gaussian_lancaster(b, tau, m, 100_000, seed=4)
    assert rep.passed, rep.max_z


def test_reports_are_deterministic():
    m = MixingMeasure.single([0.1, 0.4])
    a = simulate_structural_poisson(SYM, m, MU, 5_000, seed=9).to_json()
    b = simulate_structural_poisson(SYM, m, MU, 5_000, seed=9).to_json()
    c = simulate_structural_poisson(SYM, m, MU, 5_000, seed=10).to_json()
    assert a == b and a != c


@pytest.mark.parametrize(
    "kernel",
    [
        PoissonQueue(np.array([1.0, 2.0]), np.array([0.2, 0.4])),
        NBBranch(1.5, 0.3, 0.2, np.array([[0.5, 0.5], [0.1, 0.9]]), np.array([1 / 6, 5 / 6])),
        GaussAR(np.array([1.0, 2.0]), np.array([0.7, -0.5])),
    ],
    ids=lambda k: k.variant,
)
def test_chain_reaches_stationarity(kernel):
    rep = simulate_chain(kernel, [0] * kernel.d, 60, 40_000, seed=5)
    assert rep.passed, rep.max_z
    assert len(rep.stats) > 3


@pytest.mark.parametrize(
    "kernel",
    [
        PoissonQueue(np.array([1.0, 2.0]), np.array([0.2, 0.4])),
        NBBranch(1.5, 0.3, 0.2, np.array([[0.5, 0.5], [0.1, 0.9]]), np.array([1 / 6, 5 / 6])),
    ],
    ids=lambda k: k.variant,
)
def test_sampler_matches_exact_step_law(kernel):
    rep = sampler_agreement(kernel, [2, 3], 50_000, seed=6, bounds=(25, 25))
    assert rep.passed, rep.max_z


def test_gillespie_poisson_generator():
    cfg = SimConfig(
        {"variant": "CTPoissonGen", "mu": [1.0, 1.0], "nu": 1.0, "gamma": [0.7], "init": [4, 1], "times": [0.3, 0.8], "stationary_check": False},
        20_000,
        seed=11,
    )
    rep = run_config(cfg)
    assert rep.passed, rep.max_z
    assert any(s.name.startswith("decay_rate") for s in rep.stats)


def test_gillespie_meixner_generator_stationary():
    cfg = SimConfig(
        {"variant": "CTMeixnerGen", "alpha": 1.5, "theta": 0.5, "nu": 1.0, "gamma": [2.0], "p": [0.4, 0.6], "init": [3, 0], "times": [0.5, 6.0], "stationary_check": True},
        10_000,
        seed=12,
    )
    rep = run_config(cfg)
    assert rep.passed, rep.max_z
    assert any(s.name.startswith("freq") for s in rep.stats)
