from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import combined_se, ks_two_sample
from ostail.distributions import OrderStatSumProblem, ParetoLomax, Weibull
from ostail.errors import DomainError, UnsupportedFamilyError
from ostail.estimators import cmc_gg
from ostail.harness import PRESETS, config_from_mapping, run_convergence_sweep
from ostail.rqmc import RqmcPlan, cube_to_simplex, replicate_means, rqmc_estimate
from ostail.samplers import RngStream, uniform_subsimplex

FIG = OrderStatSumProblem(8, 4, 0.5, Weibull(0.5, 1.0))


def test_one_cut_point():
    np.testing.assert_allclose(cube_to_simplex([0.3]), [0.3, 0.7])


def test_golden_point():
    # n = 2: top cut 0.5^(1/2), lower cut 0.5^(1/2) * 0.5^(1/1).
    r = math.sqrt(0.5)
    np.testing.assert_allclose(cube_to_simplex([0.5, 0.5]), [r * 0.5, r - r * 0.5, 1 - r], rtol=1e-15)
    np.testing.assert_allclose(cube_to_simplex([0.5, 0.5]), [0.35355339, 0.35355339, 0.29289322], atol=1e-8)


def test_simplex_properties():
    u = RngStream(1).random((1000, 7))
    s = cube_to_simplex(u)
    assert s.shape == (1000, 8)
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_pushforward_matches_uniform_simplex_sampler():
    n = 10**6
    s = cube_to_simplex(RngStream(2).random((n, 4)))
    ref = uniform_subsimplex(RngStream(3), 4, n)
    ref = np.column_stack([ref, 1 - ref.sum(axis=1)])
    for k in range(5):
        assert ks_two_sample(s[:, k], ref[:, k]) <= 0.003


@pytest.mark.parametrize("u", [[1.0, 0.5], [-0.1, 0.2], 0.5])
def test_off_cube_rejected(u):
    with pytest.raises(DomainError):
        cube_to_simplex(u)


@pytest.mark.parametrize("kwargs", [dict(points_per_replicate=100), dict(points_per_replicate=1),
                                    dict(points_per_replicate=64, replicates=1),
                                    dict(points_per_replicate=64, dimension=0)])
def test_plan_validation(kwargs):
    with pytest.raises(DomainError):
        RqmcPlan(**kwargs)


def test_rejects_non_weibull():
    with pytest.raises(UnsupportedFamilyError):
        rqmc_estimate(OrderStatSumProblem(4, 2, 0.5, ParetoLomax(1.0)), RqmcPlan(64, 4))


def test_small_cube_dimension_rejected():
    with pytest.raises(DomainError):
        replicate_means(FIG, RqmcPlan(64, 4, dimension=5))


def test_replicate_means_are_probabilities():
    r = rqmc_estimate(FIG, RqmcPlan(256, 30, scramble_seed=4))
    means = np.array(r.aux["replicate_means"])
    assert means.shape == (30,)
    assert np.all(np.isfinite(means)) and np.all((means >= 0) & (means <= 1))
    assert r.samples == 30
    assert r.relative_error == pytest.approx(math.sqrt(np.var(means, ddof=1) / 30) / means.mean())


def test_agrees_with_cmc_and_beats_plain_mc_at_equal_budget():
    plan = RqmcPlan(1024, 30, scramble_seed=5)
    rq = rqmc_estimate(FIG, plan)
    mc = cmc_gg(FIG, plan.points_per_replicate * plan.replicates, 6)
    assert abs(rq.estimate - mc.estimate) <= 3 * combined_se(rq.std_error, mc.std_error)
    assert rq.std_error < mc.std_error


def test_pooled_replicates_unbiased_against_cmc():
    rq = rqmc_estimate(FIG, RqmcPlan(128, 200, scramble_seed=7))
    mc = cmc_gg(FIG, 500_000, 8)
    assert abs(rq.estimate - mc.estimate) <= 3 * combined_se(rq.std_error, mc.std_error)


def test_seeds_reproduce_and_differ():
    a = replicate_means(FIG, RqmcPlan(128, 3, scramble_seed=9))
    b = replicate_means(FIG, RqmcPlan(128, 3, scramble_seed=9))
    c = replicate_means(FIG, RqmcPlan(128, 3, scramble_seed=10))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sweep_se_monotone_with_at_most_one_inversion():
    cfg = config_from_mapping(dict(PRESETS["fig1"]))
    sweep = run_convergence_sweep(cfg, with_control=False)
    inversions = sum(b > a for a, b in zip(sweep.rqmc_se, sweep.rqmc_se[1:]))
    assert inversions <= 1


def test_sweep_needs_three_points():
    from ostail.errors import ConfigError

    cfg = config_from_mapping(dict(PRESETS["fig1"], m_grid=(128,)))
    with pytest.raises(ConfigError):
        run_convergence_sweep(cfg)
