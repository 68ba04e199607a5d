from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from oracles import ks_statistic, ks_two_sample, mp_reg_lower_gamma
from ostail.errors import DomainError, IterationCapError
from ostail.samplers import (
    RngStream,
    dirichlet,
    exp_order_stats_from_spacings,
    negative_orthant_direction,
    truncated_exp_order_stats,
    uniform_subsimplex,
)


def test_stream_determinism_and_independence():
    a = RngStream(5, 3).random(16)
    b = RngStream(5, 3).random(16)
    c = RngStream(5, 4).random(16)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_every_sampler_replays_bit_exactly():
    def draw(stream):
        return (
            uniform_subsimplex(stream, 4, 10),
            truncated_exp_order_stats(stream, [1.0, 0.5, 0.3], 0.8, 2, 10).order_stats,
            negative_orthant_direction(stream, 5, 10),
            dirichlet(stream, [0.5, 2.0, 1.0], 10),
        )

    for x, y in zip(draw(RngStream(9, 1)), draw(RngStream(9, 1))):
        np.testing.assert_array_equal(x, y)


# -- spacings ------------------------------------------------------------------


def test_spacings_small_cases():
    np.testing.assert_array_equal(exp_order_stats_from_spacings([1.3]), [1.3])
    np.testing.assert_allclose(exp_order_stats_from_spacings([1.0, 1.0], 2), [1.5, 0.5])


def test_spacings_descending():
    z = RngStream(1).standard_exponential((1000, 8))
    y = exp_order_stats_from_spacings(z, 4)
    assert y.shape == (1000, 4)
    assert np.all(np.diff(y, axis=-1) <= 0)


def test_spacings_match_sorted_exponentials():
    rng = RngStream(2)
    n = 10**6
    y = exp_order_stats_from_spacings(rng.standard_exponential((n, 8)), 4)
    direct = np.sort(rng.standard_exponential((n, 8)), axis=-1)[:, ::-1]
    assert ks_two_sample(y[:, 0], direct[:, 0]) <= 0.003
    assert ks_two_sample(y[:, 3], direct[:, 3]) <= 0.003


@pytest.mark.parametrize("z,l", [([-1.0, 1.0], 1), ([1.0, 1.0], 3), ([1.0], 0)])
def test_spacings_domain_errors(z, l):
    with pytest.raises(DomainError):
        exp_order_stats_from_spacings(z, l)


# -- uniform sub-simplex --------------------------------------------------------


def test_subsimplex_one_dimension_is_uniform():
    u = uniform_subsimplex(RngStream(3), 1, 10**5)[:, 0]
    assert ks_statistic(u, lambda x: x) <= 0.01


def test_subsimplex_area_ratio():
    u = uniform_subsimplex(RngStream(4), 2, 10**6)
    assert abs(np.mean(u.sum(axis=1) <= 0.5) - 0.25) <= 0.003


def test_subsimplex_beta_marginals():
    u = uniform_subsimplex(RngStream(5), 8, 10**6)
    assert np.all(u >= 0) and np.all(u.sum(axis=1) <= 1)
    np.testing.assert_allclose(u.mean(axis=0), 1 / 9, atol=0.002)
    assert ks_statistic(u[:, 3], stats.beta(1, 8).cdf) <= 0.003


# -- truncated acceptance-rejection ------------------------------------------------


def test_truncated_constraint_holds():
    beta = np.array([0.9, 0.5, 0.4, 0.2])
    d = truncated_exp_order_stats(RngStream(6), beta, 0.7, 3, 5000)
    assert np.all(d.z @ beta <= 0.7 * (1 + 1e-12))
    assert d.order_stats.shape == (5000, 3)
    assert d.proposals >= 5000


def test_truncated_one_dimension_matches_truncated_exponential():
    d = truncated_exp_order_stats(RngStream(7), [1.0], 0.5, 1, 10**6)
    ref = lambda z: (1 - np.exp(-z)) / (1 - math.exp(-0.5))
    assert ks_statistic(d.z[:, 0], ref) <= 0.003


def test_truncated_erlang_ratio():
    d = truncated_exp_order_stats(RngStream(8), [1.0, 1.0, 1.0], 1.0, 3, 10**6)
    s = d.z.sum(axis=1)
    expected = mp_reg_lower_gamma(3, 0.5) / mp_reg_lower_gamma(3, 1.0)
    assert abs(np.mean(s <= 0.5) - expected) <= 0.005


def test_truncated_two_dimensional_histogram_chi_square():
    # Accepted (Z1, Z2) should have density proportional to exp(-z1 - z2)
    # on {z1 + 0.5 z2 <= 1}. Compare binned counts with cell probabilities
    # from numerical integration.
    from scipy import integrate

    beta = np.array([1.0, 0.5])
    n = 200_000
    d = truncated_exp_order_stats(RngStream(9), beta, 1.0, 2, n)
    z1, z2 = d.z[:, 0], d.z[:, 1]
    e1 = np.linspace(0, 1, 5)
    e2 = np.linspace(0, 2, 5)
    counts, _, _ = np.histogram2d(z1, z2, bins=[e1, e2])
    total = integrate.dblquad(lambda b, a: math.exp(-a - b), 0, 1, 0, lambda a: 2 * (1 - a))[0]
    probs = np.zeros_like(counts)
    for i in range(4):
        for j in range(4):
            lo2, hi2 = e2[j], e2[j + 1]
            probs[i, j] = integrate.dblquad(
                lambda b, a: math.exp(-a - b), e1[i], e1[i + 1],
                lambda a: lo2, lambda a: min(hi2, max(lo2, 2 * (1 - a))),
            )[0] / total
    mask = probs * n > 20
    expected = probs[mask] * n
    chi2 = float(((counts[mask] - expected) ** 2 / expected).sum())
    assert stats.chi2.sf(chi2, mask.sum() - 1) > 1e-3


def test_acceptance_rate_rises_as_gamma1_shrinks():
    beta = np.linspace(1.0, 0.2, 8)
    rates = [truncated_exp_order_stats(RngStream(10), beta, g, 4, 20000).acceptance_rate for g in (2, 1, 0.5, 0.1)]
    assert all(a < b for a, b in zip(rates, rates[1:]))
    assert rates[-1] > 0.8


def test_truncated_iteration_cap():
    with pytest.raises(IterationCapError):
        truncated_exp_order_stats(RngStream(11), [1e-6], 1e3, 1, 1)


# -- directions and Dirichlet ------------------------------------------------------


def test_direction_one_dimension():
    np.testing.assert_array_equal(negative_orthant_direction(RngStream(12), 1, 5), -np.ones((5, 1)))


def test_direction_unit_norm_and_negative():
    t = negative_orthant_direction(RngStream(13), 6, 10000)
    np.testing.assert_allclose(np.linalg.norm(t, axis=1), 1.0, atol=1e-12)
    assert np.all(t < 0)


def test_direction_exchangeable():
    t = negative_orthant_direction(RngStream(14), 2, 10**6)
    assert abs(np.mean(t[:, 0] < t[:, 1]) - 0.5) <= 0.002


def test_direction_second_moment():
    t = negative_orthant_direction(RngStream(15), 8, 10**6)
    np.testing.assert_allclose((t**2).mean(axis=0), 1 / 8, atol=0.002)


def test_dirichlet_uniform_marginal():
    s = dirichlet(RngStream(16), [1.0, 1.0], 10**6)
    assert ks_statistic(s[:, 0], lambda x: x) <= 0.003


def test_dirichlet_beta_moments():
    s = dirichlet(RngStream(17), [2.0, 2.0], 10**6)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert abs(s[:, 0].mean() - 0.5) <= 0.002
    assert abs(s[:, 0].var() - 0.05) <= 0.002


def test_dirichlet_single_and_invalid():
    np.testing.assert_array_equal(dirichlet(RngStream(18), [3.0]), [1.0])
    with pytest.raises(DomainError):
        dirichlet(RngStream(18), [1.0, 0.0])
