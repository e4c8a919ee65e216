import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deconvhet import core
from deconvhet.data import FrequencyGrid, Sample
from deconvhet.error_cf import EstimatedCF, laplace_cf, no_error_cf
from deconvhet.exceptions import NegativeVarianceEstimate
from deconvhet.regression import MeanModel
from deconvhet.simulation import DgpSpec, generate

from helpers import oracle_instance, symmetry_and_zero

FE = laplace_cf(1 / 3)
THETA = MeanModel((1.0, 1.0))


@pytest.fixture(scope="module")
def sample():
    return generate(DgpSpec("linear", 0, 400, "ordinary", True), 21)


def test_localization_identity():
    # no error, tiny bandwidth, g = 0, sigma2 = 0, five copies of (y=2, w=1):
    # the process is sqrt(5) * 4 exp(i xi) wherever kft(b xi) = 1
    s = Sample(np.full(5, 2.0), np.ones(5))
    grid = FrequencyGrid.uniform(-5, 5, 11)
    p = core.empirical_process(s, MeanModel((0.0,)), 0.0, 0.01, no_error_cf(), grid)
    np.testing.assert_allclose(p.values, np.sqrt(5) * 4 * np.exp(1j * grid.points), atol=1e-12)


def test_plug_in_zero_and_symmetry(sample):
    grid = FrequencyGrid.uniform(-0.4, 0.4, 21)
    for fe in (FE, EstimatedCF(sample.replicates)):
        s2 = core.sigma_n_sq(sample, THETA, 0.7, fe)
        v = core.empirical_process(sample, THETA, s2, 0.7, fe, grid).values
        assert abs(v[grid.zero_index()]) <= 1e-10
        assert np.max(np.abs(v - np.conj(v[::-1]))) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_plug_in_zero_and_symmetry_random(seed):
    sym, zero = symmetry_and_zero(seed)
    assert sym <= 1e-8 and zero <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_fast_path_matches_quadrature(seed):
    moments, variance, process = oracle_instance(seed)
    assert moments <= 1e-6 and variance <= 1e-6 and process <= 1e-6


def test_quadratic_mean_uses_generic_path(sample):
    theta = MeanModel((1.0, 1.0, 0.1))
    grid = FrequencyGrid.uniform(-0.3, 0.3, 5)
    small = Sample(sample.y[:20], sample.w[:20])
    s2 = core.sigma_n_sq(small, theta, 0.8, FE)
    auto = core.empirical_process(small, theta, s2, 0.8, FE, grid).values
    generic = core.empirical_process(small, theta, s2, 0.8, FE, grid, method="generic").values
    np.testing.assert_array_equal(auto, generic)
    assert abs(auto[2]) <= 1e-8


@pytest.mark.parametrize("shift", [-1.5, 0.3, 2.0])
def test_location_equivariance(sample, shift):
    grid = FrequencyGrid.uniform(-0.4, 0.4, 11)
    a, s = THETA.theta
    moved = MeanModel((a - s * shift, s))
    s2 = core.sigma_n_sq(sample, THETA, 0.7, FE)
    s2m = core.sigma_n_sq(sample.shifted(shift), moved, 0.7, FE)
    assert s2m == pytest.approx(s2, rel=1e-10)
    p = core.empirical_process(sample, THETA, s2, 0.7, FE, grid).values
    pm = core.empirical_process(sample.shifted(shift), moved, s2m, 0.7, FE, grid).values
    np.testing.assert_allclose(pm, np.exp(1j * shift * grid.points) * p, atol=1e-9)


def test_ks_monotone_under_refinement(sample):
    s2 = core.sigma_n_sq(sample, THETA, 0.7, FE)
    ks = []
    for count in (11, 21, 41, 81):  # each grid contains the previous one
        grid = FrequencyGrid.uniform(-0.4, 0.4, count)
        ks.append(core.empirical_process(sample, THETA, s2, 0.7, FE, grid).ks)
    assert all(b >= a - 1e-12 for a, b in zip(ks, ks[1:]))


def test_cvm_stable_under_refinement(sample):
    s2 = core.sigma_n_sq(sample, THETA, 0.7, FE)
    coarse = core.empirical_process(sample, THETA, s2, 0.7, FE, FrequencyGrid.uniform(-0.4, 0.4, 41)).cvm
    fine = core.empirical_process(sample, THETA, s2, 0.7, FE, FrequencyGrid.uniform(-0.4, 0.4, 161)).cvm
    assert abs(coarse - fine) <= 0.01 * fine


def test_workers_do_not_change_result(sample):
    grid = FrequencyGrid.uniform(-0.4, 0.4, 21)
    big = generate(DgpSpec("linear", 1, 1500, "ordinary"), 3)
    s2 = core.sigma_n_sq(big, THETA, 0.7, FE)
    one = core.empirical_process(big, THETA, s2, 0.7, FE, grid, workers=1).values
    four = core.empirical_process(big, THETA, s2, 0.7, FE, grid, workers=4).values
    np.testing.assert_array_equal(one, four)


def test_statistics_definitions():
    grid = FrequencyGrid.uniform(-1, 1, 5)
    vals = np.array([1, 2j, -3, 1 + 1j, 0.5])
    p = core.TestProcess(grid, vals, 1.0, THETA)
    assert p.ks == 3.0
    assert p.cvm == pytest.approx(np.trapezoid(np.abs(vals) ** 2, grid.points))
    stats = core.statistics(p)
    assert (stats.ks, stats.cvm) == (p.ks, p.cvm)


def test_tree_sum_is_order_fixed():
    rng = np.random.default_rng(0)
    blocks = list(rng.normal(size=37) * 10.0 ** rng.integers(-8, 8, 37))
    assert core.tree_sum(blocks) == core.tree_sum(list(blocks))
    assert core.tree_sum(blocks) == pytest.approx(sum(blocks), rel=1e-12)


def test_negative_variance_detected():
    # residuals are zero, so the plug-in reduces to -slope**2 * error variance
    w = np.linspace(-1, 1, 6)
    with pytest.raises(NegativeVarianceEstimate):
        core.sigma_n_sq(Sample(w.copy(), w), MeanModel((0.0, 1.0)), 0.7, FE)
