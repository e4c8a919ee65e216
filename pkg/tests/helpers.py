"""Shared oracles and checks for the test modules and the acceptance suite."""

from __future__ import annotations

import numpy as np

from deconvhet import core
from deconvhet.bootstrap import (
    MAMMEN_HIGH,
    MAMMEN_LOW,
    MultiplierScheme,
    bootstrap_process_known,
    draw_multipliers,
    g_n,
    replicate_rng,
)
from deconvhet.data import FrequencyGrid, Sample
from deconvhet.error_cf import gaussian_cf, laplace_cf, pi_epsilon
from deconvhet.kernels import FLAT_TOP, fourier_moment
from deconvhet.regression import MeanModel


def rel_err(a, b):
    """Max abs difference scaled by the sup norm of the reference."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def random_instance(rng):
    """A small random problem: sample (n <= 10), mean, CF, bandwidth, grid."""
    n = int(rng.integers(5, 11))
    x = rng.standard_normal(n)
    law = "laplace" if rng.random() < 0.5 else "gaussian"
    var = float(rng.uniform(0.1, 0.6))
    if law == "laplace":
        fe = laplace_cf(var)
        e = rng.laplace(0.0, np.sqrt(var / 2.0), n)
        b = float(rng.uniform(0.3, 1.0))
    else:
        fe = gaussian_cf(var)
        e = rng.normal(0.0, np.sqrt(var), n)
        b = float(rng.uniform(0.6, 1.2))
    theta = MeanModel(tuple(rng.normal(0.0, 1.0, int(rng.integers(1, 3)))))
    y = theta(x) + rng.standard_normal(n)
    grid = FrequencyGrid.uniform(-1.0, 1.0, 9)
    return Sample(y, x + e), theta, fe, b, grid


def moment_by_quadrature(m, xi, w, b, fe, table):
    """``int x**m Kb((x - w)/b) exp(i x xi) dx`` on the tabulated kernel."""
    u, kv, wts = table
    x = w + b * u
    return np.exp(1j * np.outer(np.atleast_1d(xi), x)) @ (x**m * kv * wts * b)


def oracle_instance(seed):
    """Fast path against nested quadrature on one random instance.

    Returns the worst relative errors for the Fourier moments, the variance
    plug-in and the process.
    """
    rng = np.random.default_rng(seed)
    sample, theta, fe, b, grid = random_instance(rng)
    table = core.kernel_table(b, fe, max_freq=float(np.max(np.abs(grid.points))))
    worst_m = 0.0
    for m in (0, 1, 2):
        w = float(sample.w[0])
        fast = fourier_moment(m, grid.points, w, b, fe)
        slow = moment_by_quadrature(m, grid.points, w, b, fe, table)
        worst_m = max(worst_m, rel_err(fast, slow))
    s_fast = core.sigma_n_sq(sample, theta, b, fe)
    s_slow = core.generic_sigma_n_sq(sample, theta, b, fe, table=table)
    p_fast = core.empirical_process(sample, theta, s_fast, b, fe, grid).values
    p_slow = np.sqrt(sample.n) * core.generic_process(sample, theta, s_fast, b, fe, grid.points, table=table)
    return worst_m, abs(s_fast - s_slow) / abs(s_slow), rel_err(p_fast, p_slow)


def g_n_identity(seed):
    """``G_n`` closed form against the per-observation Fourier weights."""
    rng = np.random.default_rng(seed)
    sample, _, fe, b, grid = random_instance(rng)
    direct = np.mean([fourier_moment(0, grid.points, w, b, fe) for w in sample.w], axis=0)
    return rel_err(g_n(grid, sample, b, fe), direct)


def projection_identity(seed):
    """Reduced known-CF bootstrap against direct assembly with ``P_n(x; xi)``.

    The direct form integrates ``[(Y_i - g(x))**2 - s2] Kb((x - W_i)/b)
    (exp(ix xi) - G_n(xi))`` over x by quadrature for every observation.
    """
    rng = np.random.default_rng(seed)
    sample, theta, fe, b, grid = random_instance(rng)
    theta = MeanModel(theta.theta[:2])
    s2 = core.sigma_n_sq(sample, theta, b, fe)
    v = draw_multipliers(MultiplierScheme("mammen"), sample.n, replicate_rng(seed, 0))
    reduced = bootstrap_process_known(sample, theta, s2, b, fe, grid, v)

    table = core.kernel_table(b, fe, max_freq=float(np.max(np.abs(grid.points))))
    u, kv, wts = table
    # G_n by quadrature as well, so nothing on the direct side uses the identity
    gn = np.mean([moment_by_quadrature(0, grid.points, w, b, fe, table) for w in sample.w], axis=0)
    total = np.zeros(len(grid), dtype=complex)
    for vi, yi, wi in zip(v, sample.y, sample.w):
        x = wi + b * u
        mark = ((yi - theta(x)) ** 2 - s2) * kv * wts * b
        weight = np.exp(1j * np.outer(grid.points, x)) - gn[:, None]
        total += vi * (weight @ mark)
    direct = np.sqrt(sample.n) * total / sample.n
    return rel_err(reduced, direct)


def mammen_moments(draws=400_000, seed=1):
    v = draw_multipliers(MultiplierScheme("mammen", seed), draws)
    support_ok = bool(np.all((v == MAMMEN_LOW) | (v == MAMMEN_HIGH)))
    m1, m2, m3 = (float(np.mean(v**k)) for k in (1, 2, 3))
    se = np.sqrt(np.array([np.var(v), np.var(v**2), np.var(v**3)]) / draws)
    return support_ok, (m1, m2, m3), se


def pi_epsilon_unbiased(law="laplace", var=1.0 / 3.0, t=1.3, draws=200_000, seed=7):
    """Monte Carlo mean of Pi_eps in standard-error units."""
    rng = np.random.default_rng(seed)
    if law == "laplace":
        fe = laplace_cf(var)
        d = rng.laplace(0, np.sqrt(var / 2), draws) - rng.laplace(0, np.sqrt(var / 2), draws)
    else:
        fe = gaussian_cf(var)
        d = rng.normal(0, np.sqrt(var), draws) - rng.normal(0, np.sqrt(var), draws)
    vals = pi_epsilon(t, d, fe)
    return float(np.mean(vals) / (np.std(vals) / np.sqrt(draws)))


def known_bootstrap_mean_z(B=2000, seed=3):
    """Max over the grid of |mean of bootstrap values| / SE (real and imaginary parts)."""
    from deconvhet.simulation import DgpSpec, generate

    sample = generate(DgpSpec("linear", 0, 300, "ordinary"), seed)
    fe = laplace_cf(1.0 / 3.0)
    theta = MeanModel((1.0, 1.0))
    b = 0.5
    grid = FrequencyGrid.uniform(-0.5, 0.5, 11)
    s2 = core.sigma_n_sq(sample, theta, b, fe)
    rows = np.stack([
        draw_multipliers(MultiplierScheme("mammen"), sample.n, replicate_rng(seed, j)) for j in range(B)
    ])
    vals = bootstrap_process_known(sample, theta, s2, b, fe, grid, rows)
    z = []
    for part in (vals.real, vals.imag):
        se = part.std(axis=0) / np.sqrt(B)
        live = se > 1e-12
        z.append(np.max(np.abs(part.mean(axis=0)[live]) / se[live]))
    return float(max(z))


def symmetry_and_zero(seed):
    """Conjugate-symmetry and plug-in-zero residuals of one process."""
    rng = np.random.default_rng(seed)
    sample, theta, fe, b, grid = random_instance(rng)
    theta = MeanModel(theta.theta[:2])
    # raw plug-in: tiny random samples may give a negative value, which the
    # public function rejects but which does not affect either property
    s2 = float(core.observation_terms(sample, theta, 0.0, b, fe, np.zeros(1))[:, 0].mean().real)
    p = core.empirical_process(sample, theta, s2, b, fe, grid)
    v = p.values
    sym = float(np.max(np.abs(v - np.conj(v[::-1]))))
    zero = abs(v[grid.zero_index()])
    return sym, zero


def parallel_determinism():
    """Known and unknown bootstraps and the process with 1 vs 3 workers."""
    from deconvhet.bootstrap import run_bootstrap
    from deconvhet.error_cf import EstimatedCF
    from deconvhet.simulation import DgpSpec, generate

    sample = generate(DgpSpec("linear", 0, 700, "ordinary", True), 11)
    theta = MeanModel((1.0, 1.0))
    grid = FrequencyGrid.uniform(-0.4, 0.4, 21)
    same = True
    for fe in (laplace_cf(1.0 / 3.0), EstimatedCF(sample.replicates)):
        s2 = core.sigma_n_sq(sample, theta, 0.7, fe)
        p1 = core.empirical_process(sample, theta, s2, 0.7, fe, grid, workers=1)
        p3 = core.empirical_process(sample, theta, s2, 0.7, fe, grid, workers=3)
        same &= np.array_equal(p1.values, p3.values)
        b1 = run_bootstrap(sample, theta, 0.7, fe, grid, p1, B=99, seed=5, workers=1)
        b3 = run_bootstrap(sample, theta, 0.7, fe, grid, p1, B=99, seed=5, workers=3)
        same &= np.array_equal(b1.ks_reps, b3.ks_reps) and np.array_equal(b1.cvm_reps, b3.cvm_reps)
    return bool(same)
