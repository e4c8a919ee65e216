"""Multiplier bootstrap critical values.

Known error CF: Mammen two-point multipliers on the per-observation
integrals, with the weight ``exp(ix xi)`` centred by ``G_n(xi)``. Because
``G_n`` does not depend on x this reduces to

    S*(xi) - G_n(xi) S*(0).

Unknown error CF: the replicate-based CF estimate is perturbed with unit-mean
exponential multipliers, the variance and process are recomputed with the
perturbed kernel, and the replicates are centred by their across-replicate
mean before reduction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import core
from .error_cf import EstimatedCF, cosine_moments
from .exceptions import DegenerateCF, InsufficientReplicates
from .kernels import FLAT_TOP, check_bandwidth, fourier_weight

__all__ = [
    "MAMMEN_LOW",
    "MAMMEN_HIGH",
    "MAMMEN_P_LOW",
    "MultiplierScheme",
    "BootstrapOutcome",
    "draw_multipliers",
    "replicate_rng",
    "g_n",
    "bootstrap_process_known",
    "bootstrap_process_unknown",
    "perturbed_transfer",
    "critical_value",
    "p_value",
    "run_bootstrap",
]

_SQRT5 = math.sqrt(5.0)
MAMMEN_LOW = (1.0 - _SQRT5) / 2.0
MAMMEN_HIGH = (1.0 + _SQRT5) / 2.0
MAMMEN_P_LOW = (_SQRT5 + 1.0) / (2.0 * _SQRT5)

_ROW_BLOCK = 32
MAX_REDRAWS = 10


@dataclass(frozen=True)
class MultiplierScheme:
    kind: str = "mammen"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mammen", "exponential"):
            raise ValueError(f"unknown multiplier kind {self.kind!r}")


def replicate_rng(seed, index, attempt=0):
    """Generator for bootstrap replicate ``index`` (independent of scheduling)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, attempt)))


def draw_multipliers(scheme, n, rng=None):
    """I.i.d. multipliers of length ``n``.

    ``mammen``: two-point law with mean 0 and variance 1.
    ``exponential``: standard exponential, mean 1 and variance 1.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(scheme.seed)
    if scheme.kind == "mammen":
        return np.where(rng.random(n) < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)
    return rng.standard_exponential(n)


@dataclass(frozen=True, eq=False)
class BootstrapOutcome:
    """Replicated statistics with critical values and p-values per alpha."""

    ks_reps: np.ndarray
    cvm_reps: np.ndarray
    alphas: tuple
    ks_crit: dict
    cvm_crit: dict
    ks_pvalue: float
    cvm_pvalue: float
    ks_observed: float
    cvm_observed: float
    redraws: int = 0
    scheme: str = "mammen"
    extra: dict = field(default_factory=dict)

    @property
    def B(self):
        return self.ks_reps.size

    def reject(self, alpha, stat="ks"):
        if stat == "ks":
            return self.ks_observed > self.ks_crit[alpha]
        return self.cvm_observed > self.cvm_crit[alpha]


def g_n(grid, sample, b, fe, kernel=FLAT_TOP):
    """``G_n(xi) = (kft(b xi)/fe(xi)) (1/n) sum exp(i W_j xi)``."""
    xi = getattr(grid, "points", grid)
    xi = np.asarray(xi, dtype=float)
    ecf = np.exp(1j * np.outer(sample.w, xi)).mean(axis=0)
    return fourier_weight(xi, 0.0, b, fe, kernel) * ecf


def _grid_with_zero(xi):
    xi = np.asarray(xi, dtype=float)
    return np.append(xi, 0.0)


def bootstrap_process_known(sample, theta, sigma_sq, b, fe, grid, multipliers, kernel=FLAT_TOP):
    """Projection-corrected multiplier process ``sqrt(n)(S*(xi) - G_n(xi) S*(0))``.

    ``multipliers`` is a length-n vector or a ``(B, n)`` matrix; the output
    has shape ``(len(grid),)`` or ``(B, len(grid))`` accordingly.
    """
    b = check_bandwidth(b)
    xi = getattr(grid, "points", grid)
    ext = _grid_with_zero(xi)
    terms = core.observation_terms(sample, theta, sigma_sq, b, fe, ext, kernel)
    v = np.asarray(multipliers, dtype=float)
    s_star = v @ terms / sample.n
    gn = g_n(xi, sample, b, fe, kernel)
    proj = s_star[..., :-1] - s_star[..., -1:] * gn
    return np.sqrt(sample.n) * proj


def perturbed_transfer(reps, multipliers, xi, b, floor, kernel=FLAT_TOP):
    """``h*, h*', h*''`` for every row of multipliers, plus a per-row validity mask.

    A row is invalid when its perturbed CF falls to the floor inside the
    kernel pass band, where the derivatives are undefined.
    """
    xi = np.asarray(xi, dtype=float)
    v = np.atleast_2d(np.asarray(multipliers, dtype=float))
    k0, k1, k2 = kernel.kft_derivatives(b * xi)
    live = np.abs(b * xi) < kernel.c0
    shape = (v.shape[0], xi.size)
    h0, h1, h2 = (np.zeros(shape) for _ in range(3))
    ok = np.ones(v.shape[0], dtype=bool)
    if np.any(live):
        c0, c1, c2 = cosine_moments(reps.deltas, xi[live], v)
        f0 = np.sqrt(np.abs(c0))
        ok = np.all(f0 > floor, axis=1)
        f0 = np.where(f0 > floor, f0, 1.0)
        s = np.sign(c0)
        f1 = s * c1 / (2.0 * f0)
        f2 = s * c2 / (2.0 * f0) - c1 * c1 / (4.0 * f0**3)
        r0 = 1.0 / f0
        r1 = -f1 * r0**2
        r2 = (2.0 * f1 * f1 * r0 - f2) * r0**2
        a0, a1, a2 = k0[live], b * k1[live], b * b * k2[live]
        h0[:, live] = a0 * r0
        h1[:, live] = a1 * r0 + a0 * r1
        h2[:, live] = a2 * r0 + 2.0 * a1 * r1 + a0 * r2
    return (h0, h1, h2), ok


class _UnknownContext:
    """Data-side quantities shared by every perturbed-CF replicate."""

    def __init__(self, sample, theta, b, grid, floor, kernel):
        self.reps = sample.replicates
        self.b = b
        self.floor = floor
        self.kernel = kernel
        self.n = sample.n
        self.ext = _grid_with_zero(getattr(grid, "points", grid))
        self.q0, self.q1, self.q2 = core._residual_derivatives(sample, theta)
        self.phase = np.exp(1j * np.outer(sample.w, self.ext))
        n = self.n
        self.flat = (
            self.q0 @ self.phase / n,
            -1j * (self.q1 @ self.phase) / n,
            -0.5 * (self.q2 @ self.phase) / n,
            self.phase.mean(axis=0),
        )

    def values(self, v, weight_observations=True):
        (h0, h1, h2), ok = perturbed_transfer(self.reps, v, self.ext, self.b, self.floor, self.kernel)
        n = self.n
        if weight_observations:
            wq = (v * self.q0) @ self.phase / n
            w1 = -1j * ((v * self.q1) @ self.phase) / n
            w2 = -0.5 * ((v * self.q2) @ self.phase) / n
            we = v @ self.phase / n
        else:
            wq, w1, w2, we = self.flat
        sig = (wq[..., -1] * h0[:, -1] + w1[..., -1] * h1[:, -1] + w2[..., -1] * h2[:, -1]).real
        if weight_observations:
            # weighted plug-in: the replicate vanishes at xi = 0 exactly, as
            # the observed process does
            sig = sig / (we[:, -1].real * h0[:, -1])
        sig = np.broadcast_to(sig, (h0.shape[0],))
        vals = (wq - sig[:, None] * we) * h0 + w1 * h1 + w2 * h2
        return np.sqrt(n) * vals[:, :-1], ok


def bootstrap_process_unknown(sample, theta, b, grid, multipliers, floor=None,
                              kernel=FLAT_TOP, weight_observations=True, return_mask=False):
    """Raw perturbed-CF bootstrap process ``sqrt(n) S*_n(xi)`` (not centred).

    The CF estimate is rebuilt with the multipliers as weights; the variance
    plug-in and the process are recomputed with the resulting kernel. With
    ``weight_observations`` the same multiplier also weights observation i
    in the outer sums, so the replicate reflects the sampling variability of
    the squared residuals as well as of the CF estimate. Without it only the
    CF is perturbed. With all multipliers equal to 1 both forms reduce to
    the unknown-CF process.

    Returns an array of shape ``(B, len(grid))`` (or ``(len(grid),)`` for a
    single multiplier vector); with ``return_mask`` also a boolean vector
    marking rows whose perturbed CF stayed above the floor.
    """
    b = check_bandwidth(b)
    if floor is None:
        floor = EstimatedCF(sample.replicates).floor
    ctx = _UnknownContext(sample, theta, b, grid, floor, kernel)
    v = np.asarray(multipliers, dtype=float)
    single = v.ndim == 1
    out, ok = ctx.values(np.atleast_2d(v), weight_observations)
    if single:
        out, ok = out[0], bool(ok[0])
    return (out, ok) if return_mask else out


def critical_value(reps, alpha):
    """The ``ceil(B(1-alpha))``-th order statistic (ascending, 1-based)."""
    reps = np.sort(np.asarray(reps, dtype=float))
    k = math.ceil(round(reps.size * (1.0 - alpha), 9))
    k = min(max(k, 1), reps.size)
    return float(reps[k - 1])


def p_value(reps, observed):
    """Share of replicates at least as large as the observed statistic."""
    reps = np.asarray(reps, dtype=float)
    return float(np.mean(reps >= observed))


def _check_bootstrap_args(B, alphas):
    alphas = tuple(float(a) for a in np.atleast_1d(alphas))
    for a in alphas:
        if not 0.0 < a < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {a}")
        if B < 1.0 / a - 1.0 - 1e-9:
            raise InsufficientReplicates(f"B={B} is too small for alpha={a} (need B >= {1.0 / a - 1.0:g})")
    return alphas


def _known_replicates(sample, theta, sigma_sq, b, fe, grid, B, seed, kernel, workers):
    xi = grid.points
    ext = _grid_with_zero(xi)
    terms = core.observation_terms(sample, theta, sigma_sq, b, fe, ext, kernel)
    gn = g_n(xi, sample, b, fe, kernel)
    scheme = MultiplierScheme("mammen", seed)
    root_n = np.sqrt(sample.n)

    def block(rows):
        v = np.stack([draw_multipliers(scheme, sample.n, replicate_rng(seed, j)) for j in rows])
        s_star = v @ terms / sample.n
        return root_n * (s_star[:, :-1] - s_star[:, -1:] * gn)

    return _run_blocks(block, B, workers), 0


def _unknown_replicates(sample, theta, b, grid, B, seed, floor, kernel, workers, weight_observations):
    scheme = MultiplierScheme("exponential", seed)
    ctx = _UnknownContext(sample, theta, b, grid, floor, kernel)

    def block(rows):
        rows = list(rows)
        v = np.stack([draw_multipliers(scheme, sample.n, replicate_rng(seed, j)) for j in rows])
        vals, ok = ctx.values(v, weight_observations)
        redraws = 0
        for k in np.flatnonzero(~ok):
            # a replicate whose perturbed CF hits the floor is redrawn from
            # its own seed stream, so the result never depends on scheduling
            for attempt in range(1, MAX_REDRAWS + 1):
                redraws += 1
                vk = draw_multipliers(scheme, sample.n, replicate_rng(seed, rows[k], attempt))[None, :]
                row, row_ok = ctx.values(vk, weight_observations)
                if row_ok[0]:
                    vals[k] = row[0]
                    break
            else:
                raise DegenerateCF(
                    f"bootstrap replicate {rows[k]}: perturbed CF hit the floor in {MAX_REDRAWS + 1} draws"
                )
        return vals, redraws

    blocks = [range(i, min(i + _ROW_BLOCK, B)) for i in range(0, B, _ROW_BLOCK)]
    parts = _map_blocks(block, blocks, workers)
    return np.concatenate([p[0] for p in parts], axis=0), sum(p[1] for p in parts)


def _map_blocks(fn, blocks, workers):
    if workers and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, blocks))
    return [fn(r) for r in blocks]


def _run_blocks(fn, B, workers):
    blocks = [range(i, min(i + _ROW_BLOCK, B)) for i in range(0, B, _ROW_BLOCK)]
    return np.concatenate(_map_blocks(fn, blocks, workers), axis=0)


def run_bootstrap(sample, theta, b, fe, grid, observed, B=199, alphas=(0.05,), seed=0,
                  sigma_sq=None, kernel=FLAT_TOP, workers=None, weight_observations=True):
    """Bootstrap the KS and CvM statistics and derive critical values.

    Parameters
    ----------
    fe : ErrorCF
        A known CF selects the Mammen projection bootstrap; an
        :class:`EstimatedCF` selects the perturbed-CF bootstrap.
    observed : TestProcess or TestStatistics
        Observed statistics to compare against.
    sigma_sq : float, optional
        Plug-in variance for the known-CF bootstrap (defaults to the one
        stored on ``observed``).

    Returns
    -------
    BootstrapOutcome
    """
    alphas = _check_bootstrap_args(B, alphas)
    b = check_bandwidth(b)
    if isinstance(fe, EstimatedCF):
        values, redraws = _unknown_replicates(
            sample, theta, b, grid, B, seed, fe.floor, kernel, workers, weight_observations
        )
        values = values - values.mean(axis=0)
        kind = "exponential"
    else:
        if sigma_sq is None:
            sigma_sq = observed.sigma_n_sq
        values, redraws = _known_replicates(sample, theta, sigma_sq, b, fe, grid, B, seed, kernel, workers)
        kind = "mammen"

    ks_reps = np.max(np.abs(values), axis=1)
    cvm_reps = np.trapezoid(np.abs(values) ** 2, grid.points, axis=1)
    ks_obs = float(observed.ks)
    cvm_obs = float(observed.cvm)
    return BootstrapOutcome(
        ks_reps=ks_reps,
        cvm_reps=cvm_reps,
        alphas=alphas,
        ks_crit={a: critical_value(ks_reps, a) for a in alphas},
        cvm_crit={a: critical_value(cvm_reps, a) for a in alphas},
        ks_pvalue=p_value(ks_reps, ks_obs),
        cvm_pvalue=p_value(cvm_reps, cvm_obs),
        ks_observed=ks_obs,
        cvm_observed=cvm_obs,
        redraws=redraws,
        scheme=kind,
    )
