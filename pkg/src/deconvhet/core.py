"""Deconvolved residual-marked empirical process and its KS/CvM reductions.

Two routes compute the same integrals

    I_i(xi) = int [(Y_i - g(x))**2 - sigma2] Kb((x - W_i)/b) exp(i x xi) dx.

The fast path uses the Fourier identity for polynomial integrands: with
``q_i(x) = (Y_i - g(x))**2`` of degree <= 2 and ``h = kft(b.)/fe``,

    I_i(xi) = exp(i W_i xi) [ (q_i(W_i) - sigma2) h - i q_i'(W_i) h' - q_i''/2 h'' ].

The generic path evaluates ``Kb`` by quadrature and integrates over x on a
grid; it handles any polynomial mean and is the brute-force oracle for the
fast path.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import FrequencyGrid, Sample
from .exceptions import NegativeVarianceEstimate, NumericalError
from .kernels import FLAT_TOP, QuadratureConfig, check_bandwidth, decon_kernel, transfer_derivatives
from .regression import MeanModel

__all__ = [
    "TestProcess",
    "TestStatistics",
    "observation_terms",
    "process_components",
    "sigma_n_sq",
    "empirical_process",
    "ks_statistic",
    "cvm_statistic",
    "statistics",
    "kernel_table",
    "generic_sigma_n_sq",
    "generic_process",
    "tree_sum",
]

_IMAG_TOL = 1e-8
_BLOCK = 256


@dataclass(frozen=True, eq=False)
class TestProcess:
    """``sqrt(n) S_n(xi)`` on a frequency grid, with the plug-ins used."""

    __test__ = False

    grid: FrequencyGrid
    values: np.ndarray
    sigma_n_sq: float
    theta: MeanModel

    @property
    def ks(self):
        return ks_statistic(self)

    @property
    def cvm(self):
        return cvm_statistic(self)


@dataclass(frozen=True)
class TestStatistics:
    __test__ = False

    ks: float
    cvm: float


def _fast_path_ok(theta):
    return theta.degree <= 1


def _residual_derivatives(sample, theta):
    """``q(W_i)``, ``q'(W_i)``, ``q''(W_i)`` for ``q_i(x) = (Y_i - g(x))**2``."""
    coef = theta.residual_poly(sample.y)
    w = sample.w
    if coef.shape[1] > 3:
        raise ValueError("fast path requires a mean of degree <= 1")
    c = np.zeros((w.size, 3))
    c[:, : coef.shape[1]] = coef
    q0 = c[:, 0] + c[:, 1] * w + c[:, 2] * w * w
    q1 = c[:, 1] + 2.0 * c[:, 2] * w
    q2 = 2.0 * c[:, 2]
    return q0, q1, q2


def observation_terms(sample, theta, sigma_sq, b, fe, xi, kernel=FLAT_TOP):
    """Per-observation integrals ``I_i(xi)`` as an ``(n, len(xi))`` matrix."""
    xi = np.asarray(xi, dtype=float)
    q0, q1, q2 = _residual_derivatives(sample, theta)
    h0, h1, h2 = transfer_derivatives(xi, b, fe, kernel)
    phase = np.exp(1j * np.outer(sample.w, xi))
    return phase * (
        np.outer(q0 - sigma_sq, h0) - 1j * np.outer(q1, h1) - 0.5 * np.outer(q2, h2)
    )


def process_components(sample, theta, xi):
    """Data-side sums ``(A_q, A_1, A_2, E)`` over observations.

    For any transfer function ``h`` the process is
    ``(A_q - sigma2 * E) h + A_1 h' + A_2 h''``; only ``h`` depends on the
    error CF, which lets a bootstrap swap CFs cheaply.
    """
    xi = np.asarray(xi, dtype=float)
    q0, q1, q2 = _residual_derivatives(sample, theta)
    phase = np.exp(1j * np.outer(sample.w, xi))
    n = sample.n
    a_q = q0 @ phase / n
    a_1 = -1j * (q1 @ phase) / n
    a_2 = -0.5 * (q2 @ phase) / n
    e = phase.mean(axis=0)
    return a_q, a_1, a_2, e


def tree_sum(blocks):
    """Pairwise reduction with a fixed topology (independent of scheduling)."""
    blocks = list(blocks)
    while len(blocks) > 1:
        nxt = [blocks[i] + blocks[i + 1] for i in range(0, len(blocks) - 1, 2)]
        if len(blocks) % 2:
            nxt.append(blocks[-1])
        blocks = nxt
    return blocks[0]


def _blocked_mean(fn, n, workers):
    """Mean over observations of ``fn(slice)`` block sums, deterministic order."""
    slices = [slice(i, min(i + _BLOCK, n)) for i in range(0, n, _BLOCK)]
    if workers and workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, slices))
    else:
        parts = [fn(s) for s in slices]
    return tree_sum(parts) / n


def _check_real(z, what):
    z = complex(z)
    if abs(z.imag) > _IMAG_TOL * (1.0 + abs(z.real)):
        raise NumericalError(f"{what} has a non-negligible imaginary part ({z.imag:.3g})")
    return z.real


def sigma_n_sq(sample, theta, b, fe, kernel=FLAT_TOP, method="auto", quad=None):
    """Plug-in variance ``(1/n) sum int (Y_i - g(x))**2 Kb((x-W_i)/b) dx``.

    Raises
    ------
    NegativeVarianceEstimate
        If the (real) result is negative, which signals a bandwidth/CF
        pathology.
    """
    b = check_bandwidth(b)
    use_fast = method == "fast" or (method == "auto" and _fast_path_ok(theta))
    if use_fast:
        terms = observation_terms(sample, theta, 0.0, b, fe, np.zeros(1), kernel)[:, 0]
        value = _check_real(tree_sum([terms[s].sum() for s in _slices(sample.n)]) / sample.n, "sigma_n^2")
    else:
        value = generic_sigma_n_sq(sample, theta, b, fe, kernel, quad)
    if value < 0:
        raise NegativeVarianceEstimate(f"variance estimate is negative ({value:.4g})")
    return float(value)


def _slices(n):
    return [slice(i, min(i + _BLOCK, n)) for i in range(0, n, _BLOCK)]


def empirical_process(sample, theta, sigma_sq, b, fe, grid, kernel=FLAT_TOP,
                      method="auto", workers=None, quad=None):
    """``sqrt(n) S_n(xi)`` on ``grid``.

    Parameters
    ----------
    method : {"auto", "fast", "generic"}
        ``auto`` uses the closed form whenever the mean has degree <= 1.
    workers : int, optional
        Threads used for the per-observation sums. The reduction order is
        fixed, so the result does not depend on this value.
    """
    b = check_bandwidth(b)
    xi = grid.points
    use_fast = method == "fast" or (method == "auto" and _fast_path_ok(theta))
    if use_fast:
        def block(s):
            sub = _SubSample(sample.y[s], sample.w[s])
            return observation_terms(sub, theta, sigma_sq, b, fe, xi, kernel).sum(axis=0)

        mean = _blocked_mean(block, sample.n, workers)
    else:
        mean = generic_process(sample, theta, sigma_sq, b, fe, xi, kernel, quad)
    return TestProcess(grid, np.sqrt(sample.n) * mean, float(sigma_sq), theta)


class _SubSample:
    """Minimal stand-in for a slice of a Sample (no size validation)."""

    def __init__(self, y, w):
        self.y = y
        self.w = w
        self.n = y.size


def ks_statistic(process):
    """Sup over the grid of ``|sqrt(n) S_n(xi)|``."""
    values = getattr(process, "values", process)
    return float(np.max(np.abs(values)))


def cvm_statistic(process, grid=None):
    """Trapezoid integral of ``|sqrt(n) S_n(xi)|**2`` over the grid."""
    values = getattr(process, "values", process)
    pts = (grid if grid is not None else process.grid).points
    return float(np.trapezoid(np.abs(values) ** 2, pts))


def statistics(process):
    return TestStatistics(ks_statistic(process), cvm_statistic(process))


# ---------------------------------------------------------------------------
# generic (quadrature) path

def kernel_table(b, fe, kernel=FLAT_TOP, quad=None, max_freq=1.0, cutoff=1e-8,
                 max_half_width=1000.0):
    """Tabulate ``Kb(u)`` on a symmetric u-grid wide enough to hold its mass.

    The tail is scanned outward in blocks; the half-width is twice the last
    point where ``|Kb|`` reaches ``cutoff * |Kb(0)|``. ``Kb(u) exp(i b u xi)
    poly(u)`` has its Fourier transform supported in ``|s| <= c0 + b |xi|``,
    so the trapezoid rule on a step below ``pi / (c0 + b max_freq)`` is exact
    up to truncation.

    Returns ``(u, values, weights)``.
    """
    quad = quad or QuadratureConfig(nodes_per_unit=512)
    peak = abs(float(decon_kernel(np.array([0.0]), b, fe, kernel, quad)[0]))
    last_above = 0.0
    hi = 0.0
    while True:
        seg = np.arange(hi + 0.5, hi + 50.0 + 0.25, 0.5)
        hi = float(seg[-1])
        above = seg[np.abs(decon_kernel(seg, b, fe, kernel, quad)) >= cutoff * peak]
        if above.size:
            last_above = float(above[-1])
        if hi >= 2.0 * last_above:
            break
        if hi >= max_half_width:
            raise NumericalError("deconvolution kernel does not decay within the search range")
    half = 2.0 * max(last_above, 5.0)
    step = min(0.25, 0.5 * np.pi / (kernel.c0 + b * abs(max_freq)))
    m = int(np.ceil(half / step))
    u = np.arange(-m, m + 1) * step
    vals = decon_kernel(u, b, fe, kernel, quad)
    wts = np.full(u.size, step)
    wts[0] = wts[-1] = 0.5 * step
    inner = np.abs(u) <= half / 2
    total = np.sum(np.abs(vals) * wts)
    if total > 0 and np.sum(np.abs(vals[~inner]) * wts[~inner]) > 1e-6 * total:
        raise NumericalError("deconvolution kernel mass is not captured by the integration range")
    return u, vals, wts


def generic_process(sample, theta, sigma_sq, b, fe, xi, kernel=FLAT_TOP, quad=None, table=None):
    """Mean over i of ``I_i(xi)`` by nested quadrature (any polynomial mean)."""
    xi = np.asarray(xi, dtype=float)
    if table is None:
        table = kernel_table(b, fe, kernel, quad, max_freq=np.max(np.abs(xi), initial=0.0))
    u, kv, wts = table
    kw = kv * wts * b  # dx = b du
    out = np.zeros(xi.shape, dtype=complex)
    for yi, wi in zip(sample.y, sample.w):
        x = wi + b * u
        resid = (yi - theta(x)) ** 2 - sigma_sq
        out += np.exp(1j * np.outer(xi, x)) @ (resid * kw)
    return out / sample.n


def generic_sigma_n_sq(sample, theta, b, fe, kernel=FLAT_TOP, quad=None, table=None):
    val = generic_process(sample, theta, 0.0, b, fe, np.zeros(1), kernel, quad, table)[0]
    return _check_real(val, "sigma_n^2")
