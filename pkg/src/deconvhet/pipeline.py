"""End-to-end heteroskedasticity test on one sample."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import core
from .bootstrap import run_bootstrap
from .data import FrequencyGrid
from .error_cf import DEFAULT_FLOOR, EstimatedCF, ErrorCF
from .exceptions import DegenerateCF, DeconvHetError, StageError
from .kernels import FLAT_TOP, check_bandwidth
from .regression import fit_corrected_ls, sigma_eps_from_replicates

__all__ = ["DEFAULT_PASSBAND", "default_grid", "rule_of_thumb_bandwidth", "TestReport",
           "heteroskedasticity_test"]

# Largest |b xi| / c0 used by the default frequency grid. On |t| <= 0.3 the
# flat-top kft'' stays below 4e-3, so the finite-bandwidth smoothing bias of
# the process, of order b**2 kft''(b xi), is negligible next to its noise.
DEFAULT_PASSBAND = 0.3


def rule_of_thumb_bandwidth(case, n, sigma_eps_sq, c=1.0):
    """Rule-of-thumb bandwidth.

    ``ordinary``: ``c (5 s**4 / n)**(1/27)``;
    ``supersmooth``: ``c (4 s**2 / log n)**(1/2)``, with ``s**2`` the error
    variance.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not c > 0:
        raise ValueError("c must be positive")
    if not sigma_eps_sq > 0:
        raise ValueError("sigma_eps_sq must be positive")
    if case == "ordinary":
        return c * (5.0 * sigma_eps_sq**2 / n) ** (1.0 / 27.0)
    if case == "supersmooth":
        return c * math.sqrt(4.0 * sigma_eps_sq / math.log(n))
    raise ValueError(f"unknown smoothness case {case!r}")


def default_grid(b, kernel=FLAT_TOP, count=41, passband=DEFAULT_PASSBAND):
    """Symmetric grid on ``[-passband c0 / b, passband c0 / b]``.

    Outside this band ``kft(b xi)`` bends away from 1 and the process picks
    up a deterministic term ``-g'(x)**2 b**2 kft''(b xi) E exp(iX xi)`` that
    does not vanish under the null.
    """
    b = check_bandwidth(b)
    half = passband * kernel.c0 / b
    return FrequencyGrid.uniform(-half, half, count)


@dataclass(frozen=True, eq=False)
class TestReport:
    """Everything a test run produces."""

    __test__ = False

    n: int
    error: str
    family: str
    theta: tuple
    sigma_eps_sq: float
    bandwidth: float
    grid: FrequencyGrid
    sigma_n_sq: float
    ks: float
    cvm: float
    B: int
    alphas: tuple
    ks_crit: dict
    cvm_crit: dict
    ks_pvalue: float
    cvm_pvalue: float
    seed: int
    redraws: int = 0
    floor_active: bool = False
    method: str = "fast"
    timing: dict = field(default_factory=dict)

    def reject(self, alpha, stat="ks"):
        if stat == "ks":
            return self.ks > self.ks_crit[alpha]
        return self.cvm > self.cvm_crit[alpha]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DeconvHetError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc
    except (ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def heteroskedasticity_test(sample, error, family="linear", bandwidth=None, c=1.0, rule=None,
                            grid=None, B=199, alphas=(0.05,), seed=0, floor=DEFAULT_FLOOR,
                            kernel=FLAT_TOP, workers=None, error_law=None):
    """Run the full test: fit, plug-in variance, process, statistics, bootstrap.

    Parameters
    ----------
    sample : Sample
    error : ErrorCF or "unknown"
        Known measurement-error CF, or ``"unknown"`` to estimate it from the
        sample's replicate column.
    family : {"constant", "linear", "quadratic"}
    bandwidth : float, optional
        Explicit bandwidth; otherwise the rule of thumb scaled by ``c``.
    rule : {"ordinary", "supersmooth"}, optional
        Bandwidth rule; defaults to the smoothness class of a known CF and to
        ``ordinary`` for an estimated one.
    grid : FrequencyGrid, optional
        Defaults to :func:`default_grid` for the bandwidth in use.

    Returns
    -------
    TestReport
    """
    clock = {}
    t0 = time.perf_counter()

    if isinstance(error, str):
        if error != "unknown":
            raise ValueError(f"error must be an ErrorCF or 'unknown', got {error!r}")
        reps = _stage("replicates", lambda: sample.replicates)
        sig_eps = _stage("replicates", sigma_eps_from_replicates, reps)
        fe = EstimatedCF(reps, floor=floor)
        label = "unknown"
        rule = rule or "ordinary"
    elif isinstance(error, ErrorCF):
        fe = error
        sig_eps = float(fe.variance)
        label = fe.kind
        rule = rule or fe.kind
    else:
        raise TypeError("error must be an ErrorCF or 'unknown'")
    if error_law is None:
        error_law = "gaussian" if getattr(fe, "kind", "") == "supersmooth" else "laplace"

    theta = _stage("fit", fit_corrected_ls, sample, family, sig_eps, error_law)
    if bandwidth is None:
        b = _stage("bandwidth", rule_of_thumb_bandwidth, rule, sample.n, sig_eps, c)
    else:
        b = _stage("bandwidth", check_bandwidth, bandwidth)
    if grid is None:
        grid = default_grid(b, kernel)
    clock["setup"] = time.perf_counter() - t0

    floor_active = False
    if isinstance(fe, EstimatedCF):
        live = np.abs(b * grid.points) < kernel.c0
        floor_active = bool(np.any(fe.raw(np.append(grid.points[live], 0.0)) <= fe.floor))

    t1 = time.perf_counter()
    method = "auto"
    try:
        sig_n = _stage("variance", core.sigma_n_sq, sample, theta, b, fe, kernel)
        process = _stage("process", core.empirical_process, sample, theta, sig_n, b, fe, grid, kernel,
                         workers=workers)
    except StageError as exc:
        if not isinstance(exc.cause, DegenerateCF):
            raise
        method = "generic"
        sig_n = _stage("variance", core.sigma_n_sq, sample, theta, b, fe, kernel, method="generic")
        process = _stage("process", core.empirical_process, sample, theta, sig_n, b, fe, grid, kernel,
                         method="generic")
    clock["statistic"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    boot = _stage("bootstrap", run_bootstrap, sample, theta, b, fe, grid, process, B, alphas, seed,
                  sigma_sq=sig_n, kernel=kernel, workers=workers)
    clock["bootstrap"] = time.perf_counter() - t2
    clock["total"] = time.perf_counter() - t0

    return TestReport(
        n=sample.n,
        error=label,
        family=theta.family,
        theta=theta.theta,
        sigma_eps_sq=float(sig_eps),
        bandwidth=float(b),
        grid=grid,
        sigma_n_sq=float(sig_n),
        ks=float(process.ks),
        cvm=float(process.cvm),
        B=int(B),
        alphas=boot.alphas,
        ks_crit=boot.ks_crit,
        cvm_crit=boot.cvm_crit,
        ks_pvalue=boot.ks_pvalue,
        cvm_pvalue=boot.cvm_pvalue,
        seed=int(seed),
        redraws=boot.redraws,
        floor_active=floor_active,
        method="fast" if method == "auto" and theta.degree <= 1 else "generic",
        timing=clock,
    )
