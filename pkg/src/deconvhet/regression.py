"""Corrected least squares for polynomial means with a mismeasured covariate."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .exceptions import EmptyReplicates, NonInvertibleCorrectedMoments

__all__ = ["MeanModel", "FAMILIES", "fit_corrected_ls", "sigma_eps_from_replicates"]

FAMILIES = {"constant": 0, "linear": 1, "quadratic": 2}

# fourth moment of the error in units of variance**2
_KURTOSIS = {"gaussian": 3.0, "laplace": 6.0}


@dataclass(frozen=True)
class MeanModel:
    """Polynomial mean ``g(x) = theta[0] + theta[1] x + ...``."""

    theta: tuple

    def __post_init__(self):
        th = tuple(float(v) for v in np.atleast_1d(self.theta))
        if not 1 <= len(th) <= 3:
            raise ValueError("polynomial degree must be 0, 1 or 2")
        if not all(np.isfinite(th)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "theta", th)

    @property
    def degree(self):
        return len(self.theta) - 1

    @property
    def family(self):
        return {0: "constant", 1: "linear", 2: "quadratic"}[self.degree]

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.theta)

    def residual_poly(self, y):
        """Coefficients (ascending in x) of ``(y_i - g(x))**2`` for each ``y_i``.

        Returns an ``(n, 2*degree+1)`` array.
        """
        y = np.asarray(y, dtype=float)
        p = -np.asarray(self.theta)
        p = np.broadcast_to(p, y.shape + p.shape).copy()
        p[:, 0] += y
        out = np.zeros((y.size, 2 * self.degree + 1))
        for j in range(p.shape[1]):
            for k in range(p.shape[1]):
                out[:, j + k] += p[:, j] * p[:, k]
        return out


def _unbiased_powers(w, degree, sigma_eps_sq, error_law):
    """Columns ``t_k(W)`` with ``E[t_k(W) | X] = X**k`` for k = 0..degree."""
    m = {0: 1.0, 1: 0.0, 2: sigma_eps_sq, 3: 0.0,
         4: _KURTOSIS[error_law] * sigma_eps_sq**2}
    cols = [np.ones_like(w)]
    for k in range(1, degree + 1):
        tk = w**k
        for j in range(k):
            tk = tk - comb(k, j) * m[k - j] * cols[j]
        cols.append(tk)
    return cols


def fit_corrected_ls(sample, family="linear", sigma_eps_sq=0.0, error_law="gaussian"):
    """Fit a polynomial mean by corrected least squares.

    The normal equations of ordinary least squares are rebuilt from
    unbiased estimates of ``E[X**k]`` and ``E[Y X**k]``; with a linear mean
    this is ``slope = S_WY / (S_WW - sigma_eps_sq)``.

    Parameters
    ----------
    sample : Sample
        Observations; only ``y`` and ``w`` are used.
    family : {"constant", "linear", "quadratic"}
    sigma_eps_sq : float
        Measurement-error variance (0 gives ordinary least squares).
    error_law : {"gaussian", "laplace"}
        Only used by the quadratic family, which needs the error's fourth
        moment.

    Returns
    -------
    MeanModel
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown mean family {family!r}")
    degree = FAMILIES[family]
    y, w = sample.y, sample.w
    if y.size <= degree + 1:
        raise ValueError(f"need more than {degree + 1} observations")
    if sigma_eps_sq < 0:
        raise ValueError("sigma_eps_sq must be non-negative")

    if degree == 0:
        return MeanModel((float(np.mean(y)),))
    if degree == 1:
        wc = w - w.mean()
        s_ww = np.mean(wc * wc) - sigma_eps_sq
        if not s_ww > 0:
            raise NonInvertibleCorrectedMoments(
                f"corrected covariate variance is not positive ({s_ww:.4g})"
            )
        slope = np.mean(wc * (y - y.mean())) / s_ww
        return MeanModel((float(y.mean() - slope * w.mean()), float(slope)))

    cols = _unbiased_powers(w, 2 * degree, sigma_eps_sq, error_law)
    mom = np.array([c.mean() for c in cols])
    design = np.array([[mom[j + k] for k in range(degree + 1)] for j in range(degree + 1)])
    rhs = np.array([np.mean(y * cols[j]) for j in range(degree + 1)])
    try:
        np.linalg.cholesky(design)
    except np.linalg.LinAlgError as exc:
        raise NonInvertibleCorrectedMoments("corrected moment matrix is not positive definite") from exc
    return MeanModel(tuple(np.linalg.solve(design, rhs)))


def sigma_eps_from_replicates(reps):
    """Error variance from replicate differences: ``sum(d**2) / (2n)``."""
    d = np.asarray(getattr(reps, "deltas", reps), dtype=float)
    if d.size == 0:
        raise EmptyReplicates("replicate set is empty")
    return float(np.sum(d * d) / (2.0 * d.size))
