"""Measurement-error characteristic functions.

Every CF object exposes value, analytic first/second derivatives and the
reciprocal ``1/fe`` with its derivatives (the quantity the deconvolution
kernel actually needs). All supported variants are real and even.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DegenerateCF,
    EmptyReplicates,
    LengthMismatch,
    NonPositiveVariance,
)

__all__ = [
    "DEFAULT_FLOOR",
    "ErrorCF",
    "PolyReciprocalCF",
    "GaussianCF",
    "EstimatedCF",
    "ReplicateSet",
    "laplace_cf",
    "gaussian_cf",
    "no_error_cf",
    "estimate_cf",
    "estimate_cf_raw",
    "perturb_cf",
    "pi_epsilon",
    "cosine_moments",
    "root_abs_derivatives",
]

DEFAULT_FLOOR = 0.05
# exp(z) overflows double precision just above z = 709
_UNDERFLOW = 700.0


class ErrorCF:
    """Interface shared by all CF variants."""

    kind = "generic"

    def __call__(self, t):
        return self.derivatives(t)[0]

    def derivatives(self, t):
        """Return ``(f, f', f'')`` at ``t``."""
        raise NotImplementedError

    def inverse(self, t):
        return self.inverse_derivatives(t)[0]

    def inverse_derivatives(self, t):
        """Return ``(1/f, (1/f)', (1/f)'')`` at ``t``."""
        f0, f1, f2 = self.derivatives(t)
        if np.any(f0 == 0.0):
            raise DegenerateCF("characteristic function vanishes")
        r0 = 1.0 / f0
        return r0, -f1 * r0**2, (2.0 * f1 * f1 * r0 - f2) * r0**2


@dataclass(frozen=True)
class PolyReciprocalCF(ErrorCF):
    """Ordinary smooth CF ``1 / (c0 + c1 t + ... + ca t**a)`` with ``c0 = 1``.

    Odd coefficients must vanish: a real CF of a real-valued error is even.
    """

    coeffs: tuple = (1.0,)
    kind: str = field(default="ordinary", init=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be a non-empty finite sequence")
        if c[0] != 1.0:
            raise ValueError("leading constant coefficient must equal 1")
        if np.any(c[1::2] != 0.0):
            raise ValueError("odd coefficients must be zero for a real, even CF")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in c))
        # P(t) = sum c_k t^k must not vanish on the real line
        c = np.trim_zeros(c, "b")
        if c.size > 1:
            roots = np.roots(c[::-1])
            real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))]
            if real.size:
                raise ValueError("denominator polynomial has a real root")

    @property
    def variance(self):
        return 2.0 * self.coeffs[2] if len(self.coeffs) > 2 else 0.0

    def _poly(self, t):
        c = np.asarray(self.coeffs)
        p0 = np.polynomial.polynomial.polyval(t, c)
        d1 = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
        d2 = np.polynomial.polynomial.polyder(d1) if d1.size > 1 else np.zeros(1)
        return p0, np.polynomial.polynomial.polyval(t, d1), np.polynomial.polynomial.polyval(t, d2)

    def derivatives(self, t):
        t = np.asarray(t, dtype=float)
        p0, p1, p2 = self._poly(t)
        f0 = 1.0 / p0
        return f0, -p1 * f0**2, (2.0 * p1 * p1 * f0 - p2) * f0**2

    def inverse_derivatives(self, t):
        t = np.asarray(t, dtype=float)
        p0, p1, p2 = self._poly(t)
        return p0 + 0.0 * t, p1 + 0.0 * t, p2 + 0.0 * t


@dataclass(frozen=True)
class GaussianCF(ErrorCF):
    """Supersmooth CF ``exp(-mu t**2)`` (normal error, variance ``2 mu``)."""

    mu: float
    kind: str = field(default="supersmooth", init=False)

    def __post_init__(self):
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise NonPositiveVariance(f"mu must be positive, got {self.mu}")

    @property
    def variance(self):
        return 2.0 * self.mu

    def derivatives(self, t):
        t = np.asarray(t, dtype=float)
        mu = self.mu
        f0 = np.exp(-mu * t * t)
        return f0, -2.0 * mu * t * f0, (4.0 * mu * mu * t * t - 2.0 * mu) * f0

    def inverse_derivatives(self, t):
        t = np.asarray(t, dtype=float)
        mu = self.mu
        if np.any(mu * t * t > _UNDERFLOW):
            raise DegenerateCF("Gaussian CF underflows; 1/fe is not representable")
        r0 = np.exp(mu * t * t)
        return r0, 2.0 * mu * t * r0, (2.0 * mu + 4.0 * mu * mu * t * t) * r0


def laplace_cf(variance):
    """Laplace error with the given variance: ``1 / (1 + (variance/2) t**2)``."""
    if not np.isfinite(variance) or variance <= 0:
        raise NonPositiveVariance(f"variance must be positive, got {variance}")
    return PolyReciprocalCF((1.0, 0.0, variance / 2.0))


def gaussian_cf(variance):
    """Normal error with the given variance: ``exp(-(variance/2) t**2)``."""
    if not np.isfinite(variance) or variance <= 0:
        raise NonPositiveVariance(f"variance must be positive, got {variance}")
    return GaussianCF(variance / 2.0)


def no_error_cf():
    """The identity CF ``fe = 1`` (covariate observed without error)."""
    return PolyReciprocalCF((1.0,))


@dataclass(frozen=True, eq=False)
class ReplicateSet:
    """Differences ``W - W^r`` of a pair of repeated measurements."""

    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float).ravel()
        if d.size == 0:
            raise EmptyReplicates("replicate set is empty")
        if d.size < 2:
            raise EmptyReplicates("at least two replicate pairs are required")
        if not np.all(np.isfinite(d)):
            raise ValueError("replicate differences must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)

    @classmethod
    def from_measurements(cls, w, w_rep):
        w = np.asarray(w, dtype=float)
        w_rep = np.asarray(w_rep, dtype=float)
        if w.shape != w_rep.shape:
            raise LengthMismatch("w and w_rep must have equal length")
        return cls(w - w_rep)

    @property
    def n(self):
        return self.deltas.size


def cosine_moments(deltas, t, weights=None):
    """Weighted cosine mean ``C(t) = (1/n) sum v_j cos(t d_j)`` and derivatives.

    ``weights`` may be ``None``, a length-n vector or a ``(B, n)`` matrix; the
    result then has shape ``t.shape`` or ``(B,) + t.shape``.
    """
    d = np.asarray(deltas, dtype=float)
    t = np.asarray(t, dtype=float)
    n = d.size
    arg = np.multiply.outer(d, t)
    cos = np.cos(arg)
    sin = np.sin(arg)
    d_col = d.reshape((n,) + (1,) * t.ndim)
    if weights is None:
        c0 = cos.mean(axis=0)
        c1 = -(d_col * sin).mean(axis=0)
        c2 = -(d_col**2 * cos).mean(axis=0)
        return c0, c1, c2
    v = np.asarray(weights, dtype=float)
    if v.shape[-1] != n:
        raise LengthMismatch(f"expected {n} multipliers, got {v.shape[-1]}")
    flat_cos = cos.reshape(n, -1)
    flat_sin = sin.reshape(n, -1)
    dc = d[:, None]
    c0 = v @ flat_cos / n
    c1 = -(v @ (dc * flat_sin)) / n
    c2 = -(v @ (dc * dc * flat_cos)) / n
    shape = v.shape[:-1] + t.shape
    return c0.reshape(shape), c1.reshape(shape), c2.reshape(shape)


def root_abs_derivatives(c0, c1, c2, floor):
    """Derivatives of ``f = |C|**0.5`` given ``C, C', C''``.

    Raises DegenerateCF where ``f`` is within the floor (derivative undefined
    or unreliable there).
    """
    f0 = np.sqrt(np.abs(c0))
    if np.any(f0 <= floor):
        raise DegenerateCF(f"estimated CF is at or below the floor {floor} where derivatives are needed")
    s = np.sign(c0)
    f1 = s * c1 / (2.0 * f0)
    f2 = s * c2 / (2.0 * f0) - c1 * c1 / (4.0 * f0**3)
    return f0, f1, f2


@dataclass(frozen=True, eq=False)
class EstimatedCF(ErrorCF):
    """``max(floor, |(1/n) sum v_j cos(t d_j)|**0.5)`` from replicate differences.

    With ``weights=None`` this is the replicate estimator; with multiplier
    weights it is the perturbed bootstrap version.
    """

    reps: ReplicateSet
    floor: float = DEFAULT_FLOOR
    weights: np.ndarray | None = None
    kind: str = field(default="estimated", init=False)

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError("floor must be positive")
        if self.weights is not None:
            v = np.asarray(self.weights, dtype=float).ravel()
            if v.size != self.reps.n:
                raise LengthMismatch(f"expected {self.reps.n} multipliers, got {v.size}")
            v.setflags(write=False)
            object.__setattr__(self, "weights", v)

    def raw(self, t):
        c0 = cosine_moments(self.reps.deltas, t, self.weights)[0]
        return np.sqrt(np.abs(c0))

    def __call__(self, t):
        return np.maximum(self.floor, self.raw(t))

    def derivatives(self, t):
        c = cosine_moments(self.reps.deltas, t, self.weights)
        return root_abs_derivatives(*c, self.floor)

    def inverse(self, t):
        return 1.0 / self(t)

    @property
    def variance(self):
        return sigma_eps_sq_from_deltas(self.reps.deltas)


def sigma_eps_sq_from_deltas(deltas):
    d = np.asarray(deltas, dtype=float)
    return float(np.sum(d * d) / (2.0 * d.size))


def estimate_cf_raw(reps, t):
    """Unfloored replicate estimate ``|(1/n) sum cos(t d_j)|**0.5``."""
    return EstimatedCF(reps).raw(t)


def estimate_cf(reps, t, floor=DEFAULT_FLOOR):
    """Replicate-based CF estimate, floored at ``floor``."""
    return EstimatedCF(reps, floor=floor)(t)


def perturb_cf(reps, multipliers, t, floor=DEFAULT_FLOOR):
    """Multiplier-perturbed CF estimate ``|(1/n) sum V_j cos(t d_j)|**0.5``, floored."""
    return EstimatedCF(reps, floor=floor, weights=multipliers)(t)


def pi_epsilon(t, delta, true_cf):
    """``1/2 - cos(t delta) / (2 fe(t)**2)``; mean zero for symmetric i.i.d. errors."""
    f = np.asarray(true_cf(t), dtype=float)
    if np.any(f == 0.0):
        raise DegenerateCF("true CF vanishes at the requested t")
    return 0.5 - np.cos(np.asarray(t) * np.asarray(delta)) / (2.0 * f * f)
