"""Flat-top kernel and deconvolution-kernel integrals.

Conventions used throughout the package::

    K(x)        = (1/2pi) int exp(-itx) kft(t) dt
    Kb(x)       = (1/2pi b) int exp(-itx) kft(t) / fe(t/b) dt
    int Kb((x-w)/b) exp(ix xi) dx = exp(iw xi) kft(b xi) / fe(xi)

The last identity (and its xi-derivatives) is what makes the test statistics
computable without any quadrature when the integrand is polynomial in x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCF, QuadratureNotConverged, UnsupportedOrder

__all__ = [
    "FlatTopKernel",
    "FLAT_TOP",
    "QuadratureConfig",
    "check_bandwidth",
    "flat_top_kft",
    "flat_top_kft_derivatives",
    "decon_kernel",
    "plain_kernel",
    "transfer_derivatives",
    "fourier_weight",
    "fourier_moment",
]

_FLAT = 0.05
# exp(-z) underflows to 0.0 in double precision well before z = 745
_UNDERFLOW = 700.0


def flat_top_kft(t):
    """Fourier transform of the infinite-order flat-top kernel.

    Equal to 1 on ``|t| <= 0.05``, to 0 on ``|t| >= 1`` and to
    ``exp(-exp(-(|t|-0.05)**-2) / (|t|-1)**2)`` in between.
    """
    return flat_top_kft_derivatives(t, order=0)[0]


def flat_top_kft_derivatives(t, order=2):
    """Return ``(kft, kft', kft'')`` evaluated at ``t`` (up to ``order``).

    Derivatives are exact, piecewise closed forms; they vanish on the flat
    top and outside the support.
    """
    t = np.asarray(t, dtype=float)
    s = np.abs(t)
    k0 = np.where(s <= _FLAT, 1.0, 0.0)
    k1 = np.zeros_like(s)
    k2 = np.zeros_like(s)

    mid = (s > _FLAT) & (s < 1.0)
    if np.any(mid):
        sm = s[mid]
        u = sm - _FLAT
        inv_u2 = 1.0 / (u * u)
        d = 1.0 / (sm - 1.0) ** 2
        # a = exp(-1/u^2) is exactly 0 in double precision below this threshold
        live = inv_u2 < _UNDERFLOW
        a = np.where(live, np.exp(-np.where(live, inv_u2, 0.0)), 0.0)
        q = -a * d

        km = np.where(q > -_UNDERFLOW, np.exp(q), 0.0)
        ok = live & (q > -_UNDERFLOW)
        k0[mid] = np.where(live, km, 1.0)

        if order >= 1:
            uu = np.where(ok, u, 1.0)
            aa = np.where(ok, a, 0.0)
            dd = np.where(ok, d, 0.0)
            sm1 = np.where(ok, sm - 1.0, -1.0)
            a1 = aa * 2.0 / uu**3
            a2 = aa * (4.0 / uu**6 - 6.0 / uu**4)
            d1 = -2.0 / sm1**3
            d2 = 6.0 / sm1**4
            q1 = -(a1 * dd + aa * d1)
            q2 = -(a2 * dd + 2.0 * a1 * d1 + aa * d2)
            kk = np.where(ok, km, 0.0)
            sign = np.sign(t[mid])
            k1[mid] = sign * kk * q1
            k2[mid] = kk * (q2 + q1 * q1)

    return k0, k1, k2


@dataclass(frozen=True)
class FlatTopKernel:
    """Infinite-order kernel given through its Fourier transform."""

    c0: float = 1.0

    def kft(self, t):
        return flat_top_kft(t)

    def kft_derivatives(self, t):
        return flat_top_kft_derivatives(t)


FLAT_TOP = FlatTopKernel()


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Simpson settings for integrals over ``[-c0, c0]``."""

    nodes_per_unit: int = 2048
    refinement_factor: int = 2
    rel_tol: float = 1e-8

    def __post_init__(self):
        if int(self.nodes_per_unit) < 1:
            raise ValueError("nodes_per_unit must be a positive integer")
        if int(self.refinement_factor) < 2:
            raise ValueError("refinement_factor must be >= 2")
        if not 0.0 < self.rel_tol <= 1e-3:
            raise ValueError("rel_tol must lie in (0, 1e-3]")


def check_bandwidth(b):
    b = float(b)
    if not np.isfinite(b) or b <= 0.0:
        raise ValueError(f"bandwidth must be finite and positive, got {b}")
    return b


def _simpson_weights(n_intervals, lo, hi):
    n = n_intervals + (n_intervals % 2)
    h = (hi - lo) / n
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return np.linspace(lo, hi, n + 1), w * (h / 3.0)


def _kernel_integral(x, b, fe, kernel, n_intervals, chunk=512):
    c0 = kernel.c0
    t, wts = _simpson_weights(n_intervals, -c0, c0)
    k = kernel.kft(t)
    live = k > 0.0
    ratio = np.zeros_like(t)
    ratio[live] = k[live] * fe.inverse(t[live] / b)
    if not np.all(np.isfinite(ratio)):
        raise DegenerateCF("kft(t)/fe(t/b) is not finite on the kernel support")
    g = ratio * wts
    flat = x.ravel()
    re = np.empty(flat.size)
    im = np.empty(flat.size)
    for start in range(0, flat.size, chunk):
        arg = np.outer(flat[start:start + chunk], t)
        re[start:start + chunk] = np.cos(arg) @ g
        im[start:start + chunk] = -(np.sin(arg) @ g)
    out = (re + 1j * im).reshape(x.shape)
    return out / (2.0 * np.pi * b)


def decon_kernel(x, b, fe, kernel=FLAT_TOP, quad=None):
    """Deconvolution kernel ``Kb(x)`` by composite Simpson quadrature.

    Parameters
    ----------
    x : array_like
        Evaluation points (dimensionless, ``x = (position - w) / b``).
    b : float
        Bandwidth.
    fe : ErrorCF
        Measurement-error characteristic function.
    kernel : FlatTopKernel
    quad : QuadratureConfig, optional

    Returns
    -------
    ndarray
        Real kernel values, same shape as ``x``.

    Raises
    ------
    QuadratureNotConverged
        If refining the node count changes any value by more than
        ``rel_tol * (1 + |value|)``, or the imaginary residue exceeds it.
    """
    quad = quad or QuadratureConfig()
    b = check_bandwidth(b)
    x = np.asarray(x, dtype=float)
    n0 = int(quad.nodes_per_unit * 2 * kernel.c0)
    coarse = _kernel_integral(x, b, fe, kernel, n0)
    fine = _kernel_integral(x, b, fe, kernel, n0 * int(quad.refinement_factor))
    tol = quad.rel_tol * (1.0 + np.abs(fine))
    if np.any(np.abs(fine - coarse) > tol):
        worst = float(np.max(np.abs(fine - coarse) / (1.0 + np.abs(fine))))
        raise QuadratureNotConverged(
            f"kernel quadrature changed by {worst:.3g} (relative) under refinement"
        )
    if np.any(np.abs(fine.imag) > tol):
        raise QuadratureNotConverged("kernel quadrature left a non-negligible imaginary part")
    return fine.real


def plain_kernel(x, kernel=FLAT_TOP, quad=None):
    """Kernel ``K(x)``: the inverse Fourier transform of ``kft``."""
    from .error_cf import no_error_cf

    return decon_kernel(x, 1.0, no_error_cf(), kernel, quad)


def transfer_derivatives(xi, b, fe, kernel=FLAT_TOP):
    """Return ``(h, h', h'')`` for ``h(xi) = kft(b xi) / fe(xi)``.

    The reciprocal CF is only evaluated where ``kft(b xi) != 0`` so an
    estimated CF is never consulted outside the kernel's pass band.
    """
    xi = np.asarray(xi, dtype=float)
    b = check_bandwidth(b)
    k0, k1, k2 = kernel.kft_derivatives(b * xi)
    h0 = np.zeros_like(xi)
    h1 = np.zeros_like(xi)
    h2 = np.zeros_like(xi)
    live = np.abs(b * xi) < kernel.c0
    if np.any(live):
        r0, r1, r2 = fe.inverse_derivatives(xi[live])
        a0, a1, a2 = k0[live], b * k1[live], b * b * k2[live]
        h0[live] = a0 * r0
        h1[live] = a1 * r0 + a0 * r1
        h2[live] = a2 * r0 + 2.0 * a1 * r1 + a0 * r2
    return h0, h1, h2


def fourier_weight(xi, w, b, fe, kernel=FLAT_TOP):
    """``int Kb((x-w)/b) exp(i x xi) dx = exp(i w xi) kft(b xi) / fe(xi)``.

    ``xi`` and ``w`` broadcast against each other.
    """
    xi = np.asarray(xi, dtype=float)
    w = np.asarray(w, dtype=float)
    xi_b, w_b = np.broadcast_arrays(xi, w)
    k = kernel.kft(b * xi_b)
    h = np.zeros(xi_b.shape)
    live = k != 0.0
    if np.any(live):
        h[live] = k[live] * fe.inverse(xi_b[live])
    return np.exp(1j * w_b * xi_b) * h


def fourier_moment(m, xi, w, b, fe, kernel=FLAT_TOP):
    """``int x**m Kb((x-w)/b) exp(i x xi) dx`` for ``m`` in {0, 1, 2}.

    Computed as ``(-i)**m d^m/dxi^m [exp(i w xi) h(xi)]`` with analytic
    derivatives of ``kft`` and ``1/fe``.
    """
    if m not in (0, 1, 2):
        raise UnsupportedOrder(f"moment order must be 0, 1 or 2, got {m}")
    xi = np.asarray(xi, dtype=float)
    w = np.asarray(w, dtype=float)
    xi_b, w_b = np.broadcast_arrays(xi, w)
    flat_xi = xi_b.ravel()
    h0, h1, h2 = transfer_derivatives(flat_xi, b, fe, kernel)
    h0, h1, h2 = (a.reshape(xi_b.shape) for a in (h0, h1, h2))
    phase = np.exp(1j * w_b * xi_b)
    if m == 0:
        return phase * h0
    if m == 1:
        return phase * (w_b * h0 - 1j * h1)
    return phase * (w_b * w_b * h0 - 2j * w_b * h1 - h2)
