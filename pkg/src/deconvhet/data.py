"""Observed sample and frequency grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .error_cf import ReplicateSet
from .exceptions import ConfigurationError, LengthMismatch, TooFewRows

__all__ = ["Sample", "FrequencyGrid", "MIN_OBS"]

MIN_OBS = 5


def _frozen(a):
    a = np.array(a, dtype=float).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """Response ``y``, mismeasured covariate ``w`` and an optional replicate."""

    y: np.ndarray
    w: np.ndarray
    w_rep: np.ndarray | None = None

    def __post_init__(self):
        y, w = _frozen(self.y), _frozen(self.w)
        if y.size != w.size:
            raise LengthMismatch(f"y has {y.size} values but w has {w.size}")
        if y.size < MIN_OBS:
            raise TooFewRows(f"need at least {MIN_OBS} observations, got {y.size}")
        arrays = [y, w]
        if self.w_rep is not None:
            wr = _frozen(self.w_rep)
            if wr.size != y.size:
                raise LengthMismatch(f"w_rep has {wr.size} values but y has {y.size}")
            object.__setattr__(self, "w_rep", wr)
            arrays.append(wr)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ConfigurationError("sample contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @property
    def n(self):
        return self.y.size

    @property
    def has_replicates(self):
        return self.w_rep is not None

    @property
    def replicates(self):
        if self.w_rep is None:
            raise ConfigurationError("sample has no replicate measurements")
        return ReplicateSet.from_measurements(self.w, self.w_rep)

    def shifted(self, c):
        """Same sample with every covariate measurement shifted by ``c``."""
        wr = None if self.w_rep is None else self.w_rep + c
        return Sample(self.y, self.w + c, wr)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Ordered frequencies covering ``[lo, hi]``; includes 0 when in range."""

    points: np.ndarray

    def __post_init__(self):
        p = _frozen(self.points)
        if p.size < 2:
            raise ConfigurationError("frequency grid needs at least two points")
        if not np.all(np.isfinite(p)) or not np.all(np.diff(p) > 0):
            raise ConfigurationError("grid points must be finite and strictly increasing")
        object.__setattr__(self, "points", p)

    @classmethod
    def uniform(cls, lo=-1.0, hi=1.0, count=41):
        if not lo < hi:
            raise ConfigurationError("grid needs lo < hi")
        if count < 2:
            raise ConfigurationError("grid needs at least two points")
        pts = np.linspace(lo, hi, int(count))
        if lo == -hi and int(count) % 2 == 1:
            # mirror the upper half so the grid is exactly symmetric
            half = pts[int(count) // 2:]
            half[0] = 0.0
            return cls(np.concatenate([-half[:0:-1], half]))
        if lo <= 0.0 <= hi:
            # snap the point nearest zero, or insert zero if it is not a node
            k = int(np.argmin(np.abs(pts)))
            if abs(pts[k]) < 1e-12 * (hi - lo):
                pts[k] = 0.0
            else:
                pts = np.sort(np.append(pts, 0.0))
        return cls(pts)

    @property
    def lo(self):
        return float(self.points[0])

    @property
    def hi(self):
        return float(self.points[-1])

    def __len__(self):
        return self.points.size

    @property
    def is_symmetric(self):
        return bool(np.array_equal(self.points, -self.points[::-1]))

    def zero_index(self):
        hit = np.flatnonzero(self.points == 0.0)
        return int(hit[0]) if hit.size else None
