"""CSV ingestion, run configuration and report persistence."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .data import MIN_OBS, FrequencyGrid, Sample
from .error_cf import gaussian_cf, laplace_cf
from .exceptions import ConfigurationError, MissingColumn, NonNumericCell, TooFewRows

__all__ = [
    "ErrorSpec",
    "RunConfig",
    "load_csv",
    "write_sample_csv",
    "parse_error_spec",
    "parse_grid",
    "format_report",
    "report_items",
    "atomic_write",
]

MEAN_FAMILIES = ("constant", "linear")


@dataclass(frozen=True)
class ErrorSpec:
    """Parsed ``--error`` value: a known law with its variance, or unknown."""

    law: str
    variance: float | None = None

    @property
    def known(self):
        return self.law != "unknown"

    def cf(self):
        if self.law == "laplace":
            return laplace_cf(self.variance)
        if self.law == "gaussian":
            return gaussian_cf(self.variance)
        return "unknown"

    def __str__(self):
        return "unknown" if not self.known else f"known:{self.law}:var={self.variance!r}"


def parse_error_spec(text):
    """Parse ``known:laplace:var=V``, ``known:gaussian:var=V``,
    ``known:gaussian:sd=S`` (``sd`` is also accepted for laplace) or ``unknown``.
    """
    text = text.strip()
    if text == "unknown":
        return ErrorSpec("unknown")
    parts = text.split(":")
    if len(parts) != 3 or parts[0] != "known" or parts[1] not in ("laplace", "gaussian"):
        raise ConfigurationError(
            f"bad error spec {text!r}; expected known:laplace:var=V, known:gaussian:var=V, "
            "known:gaussian:sd=S or unknown"
        )
    key, _, raw = parts[2].partition("=")
    if key not in ("var", "sd"):
        raise ConfigurationError(f"bad error spec {text!r}: parameter must be var= or sd=")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigurationError(f"bad error spec {text!r}: {raw!r} is not a number") from None
    if not math.isfinite(value) or value <= 0:
        raise ConfigurationError(f"bad error spec {text!r}: {key} must be positive")
    return ErrorSpec(parts[1], value if key == "var" else value * value)


def parse_grid(text):
    """Parse ``lo:hi:count`` into a :class:`FrequencyGrid`, or ``auto`` into None.

    ``count`` must be odd and at least 5 so a symmetric grid contains 0.
    """
    if text is None or text.strip() == "auto":
        return None
    try:
        lo, hi, count = text.split(":")
        lo, hi = float(lo), float(hi)
        count_f = float(count)
    except ValueError:
        raise ConfigurationError(f"bad grid {text!r}; expected lo:hi:count") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise ConfigurationError(f"bad grid {text!r}: need finite lo < hi")
    if count_f != int(count_f) or count_f < 5 or int(count_f) % 2 == 0:
        raise ConfigurationError(f"bad grid {text!r}: count must be an odd integer >= 5")
    return FrequencyGrid.uniform(lo, hi, int(count_f))


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one test run on a data file."""

    data: str
    error: ErrorSpec
    y_col: str = "y"
    w_col: str = "w"
    wrep_col: str | None = None
    mean: str = "linear"
    bandwidth: float | None = None
    bandwidth_c: float = 1.0
    bandwidth_rule: str | None = None
    grid: FrequencyGrid | None = None
    B: int = 199
    alphas: tuple = (0.05,)
    seed: int = 0
    out: str | None = None
    kv_out: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mean not in MEAN_FAMILIES:
            raise ConfigurationError(f"mean must be one of {MEAN_FAMILIES}, got {self.mean!r}")
        if not self.error.known and not self.wrep_col:
            raise ConfigurationError("error spec 'unknown' needs a replicate column (--wrep-col)")
        if self.bandwidth is not None and not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigurationError("bandwidth must be finite and positive")
        if not (math.isfinite(self.bandwidth_c) and self.bandwidth_c > 0):
            raise ConfigurationError("bandwidth constant c must be finite and positive")
        if self.bandwidth_rule not in (None, "ordinary", "supersmooth"):
            raise ConfigurationError("bandwidth rule must be ordinary or supersmooth")
        if int(self.B) != self.B or self.B < 1:
            raise ConfigurationError("bootstrap replicate count must be a positive integer")
        if not self.alphas:
            raise ConfigurationError("at least one alpha is required")
        for a in self.alphas:
            if not 0.0 < a < 0.5:
                raise ConfigurationError(f"alpha must lie in (0, 0.5), got {a}")
            if self.B < 1.0 / a - 1.0 - 1e-9:
                raise ConfigurationError(f"B={self.B} is too small for alpha={a}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")


def load_csv(path, y_col="y", w_col="w", wrep_col=None):
    """Read a sample from a headed CSV file.

    Raises
    ------
    MissingColumn
        A configured column is absent from the header.
    NonNumericCell
        A cell does not parse as a finite number (rows are 1-based data rows,
        the header being row 0).
    TooFewRows
        Fewer than 5 data rows.
    """
    cols = [y_col, w_col] + ([wrep_col] if wrep_col else [])
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot open data file {path!r}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TooFewRows(f"{path}: file is empty") from None
        index = {}
        for c in cols:
            if c not in header:
                raise MissingColumn(f"{path}: column {c!r} not found (header: {', '.join(header)})")
            index[c] = header.index(c)
        values = {c: [] for c in cols}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            for c in cols:
                k = index[c]
                cell = row[k].strip() if k < len(row) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(row_no, c, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCell(row_no, c, cell)
                values[c].append(v)
    n = len(values[y_col])
    if n < MIN_OBS:
        raise TooFewRows(f"{path}: need at least {MIN_OBS} data rows, found {n}")
    return Sample(
        np.array(values[y_col]),
        np.array(values[w_col]),
        np.array(values[wrep_col]) if wrep_col else None,
    )


def write_sample_csv(path, sample, y_col="y", w_col="w", wrep_col="w_rep"):
    """Write a sample with full float precision (``repr`` round-trips exactly)."""
    cols = [y_col, w_col] + ([wrep_col] if sample.has_replicates else [])
    arrays = [sample.y, sample.w] + ([sample.w_rep] if sample.has_replicates else [])
    lines = [",".join(cols)]
    for row in zip(*arrays):
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return f"{x:.10g}"


def report_items(report, config=None):
    """Flat ``(key, value)`` pairs describing a :class:`TestReport`."""
    items = [
        ("n", str(report.n)),
        ("error", str(config.error) if config else report.error),
        ("mean", report.family),
        ("theta", " ".join(_fmt(t) for t in report.theta)),
        ("sigma_eps_sq", _fmt(report.sigma_eps_sq)),
        ("bandwidth", _fmt(report.bandwidth)),
        ("grid", f"{_fmt(report.grid.lo)}:{_fmt(report.grid.hi)}:{len(report.grid)}"),
        ("sigma_n_sq", _fmt(report.sigma_n_sq)),
        ("ks", _fmt(report.ks)),
        ("cvm", _fmt(report.cvm)),
        ("ks_pvalue", _fmt(report.ks_pvalue)),
        ("cvm_pvalue", _fmt(report.cvm_pvalue)),
        ("bootstrap", str(report.B)),
        ("seed", str(report.seed)),
        ("replicate_redraws", str(report.redraws)),
        ("floor_active", str(report.floor_active).lower()),
    ]
    for a in report.alphas:
        tag = f"{a:g}"
        items += [
            (f"ks_crit_{tag}", _fmt(report.ks_crit[a])),
            (f"ks_reject_{tag}", str(report.reject(a, "ks")).lower()),
            (f"cvm_crit_{tag}", _fmt(report.cvm_crit[a])),
            (f"cvm_reject_{tag}", str(report.reject(a, "cvm")).lower()),
        ]
    return items


def format_report(report, config=None, timing=False):
    """Human-readable report: ``key: value`` lines then a per-alpha table."""
    head = [(k, v) for k, v in report_items(report, config) if not k.startswith(("ks_crit", "cvm_crit",
                                                                                   "ks_reject", "cvm_reject"))]
    width = max(len(k) for k, _ in head)
    lines = ["heteroskedasticity test under covariate measurement error", ""]
    lines += [f"{k + ':':<{width + 2}}{v}" for k, v in head]
    if timing:
        lines.append(f"{'seconds:':<{width + 2}}{report.timing.get('total', float('nan')):.3f}")
    lines += ["", f"{'alpha':>7}  {'KS crit':>12}  {'KS reject':>9}  {'CvM crit':>12}  {'CvM reject':>10}"]
    for a in report.alphas:
        lines.append(
            f"{a:>7g}  {report.ks_crit[a]:>12.6g}  {'yes' if report.reject(a, 'ks') else 'no':>9}  "
            f"{report.cvm_crit[a]:>12.6g}  {'yes' if report.reject(a, 'cvm') else 'no':>10}"
        )
    return "\n".join(lines) + "\n"
