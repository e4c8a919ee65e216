"""Monte Carlo size/power studies.

Designs: ``Y = g(X) + sigma(X) U`` with ``X, U ~ N(0, 1)`` independent and
``g`` linear (``1 + x``) or constant (``1``). Variance functions:

    dgp 0: 1
    dgp 1: 1 + |cos(pi x)|**2
    dgp 2: 1 + exp|x|

The covariate is observed as ``W = X + e`` (and ``W_r = X + e_r`` when
replicates are requested) with Laplace or normal error of variance 1/3.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .data import FrequencyGrid, Sample
from .error_cf import gaussian_cf, laplace_cf
from .exceptions import DeconvHetError
from .pipeline import heteroskedasticity_test, rule_of_thumb_bandwidth

__all__ = [
    "ERROR_VARIANCE",
    "DgpSpec",
    "Cell",
    "CellOutcome",
    "StudyResult",
    "generate",
    "rule_of_thumb_bandwidth",
    "cell_seed",
    "run_cell",
    "run_study",
    "PRESETS",
    "preset_cells",
]

ERROR_VARIANCE = 1.0 / 3.0
CASES = {"ordinary": "laplace", "supersmooth": "gaussian"}
CSV_HEADER = ["model", "case", "dgp", "n", "c", "alpha", "stat", "rate", "reps", "B", "seed"]


@dataclass(frozen=True)
class DgpSpec:
    model: str = "linear"
    dgp: int = 0
    n: int = 500
    case: str = "ordinary"
    with_replicates: bool = False

    def __post_init__(self):
        if self.model not in ("linear", "constant"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.dgp not in (0, 1, 2):
            raise ValueError(f"unknown dgp {self.dgp!r}")
        if self.case not in CASES:
            raise ValueError(f"unknown error case {self.case!r}")
        if self.n < 50:
            raise ValueError("n must be at least 50")


def variance_function(dgp, x):
    if dgp == 0:
        return np.ones_like(x)
    if dgp == 1:
        return 1.0 + np.abs(np.cos(np.pi * x)) ** 2
    return 1.0 + np.exp(np.abs(x))


def _draw_error(case, rng, n):
    if case == "ordinary":
        return rng.laplace(0.0, math.sqrt(ERROR_VARIANCE / 2.0), n)
    return rng.normal(0.0, math.sqrt(ERROR_VARIANCE), n)


def generate(spec, seed):
    """Simulate one sample; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    n = spec.n
    x = rng.standard_normal(n)
    u = rng.standard_normal(n)
    mean = 1.0 + x if spec.model == "linear" else np.ones(n)
    y = mean + np.sqrt(variance_function(spec.dgp, x)) * u
    w = x + _draw_error(spec.case, rng, n)
    w_rep = x + _draw_error(spec.case, rng, n) if spec.with_replicates else None
    return Sample(y, w, w_rep)


def true_error_cf(case):
    return laplace_cf(ERROR_VARIANCE) if case == "ordinary" else gaussian_cf(ERROR_VARIANCE)


@dataclass(frozen=True)
class Cell:
    """One study cell: a design plus the test configuration applied to it."""

    spec: DgpSpec
    c: float = 1.0
    known: bool = True

    @property
    def case_label(self):
        return self.spec.case if self.known else f"{self.spec.case}-unknown"

    def key(self):
        s = self.spec
        return f"{s.model}|{self.case_label}|{s.dgp}|{s.n}|{self.c!r}"


def cell_seed(master, cell, rep, stream=0):
    """Seed for one rep of one cell: hash of the cell coordinates + master seed."""
    digest = hashlib.sha256(cell.key().encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, *words], spawn_key=(rep, stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _one_rep(args):
    cell, rep, B, alphas, master, grid_spec = args
    spec = cell.spec
    sample = generate(spec, cell_seed(master, cell, rep, 0))
    error = true_error_cf(spec.case) if cell.known else "unknown"
    family = "linear" if spec.model == "linear" else "constant"
    grid = FrequencyGrid.uniform(*grid_spec) if grid_spec else None
    try:
        rep_ = heteroskedasticity_test(sample, error, family=family, c=cell.c, rule=spec.case,
                                       grid=grid, B=B, alphas=alphas,
                                       seed=cell_seed(master, cell, rep, 1))
    except DeconvHetError as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    return {
        "ks": [rep_.reject(a, "ks") for a in alphas],
        "cvm": [rep_.reject(a, "cvm") for a in alphas],
        "ks_p": rep_.ks_pvalue,
        "cvm_p": rep_.cvm_pvalue,
        "floor": rep_.floor_active,
    }


@dataclass
class StudyResult:
    """Rejection frequencies, one row per (cell, alpha, statistic)."""

    rows: list
    seed: int
    errors: dict

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: row[k] for k in CSV_HEADER})
        return buf.getvalue()

    def rate(self, cell, alpha, stat):
        for row in self.rows:
            if row["cell"] == cell.key() and row["alpha"] == alpha and row["stat"] == stat:
                return row["rate"]
        raise KeyError((cell.key(), alpha, stat))

    def table(self):
        lines = [f"{'model':<9}{'case':<22}{'dgp':>4}{'n':>6}{'c':>6}{'alpha':>7}"
                 f"{'KS':>8}{'CvM':>8}{'reps':>6}{'sec':>8}"]
        seen = {}
        for row in self.rows:
            seen.setdefault((row["cell"], row["alpha"]), {})[row["stat"]] = row
        for (_, alpha), d in seen.items():
            r = d.get("ks") or d.get("cvm")
            lines.append(
                f"{r['model']:<9}{r['case']:<22}{r['dgp']:>4}{r['n']:>6}{r['c']:>6g}{alpha:>7g}"
                f"{d['ks']['rate']:>8.3f}{d['cvm']['rate']:>8.3f}{r['reps']:>6}{r['runtime']:>8.1f}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class CellOutcome:
    """Result of one cell.

    ``rates[stat][alpha]`` is the rejection frequency over successful reps;
    ``floor_active`` counts reps where the estimated-CF floor bound on the grid.
    """

    rates: dict
    n_ok: int
    errors: list
    floor_active: int = 0


def run_cell(cell, reps, B=199, alphas=(0.05,), seed=0, workers=None, grid_spec=None):
    """Simulate ``reps`` samples for one cell and test each; returns a :class:`CellOutcome`."""
    alphas = tuple(alphas)
    jobs = [(cell, r, B, alphas, seed, grid_spec) for r in range(reps)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_one_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        outs = [_one_rep(j) for j in jobs]
    good = [o for o in outs if "error" not in o]
    errors = [o["error"] for o in outs if "error" in o]
    rates = {}
    for stat in ("ks", "cvm"):
        rates[stat] = {
            a: (float(np.mean([o[stat][k] for o in good])) if good else float("nan"))
            for k, a in enumerate(alphas)
        }
    return CellOutcome(rates, len(good), errors, sum(o["floor"] for o in good))


def run_study(cells, reps, B=199, alphas=(0.05,), seed=0, workers=None, grid_spec=None,
              progress=None):
    """Run every cell; a failing cell is recorded and the study continues."""
    rows = []
    errors = {}
    for cell in cells:
        t0 = time.perf_counter()
        try:
            outcome = run_cell(cell, reps, B, alphas, seed, workers, grid_spec)
        except Exception as exc:  # noqa: BLE001 - isolate cell failures
            errors[cell.key()] = [f"{type(exc).__name__}: {exc}"]
            outcome = CellOutcome({s: {a: float("nan") for a in alphas} for s in ("ks", "cvm")}, 0, [])
        if outcome.errors:
            errors[cell.key()] = outcome.errors
        rates, n_ok = outcome.rates, outcome.n_ok
        runtime = time.perf_counter() - t0
        for a in alphas:
            for stat in ("ks", "cvm"):
                rows.append({
                    "cell": cell.key(),
                    "model": cell.spec.model,
                    "case": cell.case_label,
                    "dgp": cell.spec.dgp,
                    "n": cell.spec.n,
                    "c": cell.c,
                    "alpha": a,
                    "stat": stat,
                    "rate": rates[stat][a],
                    "reps": n_ok,
                    "B": B,
                    "seed": seed,
                    "runtime": runtime,
                    "floor_active": outcome.floor_active,
                })
        if progress:
            progress(cell, rates, runtime)
    return StudyResult(rows, seed, errors)


def _grid_cells(models, cases, dgps, ns, cs, known_flags):
    return [
        Cell(DgpSpec(m, d, n, case, with_replicates=not known), c, known)
        for known in known_flags
        for m in models
        for case in cases
        for n in ns
        for c in cs
        for d in dgps
    ]


PRESETS = {
    # (cells, reps, B, alphas)
    "smoke": lambda: (_grid_cells(["linear"], ["ordinary"], [0], [100], [1.0], [True]), 10, 19, (0.05,)),
    "acceptance": lambda: (
        [
            Cell(DgpSpec("linear", 0, 500, "ordinary"), 1.0),
            Cell(DgpSpec("linear", 0, 500, "supersmooth"), 1.0),
            Cell(DgpSpec("linear", 2, 500, "ordinary"), 1.0),
            Cell(DgpSpec("linear", 1, 1000, "ordinary"), 1.0),
            Cell(DgpSpec("linear", 0, 500, "ordinary", True), 1.0, known=False),
            Cell(DgpSpec("linear", 0, 500, "ordinary"), 0.1),
            Cell(DgpSpec("linear", 0, 500, "ordinary"), 0.5),
        ],
        500, 199, (0.05,),
    ),
    "table1": lambda: (
        _grid_cells(["linear"], ["ordinary", "supersmooth"], [0, 1, 2], [500, 1000], [0.1, 0.5, 1.0], [True]),
        1000, 199, (0.05,),
    ),
    "full": lambda: (
        _grid_cells(["linear", "constant"], ["ordinary", "supersmooth"], [0, 1, 2], [250, 500, 1000],
                    [float(c) for c in range(1, 11)], [True, False]),
        1000, 199, (0.01, 0.05, 0.1),
    ),
}


def preset_cells(name):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]()


def cell_to_dict(cell):
    d = asdict(cell.spec)
    d.update(c=cell.c, known=cell.known)
    return d
