"""Plaintext simulation of false-discovery control over many synthetic datasets.

Each dataset holds ``attrs`` uniform integer columns in [0, 100], grouped
into consecutive pairs.  A pair is either null (independent columns) or
non-null: its second column is rebuilt as ``(x + u) / 2 + shift`` which both
moves its mean and correlates it with ``x``.  Test ``j`` runs on pair
``j mod (attrs / 2)`` and cycles through the t, correlation and F tests.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from starcert.alpha import AlphaParams, AlphaState, apply_decision, is_rejection, next_alpha
from starcert.circuits import FTEST, PEARSON, TTEST
from starcert.pvalues import test_p_value

DEFAULT_NULL_FRACTIONS = (0.25, 0.5, 0.75, 1.0)
TEST_CYCLE = (TTEST, PEARSON, FTEST)
UNIFORM_SD = math.sqrt((101**2 - 1) / 12)


@dataclass(frozen=True)
class SimConfig:
    null_fractions: tuple[float, ...] = DEFAULT_NULL_FRACTIONS
    datasets: int = 100
    attrs: int = 64
    rows: int = 1000
    tests: int = 64
    params: AlphaParams = field(default_factory=lambda: AlphaParams(0.05, 0.5, 0.0125))
    uncorrected_alpha: float = 0.05
    effect: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "null_fractions", tuple(float(f) for f in self.null_fractions))
        if not self.null_fractions or any(not 0.0 <= f <= 1.0 for f in self.null_fractions):
            raise ValueError("null fractions must lie in [0, 1]")
        if self.datasets < 1 or self.tests < 1 or self.rows < 3:
            raise ValueError("need datasets >= 1, tests >= 1 and rows >= 3")
        if self.attrs < 2 or self.attrs % 2:
            raise ValueError("attrs must be an even number >= 2")
        if not 0.0 < self.uncorrected_alpha < 1.0:
            raise ValueError("uncorrected alpha must lie in (0, 1)")


@dataclass
class CollectionResult:
    null_fraction: float
    fdr_investing: list[float]
    fdr_uncorrected: list[float]
    rejections_investing: list[int]
    rejections_uncorrected: list[int]
    wealth: np.ndarray  # (datasets, tests + 1)
    p_values: np.ndarray  # (datasets, tests)
    is_null: np.ndarray  # (datasets, tests)

    @property
    def mean_fdr_investing(self) -> float:
        return float(np.mean(self.fdr_investing))

    @property
    def mean_fdr_uncorrected(self) -> float:
        return float(np.mean(self.fdr_uncorrected))

    @property
    def mean_wealth(self) -> np.ndarray:
        return self.wealth.mean(axis=0)


@dataclass
class SimReport:
    config: SimConfig
    collections: list[CollectionResult]

    def summary_rows(self) -> list[dict[str, float]]:
        return [{
            "null_fraction": c.null_fraction,
            "mean_fdr_alpha_investing": c.mean_fdr_investing,
            "mean_fdr_uncorrected": c.mean_fdr_uncorrected,
            "mean_rejections_alpha_investing": float(np.mean(c.rejections_investing)),
            "mean_rejections_uncorrected": float(np.mean(c.rejections_uncorrected)),
            "min_wealth": float(c.wealth.min()),
        } for c in self.collections]


def fdr(rejected: Sequence[bool], is_null: Sequence[bool]) -> float:
    """False rejections over all rejections (0 when nothing is rejected)."""
    r = sum(bool(x) for x in rejected)
    if r == 0:
        return 0.0
    v = sum(bool(x) and bool(n) for x, n in zip(rejected, is_null))
    return v / r


def make_dataset(rng: np.random.Generator, rows: int, attrs: int, null_pairs: np.ndarray,
                 effect: float) -> np.ndarray:
    data = rng.integers(0, 101, size=(rows, attrs)).astype(np.float64)
    for pair in np.flatnonzero(~null_pairs):
        x, u = data[:, 2 * pair], data[:, 2 * pair + 1]
        data[:, 2 * pair + 1] = np.clip(np.rint((x + u) / 2 + effect * UNIFORM_SD), 0, 100)
    return data


def statistic(test_id: str, x: np.ndarray, y: np.ndarray) -> float:
    """Plaintext versions of the circuit formulas, in float64.

    The F statistic keeps the circuit's (n - k) within-group divisor, with
    ``n`` the per-group row count.
    """
    n = len(x)
    if test_id == TTEST:
        sp = (x.var(ddof=1) + y.var(ddof=1)) / 2
        return float((x.mean() - y.mean()) / math.sqrt(2 * sp / n))
    if test_id == PEARSON:
        xc, yc = x - x.mean(), y - y.mean()
        return float((xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc)))
    if test_id == FTEST:
        groups = (x, y)
        k = len(groups)
        grand = (x.sum() + y.sum()) / (n * k)
        between = sum(n * (g.mean() - grand) ** 2 for g in groups) / (k - 1)
        within = sum(((g - g.mean()) ** 2).sum() for g in groups) / (n - k)
        return float(between / within)
    raise ValueError("unknown test %r" % test_id)


def run_collection(cfg: SimConfig, null_fraction: float, rng: np.random.Generator) -> CollectionResult:
    pairs = cfg.attrs // 2
    n_null_pairs = round(pairs * null_fraction)
    p_all = np.empty((cfg.datasets, cfg.tests))
    null_all = np.empty((cfg.datasets, cfg.tests), dtype=bool)
    wealth = np.empty((cfg.datasets, cfg.tests + 1))
    fdr_inv, fdr_unc, rej_inv, rej_unc = [], [], [], []
    for d in range(cfg.datasets):
        null_pairs = np.zeros(pairs, dtype=bool)
        null_pairs[rng.permutation(pairs)[:n_null_pairs]] = True
        data = make_dataset(rng, cfg.rows, cfg.attrs, null_pairs, cfg.effect)
        state = AlphaState.initial(cfg.params)
        wealth[d, 0] = state.wealth
        dec_inv, dec_unc, nulls = [], [], []
        for j in range(cfg.tests):
            pair = j % pairs
            test_id = TEST_CYCLE[j % len(TEST_CYCLE)]
            stat = statistic(test_id, data[:, 2 * pair], data[:, 2 * pair + 1])
            p = test_p_value(test_id, stat, cfg.rows, 2)
            a = next_alpha(state, cfg.params)
            reject = is_rejection(p, a)
            state = apply_decision(state, reject, a, cfg.params)
            wealth[d, j + 1] = state.wealth
            p_all[d, j] = p
            dec_inv.append(reject)
            dec_unc.append(p <= cfg.uncorrected_alpha)
            nulls.append(bool(null_pairs[pair]))
        null_all[d] = nulls
        fdr_inv.append(fdr(dec_inv, nulls))
        fdr_unc.append(fdr(dec_unc, nulls))
        rej_inv.append(sum(dec_inv))
        rej_unc.append(sum(dec_unc))
    return CollectionResult(null_fraction, fdr_inv, fdr_unc, rej_inv, rej_unc, wealth, p_all, null_all)


def fdr_sim(cfg: SimConfig | None = None) -> SimReport:
    cfg = cfg or SimConfig()
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(len(cfg.null_fractions))
    out = [run_collection(cfg, f, np.random.default_rng(s)) for f, s in zip(cfg.null_fractions, children)]
    return SimReport(cfg, out)


def write_report(report: SimReport, out_dir: str | os.PathLike[str], plots: bool = True) -> list[Path]:
    """CSV summary and wealth trajectories, plus PNG figures when ``plots``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = out / "fdr_summary.csv"
    rows = report.summary_rows()
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    traj = out / "wealth_trajectory.csv"
    with open(traj, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["test"] + ["null_%g" % c.null_fraction for c in report.collections])
        means = [c.mean_wealth for c in report.collections]
        for j in range(report.config.tests + 1):
            w.writerow([j] + [repr(float(m[j])) for m in means])
    written = [summary, traj]
    if plots:
        from starcert.plotting import plot_fdr, plot_wealth

        written.append(plot_fdr(report, out / "fdr_comparison.png"))
        written.append(plot_wealth(report, out / "wealth_trajectory.png"))
    return written
