"""Figures for the FDR simulation (rendered off-screen)."""

from __future__ import annotations

import os
from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

if TYPE_CHECKING:
    from starcert.fdrsim import SimReport


def plot_fdr(report: SimReport, path: str | os.PathLike[str]) -> Path:
    labels = ["%d%%" % round(100 * c.null_fraction) for c in report.collections]
    inv = [c.mean_fdr_investing for c in report.collections]
    unc = [c.mean_fdr_uncorrected for c in report.collections]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, unc, 0.4, label="no control")
    ax.bar(x + 0.2, inv, 0.4, label="alpha-investing")
    ax.axhline(report.config.params.alpha, color="green", lw=1.5, label="alpha")
    ax.set_xticks(x, labels)
    ax.set_xlabel("true null hypotheses")
    ax.set_ylabel("mean FDR")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_wealth(report: SimReport, path: str | os.PathLike[str]) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in report.collections:
        ax.plot(np.arange(len(c.mean_wealth)), c.mean_wealth, label="%d%% null" % round(100 * c.null_fraction))
    ax.set_xlabel("tests computed")
    ax.set_ylabel("remaining alpha-wealth")
    ax.set_ylim(bottom=0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
