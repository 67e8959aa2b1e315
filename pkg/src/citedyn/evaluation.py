"""Goodness-of-fit and forecast-error measures, plus their table exports."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

WITHIN = "within_one_sigma"
BEYOND = "beyond_one_sigma"


@dataclass
class WksScore:
    paper_id: str
    model: str
    w: float


def weighted_ks(actual, predicted, window=None, paper_id: str = "", model: str = "") -> WksScore:
    """Largest normalized gap between actual and predicted counts on integer ``t``.

    ``actual`` is a history (or its counts); ``predicted`` is indexed by the
    same ``t``. The default window is ``(0, T)`` with T the last year.
    """
    if hasattr(actual, "counts"):
        paper_id = paper_id or actual.paper_id
        actual = actual.counts
    c = np.asarray(actual, dtype=np.float64)
    chat = np.asarray(predicted, dtype=np.float64)
    t0, t1 = window if window is not None else (0, len(c) - 1)
    c, chat = c[t0 : t1 + 1], chat[t0 : t1 + 1]
    if len(chat) != len(c):
        raise ValueError("predicted does not cover the window")
    denom = np.sqrt((1.0 + c) * (c[-1] - c + 1.0))
    return WksScore(paper_id, model, float(np.max(np.abs(c - chat) / denom)))


@dataclass
class PwHistogram:
    class_index: int
    model: str
    bin_width: float
    density: np.ndarray  # P(w) on bins [k*bw, (k+1)*bw)
    n: int

    @property
    def bin_left(self) -> np.ndarray:
        return np.arange(len(self.density)) * self.bin_width


def _histogram(values, bin_width):
    v = np.asarray(values, dtype=np.float64)
    idx = np.floor(v / bin_width).astype(np.int64)
    counts = np.bincount(idx, minlength=int(idx.max()) + 1)
    return counts / (len(v) * bin_width)


def pw_distribution(scores, assignment, bin_width: float = 0.02) -> list:
    """Normalized histogram of w per (class, model); each integrates to one."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    classes = assignment.as_dict() if hasattr(assignment, "as_dict") else dict(assignment)
    groups = defaultdict(list)
    for s in scores:
        groups[(classes[s.paper_id], s.model)].append(s.w)
    return [
        PwHistogram(cls, model, bin_width, _histogram(ws, bin_width), len(ws))
        for (cls, model), ws in sorted(groups.items())
    ]


@dataclass
class MapeEntry:
    group: object
    epsilon: float
    n: int
    center: float = math.nan


@dataclass
class MapeReport:
    grouping: str
    entries: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {e.group: e.epsilon for e in self.entries}


def mape(actuals, predictions, groups=None, t_eval: int | None = None, grouping: str = "by_class") -> MapeReport:
    """Mean |c - c_hat| / c per group.

    ``actuals`` holds c at the evaluation year, or histories when ``t_eval``
    is given. ``groups`` labels each paper; ``None`` puts everyone in one group.
    """
    if t_eval is not None:
        c = np.asarray([np.asarray(a.counts if hasattr(a, "counts") else a)[t_eval] for a in actuals], float)
    else:
        c = np.asarray(actuals, dtype=np.float64)
    chat = np.asarray(predictions, dtype=np.float64)
    if c.shape != chat.shape:
        raise ValueError("actuals and predictions differ in length")
    if np.any(c <= 0):
        raise ValueError("MAPE needs positive actual counts")
    keys = np.zeros(len(c), dtype=int) if groups is None else np.asarray(groups)
    err = np.abs(c - chat) / c
    entries = []
    for g in sorted(set(keys.tolist())):
        sel = keys == g
        entries.append(MapeEntry(g, float(err[sel].mean()), int(sel.sum())))
    return MapeReport(grouping, entries)


def log_bins(values, n_bins: int = 20):
    """Logarithmic edges over ``[min, max]`` of positive ``values`` and bin indices."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if not lo > 0:
        raise ValueError("log bins need positive values")
    if hi == lo:
        hi = lo * (1 + 1e-9)
    edges = np.geomspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, n_bins - 1)
    return edges, idx


def mape_by_citation_bin(actual, predicted, n_bins: int = 20) -> MapeReport:
    edges, idx = log_bins(actual, n_bins)
    rep = mape(actual, predicted, idx, grouping="by_citation_bin")
    for e in rep.entries:
        e.center = float(math.sqrt(edges[e.group] * edges[e.group + 1]))
    return rep


@dataclass
class ScatterBin:
    bin_lo: float
    bin_hi: float
    bin_center: float  # mean actual count in the bin
    mean_pred: float
    std_pred: float
    n: int
    flag: str
    low_n: bool


@dataclass
class BinnedScatter:
    bins: list
    overestimation_fraction: float

    @property
    def within_fraction(self) -> float:
        ok = [b for b in self.bins if not b.low_n]
        return sum(b.flag == WITHIN for b in ok) / len(ok) if ok else math.nan


def binned_scatter(actual, predicted, n_bins: int = 20, min_n: int = 3) -> BinnedScatter:
    """Mean and spread of predictions per logarithmic bin of actual counts.

    A bin is flagged within one sigma when its mean prediction is no further
    than the predictions' standard deviation from the bin's mean actual count.
    Bins with fewer than ``min_n`` papers are kept but marked ``low_n``.
    """
    c = np.asarray(actual, dtype=np.float64)
    chat = np.asarray(predicted, dtype=np.float64)
    edges, idx = log_bins(c, n_bins)
    bins = []
    for b in range(n_bins):
        sel = idx == b
        n = int(sel.sum())
        if n == 0:
            continue
        center = float(c[sel].mean())
        mean_pred = float(chat[sel].mean())
        std_pred = float(chat[sel].std())
        flag = WITHIN if abs(mean_pred - center) <= std_pred else BEYOND
        bins.append(ScatterBin(float(edges[b]), float(edges[b + 1]), center, mean_pred, std_pred, n, flag, n < min_n))
    return BinnedScatter(bins, float(np.mean(chat > c)))


# ------------------------------------------------------------ exports

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows) -> None:
    """CSV at ``path`` and the same table whitespace-separated next to it (``.dat``)."""
    rows = [[_fmt(v) for v in r] for r in rows]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    dat = path[:-4] + ".dat" if path.endswith(".csv") else path + ".dat"
    with open(dat, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            fh.write(" ".join(x.replace(" ", "_") if x else "-" for x in r) + "\n")


def pw_rows(histograms):
    for h in histograms:
        for left, p in zip(h.bin_left, h.density):
            yield [h.class_index, h.model, left, left + 0.5 * h.bin_width, p, h.n]


PW_HEADER = ["class", "model", "w_left", "w_center", "density", "n"]
SCATTER_HEADER = ["model", "bin_lo", "bin_hi", "bin_center", "mean_pred", "std_pred", "n", "flag", "low_n"]
MAPE_HEADER = ["model", "grouping", "group", "center", "epsilon", "n"]
