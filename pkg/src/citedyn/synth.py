"""Synthetic citation data generated from known model parameters.

Every numeric procedure downstream can be checked against these ground
truths without access to a proprietary corpus.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .citation_data import CitationEvent, CitationHistory, Dataset, IngestReport, PaperRecord
from .models import ModelParams, SirParams, WsbParams, model_tag, params_to_json, sir_counts, wsb_counts

NOISE_MODES = ("none", "poisson")

# front-loaded, gradual, slow, late-rising; early shares roughly 0.55/0.23/0.13/0.02
CLASS_TEMPLATES = (
    WsbParams(2.0, 0.0, 1.0),
    WsbParams(2.25, 0.75, 1.2),
    WsbParams(2.5, 1.25, 1.4),
    WsbParams(3.25, 2.75, 1.4),
)

_EPOCH = dt.date(1960, 1, 1)
_EPOCH_SPAN_DAYS = (dt.date(1968, 12, 31) - _EPOCH).days


@dataclass(frozen=True)
class SynthSpec:
    params: ModelParams
    horizon: int = 50
    noise: str = "none"
    seed: int = 0
    n_papers: int = 1
    param_jitter: float = 0.0

    def __post_init__(self):
        if self.horizon < 1 or self.n_papers < 1:
            raise ValueError("horizon and n_papers must be >= 1")
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}")

    @property
    def model(self) -> str:
        return model_tag(self.params)


@dataclass
class SynthCohort:
    histories: list
    labels: list
    true_params: list
    dataset: Dataset = field(repr=False, default=None)


def model_curve(params: ModelParams, horizon: int) -> np.ndarray:
    """Exact model counts on ``t = 0..horizon`` (WSB takes its t -> 0 limit of 0)."""
    t = np.arange(horizon + 1, dtype=np.float64)
    if isinstance(params, WsbParams):
        return np.r_[0.0, wsb_counts(params, t[1:])]
    if isinstance(params, SirParams):
        return sir_counts(params, t)
    raise TypeError(f"cannot synthesize from {type(params).__name__}")


def _jitter(params: ModelParams, spread: float, rng: np.random.Generator) -> ModelParams:
    if spread <= 0:
        return params
    if isinstance(params, WsbParams):
        f = np.exp(spread * rng.standard_normal(3))
        return replace(params, lam=params.lam * f[0], mu=params.mu * f[1], sigma=params.sigma * f[2])
    f = np.exp(spread * rng.standard_normal(3))
    return replace(params, s0=params.s0 * f[0], beta=params.beta * f[1], gamma=params.gamma * f[2])


def _draw_counts(curve: np.ndarray, noise: str, rng: np.random.Generator) -> np.ndarray:
    if noise == "none":
        return np.rint(curve).astype(np.int64)
    means = np.clip(np.diff(curve, prepend=0.0), 0.0, None)
    return np.cumsum(rng.poisson(means)).astype(np.int64)


def generate_history(spec: SynthSpec, index: int = 0, paper_id: str | None = None):
    """One history from ``spec.params`` (jittered per ``index``); returns ``(history, true_params)``."""
    rng = np.random.default_rng([spec.seed, index])
    params = _jitter(spec.params, spec.param_jitter, rng)
    counts = _draw_counts(model_curve(params, spec.horizon), spec.noise, rng)
    return CitationHistory(paper_id or f"P{index:06d}", counts), params


def generate_cohort(
    n_papers: int,
    templates=CLASS_TEMPLATES,
    noise: str = "none",
    param_jitter: float = 0.0,
    seed: int = 0,
    horizon: int = 50,
) -> SynthCohort:
    """Round-robin draw over ``templates``; labels are 1-based template indices."""
    if n_papers < len(templates):
        raise ValueError(f"need at least {len(templates)} papers")
    histories, labels, truths, papers, events = [], [], [], {}, []
    for k in range(n_papers):
        cls = k % len(templates)
        spec = SynthSpec(templates[cls], horizon, noise, seed, 1, param_jitter)
        hist, params = generate_history(spec, index=k)
        histories.append(hist)
        labels.append(cls + 1)
        truths.append(params)
        rng = np.random.default_rng([seed, k, 1])
        pub = _EPOCH + dt.timedelta(days=int(rng.integers(0, _EPOCH_SPAN_DAYS + 1)))
        papers[hist.paper_id] = PaperRecord(hist.paper_id, pub, "SYN")
        events.extend(history_events(hist, pub))
    report = IngestReport(papers=len(papers), events=len(events))
    return SynthCohort(histories, labels, truths, Dataset(papers, events, report))


def history_events(history: CitationHistory, publication_date: dt.date) -> list:
    """Citation events that rebuild ``history`` exactly: year-t events sit mid-year."""
    increments = np.diff(np.asarray(history.counts), prepend=0)
    out = []
    n = 0
    for year, inc in enumerate(increments):
        day = publication_date + dt.timedelta(days=int((year + 0.5) * 365.25))
        for _ in range(int(inc)):
            out.append(CitationEvent(f"{history.paper_id}-c{n}", history.paper_id, day))
            n += 1
    return out


def write_cohort(cohort: SynthCohort, out_dir) -> dict:
    """Write ``pairs.csv``, ``metadata.csv`` and ``truth.csv``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv") for name in ("pairs", "metadata", "truth")}
    with open(paths["metadata"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["paper_id", "publication_date", "journal"])
        for rec in cohort.dataset.papers.values():
            w.writerow([rec.paper_id, rec.publication_date.isoformat(), rec.journal or ""])
    with open(paths["pairs"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["citing_id", "cited_id", "citing_date"])
        for ev in cohort.dataset.events:
            w.writerow([ev.citing_id, ev.cited_id, ev.citing_date.isoformat()])
    with open(paths["truth"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["paper_id", "model", "true_params", "true_class"])
        for h, params, label in zip(cohort.histories, cohort.true_params, cohort.labels):
            doc = params_to_json(params)
            w.writerow([h.paper_id, doc["model"], json.dumps(doc["params"], sort_keys=True), label])
    return paths
