"""Citation-pair ingestion, yearly cumulative histories and the sample filter."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
PAIRS_HEADER = ("citing_id", "cited_id", "citing_date")
METADATA_HEADER = ("paper_id", "publication_date", "journal")


class IngestError(Exception):
    """A source could not be read at all."""


class PaperRecord(NamedTuple):
    paper_id: str
    publication_date: dt.date
    journal: Optional[str] = None


class CitationEvent(NamedTuple):
    citing_id: str
    cited_id: str
    citing_date: dt.date


@dataclass
class IngestReport:
    papers: int = 0
    events: int = 0
    malformed_metadata: int = 0
    duplicate_papers: int = 0
    malformed_pairs: int = 0
    unknown_cited: int = 0
    causality: int = 0
    duplicate_pairs: int = 0

    @property
    def dropped(self) -> int:
        return self.malformed_pairs + self.unknown_cited + self.causality + self.duplicate_pairs

    def to_json(self) -> dict:
        return {
            "papers": self.papers,
            "events": self.events,
            "dropped": self.dropped,
            "malformed_metadata": self.malformed_metadata,
            "duplicate_papers": self.duplicate_papers,
            "malformed_pairs": self.malformed_pairs,
            "unknown_cited": self.unknown_cited,
            "causality": self.causality,
            "duplicate_pairs": self.duplicate_pairs,
        }


@dataclass
class Dataset:
    papers: dict  # paper_id -> PaperRecord, insertion ordered
    events: list
    report: IngestReport = field(default_factory=IngestReport)


@dataclass
class CitationHistory:
    """Cumulative citations ``counts[t]`` received up to elapsed year ``t``."""

    paper_id: str
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1 or len(self.counts) < 2:
            raise ValueError("counts must be a 1-d sequence of length >= 2")

    @property
    def horizon(self) -> int:
        return len(self.counts) - 1

    def __eq__(self, other):
        if not isinstance(other, CitationHistory):
            return NotImplemented
        return self.paper_id == other.paper_id and np.array_equal(self.counts, other.counts)

    def to_json(self) -> dict:
        return {"paper_id": self.paper_id, "counts": [_plain(v) for v in self.counts]}


def _plain(v):
    v = v.item() if hasattr(v, "item") else v
    return int(v) if float(v).is_integer() else float(v)


def _open_records(source, expected_header):
    """Yield dict rows from a CSV or JSON path, or from an open text stream."""
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise IngestError(f"cannot read {path}: {exc}") from exc
        is_json = path.lower().endswith(".json")
    else:
        text = source.read()
        is_json = text.lstrip().startswith("[")
    if is_json:
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON source: {exc}") from exc
        if not isinstance(rows, list):
            raise IngestError("JSON source must be an array of records")
        return rows
    reader = csv.DictReader(io.StringIO(text))
    missing = [h for h in expected_header if h != "journal" and h not in (reader.fieldnames or ())]
    if missing:
        raise IngestError(f"CSV source lacks columns {missing}")
    return list(reader)


def _parse_date(value) -> dt.date:
    return dt.date.fromisoformat(str(value).strip()[:10])


def ingest(pairs_source, metadata_source) -> Dataset:
    """Load paper metadata and citation pairs.

    Malformed rows, pairs whose cited paper is unknown, exact duplicate pairs
    and citations dated before the cited paper's publication are dropped and
    tallied in ``dataset.report``.
    """
    report = IngestReport()
    papers = {}
    for row in _open_records(metadata_source, METADATA_HEADER):
        try:
            pid = str(row["paper_id"]).strip()
            if not pid:
                raise ValueError("empty id")
            rec = PaperRecord(pid, _parse_date(row["publication_date"]), (row.get("journal") or None))
        except (KeyError, ValueError, TypeError, AttributeError):
            report.malformed_metadata += 1
            continue
        if pid in papers:
            report.duplicate_papers += 1
            continue
        papers[pid] = rec

    events = []
    seen = set()
    for row in _open_records(pairs_source, PAIRS_HEADER):
        try:
            ev = CitationEvent(
                str(row["citing_id"]).strip(), str(row["cited_id"]).strip(), _parse_date(row["citing_date"])
            )
            if not ev.citing_id or not ev.cited_id:
                raise ValueError("empty id")
        except (KeyError, ValueError, TypeError, AttributeError):
            report.malformed_pairs += 1
            continue
        cited = papers.get(ev.cited_id)
        if cited is None:
            report.unknown_cited += 1
            continue
        if ev.citing_date < cited.publication_date:
            report.causality += 1
            continue
        key = (ev.citing_id, ev.cited_id)
        if key in seen:
            report.duplicate_pairs += 1
            continue
        seen.add(key)
        events.append(ev)
    report.papers = len(papers)
    report.events = len(events)
    if report.dropped:
        log.info("ingest dropped %d citation records", report.dropped)
    return Dataset(papers, events, report)


def elapsed_years(citing_date: dt.date, publication_date: dt.date) -> int:
    return math.floor((citing_date - publication_date).days / DAYS_PER_YEAR)


def build_histories(dataset: Dataset, horizon_years: int = 50) -> list:
    """One history per paper, in metadata order; events past the horizon are ignored."""
    if horizon_years < 1:
        raise ValueError("horizon_years must be >= 1")
    index = {pid: k for k, pid in enumerate(dataset.papers)}
    yearly = np.zeros((len(index), horizon_years + 1), dtype=np.int64)
    for ev in dataset.events:
        k = index.get(ev.cited_id)
        if k is None:
            continue
        year = elapsed_years(ev.citing_date, dataset.papers[ev.cited_id].publication_date)
        if 0 <= year <= horizon_years:
            yearly[k, year] += 1
    cumulative = np.cumsum(yearly, axis=1)
    return [CitationHistory(pid, cumulative[k]) for pid, k in index.items()]


def filter_sample(histories, min_citations: int = 10, window_years: int = 5) -> list:
    """Histories with at least ``min_citations`` by year ``window_years``, order kept."""
    out = []
    for h in histories:
        if window_years > h.horizon:
            raise ValueError(f"window {window_years} exceeds horizon {h.horizon}")
        if h.counts[window_years] >= min_citations:
            out.append(h)
    return out


def select_published(dataset: Dataset, first_year: int, last_year: int) -> list:
    """Paper ids published in ``[first_year, last_year]``, metadata order."""
    return [
        pid for pid, rec in dataset.papers.items() if first_year <= rec.publication_date.year <= last_year
    ]


def write_histories(histories, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([h.to_json() for h in histories], fh, indent=1)
        fh.write("\n")


def read_histories(path) -> list:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    return [CitationHistory(r["paper_id"], np.asarray(r["counts"])) for r in rows]
