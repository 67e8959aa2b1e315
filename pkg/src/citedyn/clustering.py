"""K-means classing of papers by the shape of their cumulative citation curve."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .citation_data import CitationHistory


@dataclass
class CumulativeShape:
    """``pi[t-1] = counts[t] / counts[T]`` for ``t = 1..T``."""

    paper_id: str
    pi: np.ndarray


@dataclass
class ClassAssignment:
    paper_ids: list
    class_index: np.ndarray  # 1..K, aligned with paper_ids
    centroids: np.ndarray  # K x T, row k-1 is class k
    wcss: float
    wcss_history: list = field(default_factory=list)  # per Lloyd iteration of the chosen run
    n_iter: int = 0
    restart: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def members(self, class_index: int) -> list:
        return [pid for pid, c in zip(self.paper_ids, self.class_index) if c == class_index]

    def as_dict(self) -> dict:
        return {pid: int(c) for pid, c in zip(self.paper_ids, self.class_index)}


def make_shapes(histories) -> list:
    out = []
    for h in histories:
        counts = np.asarray(h.counts, dtype=np.float64)
        total = counts[-1]
        if not total > 0:
            raise ValueError(f"{h.paper_id}: zero citations at the horizon, shape undefined")
        out.append(CumulativeShape(h.paper_id, counts[1:] / total))
    return out


def _sq_dists(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _repair_empty(x, labels, centers, k):
    # move the point farthest from its centroid into each empty cluster
    for j in range(k):
        if np.any(labels == j):
            continue
        d = ((x - centers[labels]) ** 2).sum(axis=1)
        sizes = np.bincount(labels, minlength=k)
        d[sizes[labels] <= 1] = -1.0
        labels[int(np.argmax(d))] = j
    return labels


def _centroids(x, labels, k):
    return np.stack([x[labels == j].mean(axis=0) for j in range(k)])


def _wcss(x, labels, centers):
    return float(((x - centers[labels]) ** 2).sum())


def lloyd(x, k, rng, max_iter=300):
    """One k-means run: k-means++ seeding then Lloyd iterations.

    Returns ``(labels, centers, wcss, history, n_iter)``; ``history`` holds the
    WCSS after every centroid update and is non-increasing.
    """
    centers = _kmeanspp(x, k, rng)
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    labels = _repair_empty(x, labels, centers, k)
    centers = _centroids(x, labels, k)
    history = [_wcss(x, labels, centers)]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(x, centers), axis=1)
        new = _repair_empty(x, new, centers, k)
        if np.array_equal(new, labels):
            break
        labels = new
        centers = _centroids(x, labels, k)
        history.append(_wcss(x, labels, centers))
    return labels, centers, history[-1], history, n_iter


def kmeans_cluster(shapes, k: int = 4, restarts: int = 100, seed: int = 0, max_iter: int = 300) -> ClassAssignment:
    """Best of ``restarts`` k-means++/Lloyd runs by WCSS (ties: lowest restart).

    Classes are numbered by descending centroid value at t = 2, so class 1 is
    the most front-loaded.
    """
    if k < 1 or restarts < 1:
        raise ValueError("k and restarts must be >= 1")
    x = np.asarray([s.pi for s in shapes], dtype=np.float64)
    if len(shapes) < k:
        raise ValueError(f"{len(shapes)} shapes cannot form {k} clusters")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite shape values")
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(restarts)):
        run = lloyd(x, k, np.random.default_rng(child), max_iter)
        if best is None or run[2] < best[1][2]:
            best = (r, run)
    r, (labels, centers, wcss, history, n_iter) = best
    t2 = min(1, x.shape[1] - 1)
    order = np.argsort(-centers[:, t2], kind="stable")
    rank = np.empty(k, dtype=int)
    rank[order] = np.arange(k)
    return ClassAssignment(
        [s.paper_id for s in shapes], rank[labels] + 1, centers[order], wcss, history, n_iter, r
    )


@dataclass
class ClassStatistics:
    boxplots: list  # rows: class, t, n, min, q1, median, q3, max
    early_fraction: dict  # class -> mean Pi(2)
    sizes: dict


def _by_id(histories):
    return {h.paper_id: h for h in histories}


def class_statistics(assignment: ClassAssignment, histories, t_values=(2, 10, 50), early_year: int = 2):
    lookup = _by_id(histories)
    rows, early, sizes = [], {}, {}
    for cls in range(1, assignment.k + 1):
        members = [lookup[pid] for pid in assignment.members(cls)]
        sizes[cls] = len(members)
        if not members:
            continue
        counts = np.asarray([m.counts for m in members], dtype=np.float64)
        for t in t_values:
            if not 0 <= t < counts.shape[1]:
                raise ValueError(f"t={t} outside 0..{counts.shape[1] - 1}")
            q = np.percentile(counts[:, t], [0, 25, 50, 75, 100])
            rows.append({"class": cls, "t": t, "n": len(members), "min": q[0], "q1": q[1],
                         "median": q[2], "q3": q[3], "max": q[4]})
        early[cls] = float(np.mean(counts[:, early_year] / counts[:, -1]))
    return ClassStatistics(rows, early, sizes)


def top_decile_odds(assignment: ClassAssignment, histories, class_index: int, fraction: float = 0.1) -> float:
    """Share of a class whose final count reaches the sample's top-decile cutoff.

    The cutoff is the final count at rank ``ceil(fraction * N)`` (descending);
    ties with it count as inside.
    """
    if not 1 <= class_index <= assignment.k:
        raise ValueError(f"no class {class_index}")
    lookup = _by_id(histories)
    finals = np.sort([lookup[pid].counts[-1] for pid in assignment.paper_ids])[::-1]
    cutoff = finals[math.ceil(fraction * len(finals)) - 1]
    members = assignment.members(class_index)
    if not members:
        return 0.0
    return sum(lookup[pid].counts[-1] >= cutoff for pid in members) / len(members)


def write_assignment(assignment: ClassAssignment, csv_path, centroids_path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["paper_id", "class_index"])
        for pid, c in zip(assignment.paper_ids, assignment.class_index):
            w.writerow([pid, int(c)])
    with open(centroids_path, "w", encoding="utf-8") as fh:
        json.dump(assignment.centroids.tolist(), fh)
        fh.write("\n")


def read_assignment(csv_path, centroids_path=None) -> ClassAssignment:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["paper_id"] for r in rows]
    labels = np.asarray([int(r["class_index"]) for r in rows])
    centroids = np.zeros((int(labels.max()), 0))
    if centroids_path:
        with open(centroids_path, encoding="utf-8") as fh:
            centroids = np.asarray(json.load(fh))
    return ClassAssignment(ids, labels, centroids, math.nan)
