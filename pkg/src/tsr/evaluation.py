"""Retrieval metrics: bull's eye, top-N consistency, precision-recall."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import RankingTooShort


def class_size(labels) -> int:
    """Largest class size; benchmark classes are equal-sized."""
    _, counts = np.unique(np.asarray(labels, dtype=object).astype(str), return_counts=True)
    return int(counts.max())


def _strip_self(ranking, q):
    r = np.asarray(ranking)
    return r[r != q]


def bulls_eye(rankings, labels, C: int | None = None, queries=None,
              include_self: bool = True) -> float:
    """Percentage of class members found in the top 2C of each ranking.

    ``rankings[k]`` lists gallery positions for query ``queries[k]`` (default
    k). With ``include_self`` the query counts toward its own class total, as
    in the usual MPEG-7 protocol.
    """
    labels = np.asarray(labels, dtype=object)
    C = C or class_size(labels)
    queries = range(len(rankings)) if queries is None else queries
    hits, Q = 0, 0
    for q, r in zip(queries, rankings):
        r = np.asarray(r) if include_self else _strip_self(r, q)
        if len(r) < 2 * C:
            raise RankingTooShort(f"query {q}: ranking has {len(r)} entries, need {2 * C}")
        hits += int(np.count_nonzero(labels[r[: 2 * C]] == labels[q]))
        Q += 1
    denom = Q * (C if include_self else C - 1)
    return 100.0 * hits / denom if denom else 0.0


def top_n_consistency(rankings, labels, n_max: int = 10, queries=None,
                      include_self: bool = False) -> np.ndarray:
    """count[N-1] = number of queries whose N-th retrieval shares their class."""
    labels = np.asarray(labels, dtype=object)
    queries = range(len(rankings)) if queries is None else queries
    counts = np.zeros(n_max, dtype=np.int64)
    for q, r in zip(queries, rankings):
        r = np.asarray(r) if include_self else _strip_self(r, q)
        if len(r) < n_max:
            raise RankingTooShort(f"query {q}: ranking has {len(r)} entries, need {n_max}")
        counts += labels[r[:n_max]] == labels[q]
    return counts


def precision_recall(rankings, labels, C: int | None = None, queries=None,
                     include_self: bool = True):
    """Mean precision at recall levels 1/C, 2/C, ..., 1.

    Precision at recall k/C is taken at the rank where the k-th relevant item
    appears; queries whose class is smaller than C reach fewer levels and
    contribute precision 0 beyond their last.
    """
    labels = np.asarray(labels, dtype=object)
    C = C or class_size(labels)
    queries = range(len(rankings)) if queries is None else queries
    levels = C if include_self else C - 1
    prec = np.zeros(levels)
    Q = 0
    for q, r in zip(queries, rankings):
        r = np.asarray(r) if include_self else _strip_self(r, q)
        rel = labels[r] == labels[q]
        pos = np.flatnonzero(rel)[:levels]
        p = np.zeros(levels)
        p[: len(pos)] = np.arange(1, len(pos) + 1) / (pos + 1)
        prec += p
        Q += 1
    recall = np.arange(1, levels + 1) / levels
    return recall, prec / max(Q, 1)


@dataclass
class BenchmarkReport:
    dataset: str
    mode: str
    config: dict
    bulls_eye: float
    topn: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    n_queries: int
    fallback_count: int = 0
    worst: list = field(default_factory=list)  # (query id, same-class hits in top 2C)
    timings: dict = field(default_factory=dict)

    def summary(self, timings: bool = False) -> str:
        lines = [
            f"dataset      {self.dataset}",
            f"mode         {self.mode}",
            f"queries      {self.n_queries}",
            f"bulls_eye    {self.bulls_eye:.2f}%",
            "top_n        " + " ".join(str(int(c)) for c in self.topn),
            f"fallbacks    {self.fallback_count}",
        ]
        if self.worst:
            lines.append("worst        " + ", ".join(f"{i}:{h}" for i, h in self.worst))
        if timings:
            for k, v in sorted(self.timings.items()):
                lines.append(f"time_{k:<8s}{v:.2f}s")
        return "\n".join(lines) + "\n"

    def topn_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "count"])
        for n, c in enumerate(self.topn, start=1):
            w.writerow([n, int(c)])
        return buf.getvalue()

    def pr_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["recall", "precision"])
        for r, p in zip(self.recall, self.precision):
            w.writerow([f"{r:.6f}", f"{p:.6f}"])
        return buf.getvalue()

    def bullseye_csv(self) -> str:
        return f"metric,value\nbulls_eye,{self.bulls_eye:.6f}\n"


def benchmark(index, mode: str = "tsr", dataset: str = "", include_self: bool = True,
              n_max: int = 10, **kw) -> BenchmarkReport:
    """Query every gallery shape against its own index and score the rankings."""
    import time

    from .pipeline import query_gallery

    labels = np.asarray(index.labels, dtype=object)
    if any(lab is None for lab in labels):
        raise ValueError("benchmarking needs a labeled gallery")
    C = class_size(labels)
    t0 = time.perf_counter()
    results = [query_gallery(index, q, mode, **kw) for q in range(index.N)]
    t1 = time.perf_counter()
    rankings = [r.ranking for r in results]
    be = bulls_eye(rankings, labels, C, include_self=include_self)
    topn = top_n_consistency(rankings, labels, min(n_max, index.N - 1))
    recall, precision = precision_recall(rankings, labels, C, include_self=include_self)
    hits = [int(np.count_nonzero(labels[r[: 2 * C]] == labels[q])) for q, r in enumerate(rankings)]
    worst = sorted(range(index.N), key=lambda q: (hits[q], q))[:5]
    return BenchmarkReport(
        dataset=dataset, mode=mode, config=index.config.to_dict(), bulls_eye=be, topn=topn,
        recall=recall, precision=precision, n_queries=index.N,
        fallback_count=sum(r.fallback for r in results),
        worst=[(index.ids[q], hits[q]) for q in worst], timings={"queries": t1 - t0})
