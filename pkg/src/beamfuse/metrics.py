"""Evaluation metrics: Top-K accuracy and the distance-based accuracy score,
plus the CSV report container."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_HEADER = "split,samples,top1,top3,top5,dba"


def rank_predictions(logits: np.ndarray) -> np.ndarray:
    """Beam indices sorted by descending score; ties break to the smaller
    index so results are reproducible."""
    logits = np.asarray(logits)
    return np.argsort(-logits, axis=-1, kind="stable")


def top_k_accuracy(ranked: np.ndarray, truths: np.ndarray, k: int) -> float:
    """Fraction of samples whose true index appears in the first k entries."""
    ranked = np.asarray(ranked)
    truths = np.asarray(truths)
    if ranked.shape[0] == 0:
        raise ValueError("empty evaluation set")
    if ranked.shape[1] < k:
        raise ValueError(f"need >= {k} ranked indices, got {ranked.shape[1]}")
    hits = (ranked[:, :k] == truths[:, None]).any(axis=1)
    return float(hits.mean())


def dba_score(ranked: np.ndarray, truths: np.ndarray, k_dba: int,
              delta: float) -> float:
    """Average over k = 1..k_dba of (1 - mean normalized distance of the
    closest of the top-k predictions to the truth)."""
    ranked = np.asarray(ranked, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if ranked.shape[0] == 0:
        raise ValueError("empty evaluation set")
    if ranked.shape[1] < k_dba:
        raise ValueError(f"need >= {k_dba} ranked indices, got {ranked.shape[1]}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    dist = np.minimum(np.abs(ranked - truths[:, None]) / delta, 1.0)
    best = np.minimum.accumulate(dist, axis=1)
    y = 1.0 - best[:, :k_dba].mean(axis=0)
    return float(y.mean())


@dataclass
class MetricReport:
    rows: list[dict] = field(default_factory=list)

    def add(self, split: str, samples: int, top1: float, top3: float,
            top5: float, dba: float) -> None:
        for name, v in (("top1", top1), ("top3", top3), ("top5", top5)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0,1]: {v}")
        self.rows.append({"split": split, "samples": samples, "top1": top1,
                          "top3": top3, "top5": top5, "dba": dba})

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(REPORT_HEADER + "\n")
        for r in self.rows:
            buf.write(f"{r['split']},{r['samples']},{r['top1']:.6f},"
                      f"{r['top3']:.6f},{r['top5']:.6f},{r['dba']:.6f}\n")
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def compute_report(logits: np.ndarray, truths: np.ndarray,
                   scenarios: list[str] | None = None, dba_k: int = 3,
                   dba_delta: float = 5.0) -> MetricReport:
    """Metrics over the whole set plus one row per scenario tag."""
    ranked = rank_predictions(logits)
    truths = np.asarray(truths)
    report = MetricReport()

    def add_rows(split: str, idx: np.ndarray) -> None:
        r, t = ranked[idx], truths[idx]
        report.add(split, int(len(t)),
                   top_k_accuracy(r, t, 1), top_k_accuracy(r, t, 3),
                   top_k_accuracy(r, t, 5), dba_score(r, t, dba_k, dba_delta))

    add_rows("all", np.arange(len(truths)))
    if scenarios is not None:
        tags = np.asarray(scenarios)
        for tag in sorted(set(scenarios)):
            add_rows(tag, np.flatnonzero(tags == tag))
    return report
