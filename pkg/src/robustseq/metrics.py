"""Micro-averaged AUC and top-k recall over multi-label scores.

Both metrics pool every (instance, label) cell: AUC counts ordered
positive/negative pairs, with ties awarded to the positive by default;
recall counts pooled true positives retrieved in each instance's top k.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricUndefinedError, ValidationError
from .model import ModelState, score_series
from .temporal import VisitSeries

TIE_MODES = ("positive", "half")


def _validated(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ValidationError("scores and labels must be matching 2-D arrays")
    if scores.size == 0:
        raise ValidationError("scores are empty")
    if not np.isfinite(scores).all():
        raise ValidationError("scores contain non-finite entries")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValidationError("labels must be binary")
    return scores, labels


def micro_auc(scores, labels, ties: str = "positive") -> float:
    """Pairwise ranking accuracy over the pooled label cells.

    Counts pairs with positive score >= negative score over all
    positive/negative pairs; ties="half" scores tied pairs 0.5 instead
    for comparison with conventional AUC tooling.
    """
    if ties not in TIE_MODES:
        raise ValidationError(f"unknown tie mode {ties!r}")
    scores, labels = _validated(scores, labels)
    pos = scores[labels == 1.0]
    neg = scores[labels == 0.0]
    if pos.size == 0 or neg.size == 0:
        raise MetricUndefinedError(
            "micro AUC needs at least one positive and one negative cell")
    neg_sorted = np.sort(neg)
    at_most = np.searchsorted(neg_sorted, pos, side="right")
    if ties == "positive":
        wins = float(at_most.sum())
    else:
        below = np.searchsorted(neg_sorted, pos, side="left")
        wins = float(below.sum()) + 0.5 * float((at_most - below).sum())
    return wins / (pos.size * neg.size)


def top_k_recall(scores, labels, k: int) -> float:
    """Pooled fraction of positives retrieved in each row's top k.

    Ties are broken toward the lower label index, so the result is
    deterministic for equal scores.
    """
    scores, labels = _validated(scores, labels)
    n, c = scores.shape
    if not 1 <= k <= c:
        raise ValidationError(f"k must lie in [1, {c}], got {k}")
    total_pos = labels.sum()
    if total_pos == 0:
        raise MetricUndefinedError("top-k recall needs at least one positive label")
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    hits = labels[np.arange(n)[:, None], top].sum()
    return float(hits) / float(total_pos)


@dataclass
class EvalReport:
    """Cohort-level ranking quality plus the pool sizes behind it."""

    micro_auc: float
    recalls: dict[int, float]
    positives: int
    negatives: int
    instances: int
    ties: str = "positive"
    extras: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"micro_auc\t{self.micro_auc!r}"]
        for k in sorted(self.recalls):
            out.append(f"recall@{k}\t{self.recalls[k]!r}")
        out.append(f"positives\t{self.positives}")
        out.append(f"negatives\t{self.negatives}")
        out.append(f"instances\t{self.instances}")
        return out

    def to_dict(self) -> dict:
        doc = {
            "micro_auc": self.micro_auc,
            "recalls": {str(k): v for k, v in sorted(self.recalls.items())},
            "counts": {"positives": self.positives, "negatives": self.negatives,
                       "instances": self.instances},
            "ties": self.ties,
        }
        if self.extras:
            doc["extras"] = dict(self.extras)
        return doc


def _thread_count() -> int:
    raw = os.environ.get("ROBUSTSEQ_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"ROBUSTSEQ_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ValidationError("ROBUSTSEQ_THREADS must be >= 1")
    return n


def pooled_scores(state: ModelState, cohort: list[VisitSeries],
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode next-visit scores for a cohort, pooled row-wise.

    Rows are (patient, step) prediction instances in cohort order;
    single-visit patients contribute none. Scoring parallelizes across
    patients up to ROBUSTSEQ_THREADS; results are order-stable.
    """
    if not cohort:
        raise ValidationError("cohort is empty")
    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(lambda s: score_series(state, s), cohort))
    else:
        pairs = [score_series(state, s) for s in cohort]
    kept = [(p, t) for p, t in pairs if p.shape[0] > 0]
    if not kept:
        raise MetricUndefinedError("cohort has no prediction steps (all T=1)")
    scores = np.concatenate([p for p, _ in kept], axis=0)
    labels = np.concatenate([t for _, t in kept], axis=0)
    return scores, labels


def evaluate_cohort(state: ModelState, cohort: list[VisitSeries],
                    ks: tuple[int, ...] = (10, 20, 30),
                    ties: str = "positive") -> EvalReport:
    """Score a cohort and compute AUC plus recall at each requested k.

    A requested k above the number of codes is evaluated at k = C (every
    label retrieved, recall 1.0) and reported under the requested key.
    """
    scores, labels = pooled_scores(state, cohort)
    c = scores.shape[1]
    auc = micro_auc(scores, labels, ties=ties)
    recalls = {int(k): top_k_recall(scores, labels, min(int(k), c)) for k in ks}
    positives = int(labels.sum())
    return EvalReport(micro_auc=auc, recalls=recalls, positives=positives,
                      negatives=int(labels.size - positives),
                      instances=int(scores.shape[0]), ties=ties)
