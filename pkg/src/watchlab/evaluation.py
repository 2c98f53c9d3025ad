"""Ranking metrics against ground-truth interest: GAUC, nDCG@k,
duration-range breakdowns and the improve-percentage statistic."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data_model import Dataset, derive_interest_label
from .errors import (
    DegenerateDenominator,
    LengthMismatch,
    MissingGroundTruth,
    NoEvaluableUsers,
)


def _check_aligned(*arrays):
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise LengthMismatch("scores, labels and user ids must be row-aligned")


def _user_slices(user_ids):
    order = np.argsort(np.asarray(user_ids, dtype=object), kind="stable")
    sorted_users = np.asarray(user_ids, dtype=object)[order]
    boundaries = np.flatnonzero(sorted_users[1:] != sorted_users[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(order)]))
    return [(order[s:e]) for s, e in zip(starts, ends)]


def _auc(scores, labels):
    """Rank-based AUC; tied scores contribute 0.5 per pair."""
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores, method="average")
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def gauc(scores, labels, user_ids, return_counts: bool = False):
    """Per-user AUC averaged with each user weighted by their row count.

    Users whose labels are all one class carry no ranking signal and are
    skipped.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    _check_aligned(scores, labels, user_ids)
    total = 0.0
    weight = 0
    n_eval = n_skip = 0
    for rows in _user_slices(user_ids):
        y = labels[rows]
        if y.min() == y.max():
            n_skip += 1
            continue
        total += _auc(scores[rows], y) * rows.size
        weight += rows.size
        n_eval += 1
    if n_eval == 0:
        raise NoEvaluableUsers("every user has single-class labels")
    value = float(total / weight)
    if return_counts:
        return value, n_eval, n_skip
    return value


def ndcg_at_k(scores, labels, user_ids, k: int, return_counts: bool = False):
    """Mean per-user nDCG@k with binary relevance, unweighted over users.

    Score ties break by original row order (stable); users with no positive
    rows are skipped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    _check_aligned(scores, labels, user_ids)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    total = 0.0
    n_eval = n_skip = 0
    for rows in _user_slices(user_ids):
        y = labels[rows]
        n_pos = int((y == 1).sum())
        if n_pos == 0:
            n_skip += 1
            continue
        order = np.argsort(-scores[rows], kind="stable")
        top = y[order][:k]
        dcg = float((top * discounts[: top.size]).sum())
        idcg = float(discounts[: min(k, n_pos)].sum())
        total += dcg / idcg
        n_eval += 1
    if n_eval == 0:
        raise NoEvaluableUsers("no user has a positive label")
    value = total / n_eval
    if return_counts:
        return value, n_eval, n_skip
    return value


def improve_percentage(v_method, v_watchtime, v_oracle) -> float:
    """Fraction of the watch-time-to-oracle gap the method recovers."""
    denom = v_oracle - v_watchtime
    if denom == 0:
        raise DegenerateDenominator("oracle equals the watch-time reference")
    return (v_method - v_watchtime) / denom


def oracle_labels(dataset: Dataset, truth=None) -> np.ndarray:
    """Binary interest ground truth: the sampled interest for synthetic rows,
    the long_view rule otherwise."""
    if truth is not None:
        if len(truth) != len(dataset):
            raise LengthMismatch("ground-truth records not aligned with rows")
        return np.array([t.r_sample for t in truth], dtype=np.int64)
    if all(r.true_interest is not None for r in dataset):
        return np.array([r.true_interest for r in dataset], dtype=np.int64)
    try:
        return np.array([derive_interest_label(r) for r in dataset], dtype=np.int64)
    except Exception as exc:  # pragma: no cover
        raise MissingGroundTruth(str(exc))


@dataclass
class RangeMetrics:
    duration_lo: float
    duration_hi: float
    n_rows: int
    gauc: float | None
    ndcg: dict
    improve_pct: float | None = None


@dataclass
class EvalReport:
    method: str
    gauc: float
    ndcg_at: dict
    n_users_evaluated: int
    n_users_skipped: int
    ranges: list = field(default_factory=list)

    def to_json(self, path) -> None:
        payload = {
            "method": self.method,
            "gauc": self.gauc,
            "ndcg_at": {str(k): v for k, v in self.ndcg_at.items()},
            "n_users_evaluated": self.n_users_evaluated,
            "n_users_skipped": self.n_users_skipped,
            "ranges": [
                {
                    "duration_lo": r.duration_lo,
                    "duration_hi": r.duration_hi,
                    "n_rows": r.n_rows,
                    "gauc": r.gauc,
                    "ndcg": {str(k): v for k, v in r.ndcg.items()},
                    "improve_pct": r.improve_pct,
                }
                for r in self.ranges
            ],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)


def duration_breakdown(scores, labels, dataset: Dataset, n_ranges: int, ks=(1, 3, 5)):
    """Metrics inside equal-frequency duration ranges.

    Ranges come from duration quantiles of the evaluated rows; each row falls
    in exactly one range. A range where no user is evaluable reports None.
    """
    if n_ranges < 1:
        raise ValueError("n_ranges must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    d = dataset.durations
    edges = np.unique(np.quantile(d, np.linspace(0, 1, n_ranges + 1)))
    assign = np.searchsorted(edges[1:-1], d, side="left")
    users = dataset.user_ids
    out = []
    for b in range(max(1, edges.size - 1)):
        mask = assign == b
        lo = float(edges[b]) if b > 0 else 0.0
        hi = float(edges[b + 1]) if edges.size > 1 else float(d.max())
        if not mask.any():
            out.append(RangeMetrics(lo, hi, 0, None, {k: None for k in ks}))
            continue
        try:
            g = gauc(scores[mask], labels[mask], users[mask])
        except NoEvaluableUsers:
            g = None
        ndcg = {}
        for k in ks:
            try:
                ndcg[k] = ndcg_at_k(scores[mask], labels[mask], users[mask], k)
            except NoEvaluableUsers:
                ndcg[k] = None
        out.append(RangeMetrics(lo, hi, int(mask.sum()), g, ndcg))
    return out


def evaluate(scores, labels, dataset: Dataset, method: str, ks=(1, 3, 5),
             n_ranges: int = 3) -> EvalReport:
    """Full report: global GAUC/nDCG plus the duration-range breakdown."""
    g, n_eval, n_skip = gauc(scores, labels, dataset.user_ids, return_counts=True)
    ndcg = {k: ndcg_at_k(scores, labels, dataset.user_ids, k) for k in ks}
    ranges = duration_breakdown(scores, labels, dataset, n_ranges, ks)
    return EvalReport(
        method=method,
        gauc=g,
        ndcg_at=ndcg,
        n_users_evaluated=n_eval,
        n_users_skipped=n_skip,
        ranges=ranges,
    )
