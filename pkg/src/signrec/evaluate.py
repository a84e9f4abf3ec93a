"""Top-K recommendation lists and ranking metrics (P@K, R@K, nDCG@K).

Ground truth per user is the set of test items rated 4 or higher. Users
with empty ground truth are excluded by default; metric means run over the
evaluated users (configurable to divide by all M instead). Items the user
touched in training, with either sign, are excluded from ranking.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

GROUP_BINS = ((0, 20), (20, 50), (50, None))
GROUND_TRUTH_MIN_RATING = 4.0


@dataclass
class MetricTriple:
    precision: float
    recall: float
    ndcg: float


@dataclass
class RankingReport:
    metrics: dict                 # K -> MetricTriple
    evaluated_users: int
    groups: dict = field(default_factory=dict)  # label -> RankingReport


def topk_recommend(Z: np.ndarray, num_users: int, u: int, k: int,
                   exclude: set) -> list:
    """Top-k items by predicted preference, ties broken by item index.

    Returns fewer than k items only when the candidate pool is smaller.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    num_items = Z.shape[0] - num_users
    scores = Z[num_users:] @ Z[u]
    candidates = np.setdiff1d(np.arange(num_items), np.fromiter(exclude, dtype=np.int64,
                                                                count=len(exclude)))
    if len(candidates) == 0:
        return []
    # argsort on (-score, index): stable sort over index-ordered candidates
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:k]].tolist()


def precision_recall_at_k(recs, truth: set, k: int):
    hits = len(truth.intersection(recs[:k]))
    return hits / k, hits / len(truth)


def ndcg_at_k(recs, truth: set, k: int) -> float:
    # binary relevance: gain (2^y - 1) is 1 for hits, 0 otherwise
    dcg = sum(1.0 / math.log2(pos + 2)
              for pos, item in enumerate(recs[:k]) if item in truth)
    ideal_hits = min(len(truth), k)
    idcg = sum(1.0 / math.log2(pos + 2) for pos in range(ideal_hits))
    return dcg / idcg


def ground_truth(test_records, descriptor) -> dict:
    """Per-user set of test items rated at or above the relevance cutoff."""
    truth = {}
    for r in test_records:
        if r.rating >= GROUND_TRUTH_MIN_RATING:
            truth.setdefault(descriptor.user(r.user_id), set()).add(descriptor.item(r.item_id))
    return truth


def train_interactions(train_records, descriptor) -> dict:
    """Per-user set of training items (both signs), used for exclusion."""
    seen = {}
    for r in train_records:
        seen.setdefault(descriptor.user(r.user_id), set()).add(descriptor.item(r.item_id))
    return seen


def _mean_report(per_user: dict, ks, denominator: int) -> RankingReport:
    metrics = {}
    for k in ks:
        triples = [per_user[u][k] for u in per_user]
        if denominator == 0:
            metrics[k] = MetricTriple(0.0, 0.0, 0.0)
        else:
            metrics[k] = MetricTriple(
                sum(t[0] for t in triples) / denominator,
                sum(t[1] for t in triples) / denominator,
                sum(t[2] for t in triples) / denominator,
            )
    return RankingReport(metrics, evaluated_users=len(per_user))


def evaluate(Z: np.ndarray, num_users: int, truth: dict, exclude: dict,
             ks, groups: bool = False, include_all_users: bool = False) -> RankingReport:
    """Average per-user metrics over users with non-empty ground truth.

    ``truth`` and ``exclude`` map dense user index to item sets. When
    ``groups`` is set, users are additionally binned by training-interaction
    count and per-bin sub-reports attached. ``include_all_users`` divides by
    the full user count instead of the evaluated-user count.
    """
    ks = sorted(ks)
    per_user = {}
    for u, truth_u in truth.items():
        if not truth_u:
            continue
        recs = topk_recommend(Z, num_users, u, max(ks), exclude.get(u, set()))
        per_user[u] = {}
        for k in ks:
            p, r = precision_recall_at_k(recs, truth_u, k)
            per_user[u][k] = (p, r, ndcg_at_k(recs, truth_u, k))
    if not per_user:
        raise ValueError("no evaluable users (all ground-truth sets empty)")

    denominator = num_users if include_all_users else len(per_user)
    report = _mean_report(per_user, ks, denominator)
    if groups:
        for lo, hi in GROUP_BINS:
            label = f"[{lo},{hi if hi is not None else 'inf'})"
            members = {u: per_user[u] for u in per_user
                       if len(exclude.get(u, set())) >= lo
                       and (hi is None or len(exclude.get(u, set())) < hi)}
            denom = len(members) if not include_all_users else num_users
            report.groups[label] = _mean_report(members, ks, denom)
    return report


def write_report_csv(report: RankingReport, path: str) -> None:
    """Machine-readable report: columns K, metric, value, group."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["K", "metric", "value", "group"])
        def emit(rep, label):
            for k in sorted(rep.metrics):
                t = rep.metrics[k]
                writer.writerow([k, "precision", f"{t.precision:.10f}", label])
                writer.writerow([k, "recall", f"{t.recall:.10f}", label])
                writer.writerow([k, "ndcg", f"{t.ndcg:.10f}", label])
        emit(report, "all")
        for label, sub in report.groups.items():
            emit(sub, label)


def format_report(report: RankingReport) -> str:
    lines = [f"evaluated users: {report.evaluated_users}",
             f"{'K':>4} {'P@K':>10} {'R@K':>10} {'nDCG@K':>10}  group"]
    def emit(rep, label):
        for k in sorted(rep.metrics):
            t = rep.metrics[k]
            lines.append(f"{k:>4} {t.precision:>10.4f} {t.recall:>10.4f} {t.ndcg:>10.4f}  {label}")
    emit(report, "all")
    for label, sub in report.groups.items():
        emit(sub, label)
    return "\n".join(lines)


def aggregate_fold_reports(reports: list) -> dict:
    """Mean and standard deviation per (K, metric) across fold reports."""
    summary = {}
    for k in reports[0].metrics:
        for metric in ("precision", "recall", "ndcg"):
            values = [getattr(rep.metrics[k], metric) for rep in reports]
            summary[(k, metric)] = (float(np.mean(values)), float(np.std(values)))
    return summary
