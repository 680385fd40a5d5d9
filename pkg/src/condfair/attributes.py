"""Attribute reconstruction losses and per-class aggregation of record metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EvalRecord, EvalSet
from .errors import DimensionMismatch, MissingEmbedding, UnknownMetric, ZeroVector

LOSS_01 = "loss_01"
COSINE = "cos"
COS_SIM = "cos_sim"
BUILTIN_METRICS = (LOSS_01, COSINE)


def loss_01(record: EvalRecord) -> int:
    return int(record.true_class != record.recon_class)


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size == 0:
        raise DimensionMismatch(f"vectors have shapes {u.shape} and {v.shape}")
    su = np.max(np.abs(u))
    sv = np.max(np.abs(v))
    if su == 0 or sv == 0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    # rescale so squared entries neither overflow nor underflow, then normalize
    u = u / su
    v = v / sv
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    sim = float(np.dot(u / nu, v / nv))
    return min(1.0, max(-1.0, sim))


def cosine_loss(record: EvalRecord) -> float:
    """1 - cosine similarity of the classifier embeddings; 0 is a perfect match, 2 antipodal."""
    if not record.has_embeddings:
        raise MissingEmbedding(f"{record.sample_id}: both embeddings are required")
    return 1.0 - cosine_similarity(record.embedding_true, record.embedding_recon)


def annotate_cosine(eval_set: EvalSet) -> EvalSet:
    """Return a copy whose records carry the raw similarity under ``cos_sim`` (where embeddings exist)."""
    return eval_set.replace_records(
        r.with_scalars(**{COS_SIM: cosine_similarity(r.embedding_true, r.embedding_recon)})
        if r.has_embeddings else r
        for r in eval_set.records
    )


def metric_value(record: EvalRecord, metric: str) -> float | None:
    """Value of ``metric`` for one record, or None when the record does not carry it."""
    if metric == LOSS_01:
        return float(loss_01(record))
    if metric == COSINE:
        if record.has_embeddings:
            return cosine_loss(record)
        return None
    return record.scalars.get(metric)


def metric_values(eval_set: EvalSet, metric: str) -> dict[str, float]:
    out = {}
    for r in eval_set.records:
        v = metric_value(r, metric)
        if v is not None:
            out[r.sample_id] = v
    return out


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    mean: float
    class_means: tuple[float | None, ...]
    class_counts: tuple[int, ...]

    @property
    def count(self) -> int:
        return sum(self.class_counts)


def summarize_metric(eval_set: EvalSet, metric: str) -> MetricSummary:
    """Overall and per-true-class means of a metric over the records that carry it."""
    k = eval_set.partition.k
    sums = [[] for _ in range(k)]
    for r in eval_set.records:
        v = metric_value(r, metric)
        if v is not None:
            sums[r.true_class].append(v)
    counts = tuple(len(s) for s in sums)
    if sum(counts) == 0:
        raise UnknownMetric(f"no record carries metric {metric!r}")
    means = tuple(math.fsum(s) / len(s) if s else None for s in sums)
    overall = math.fsum(v for s in sums for v in s) / sum(counts)
    return MetricSummary(metric, overall, means, counts)


def available_metrics(eval_set: EvalSet) -> list[str]:
    names = [LOSS_01]
    if any(r.has_embeddings for r in eval_set.records):
        names.append(COSINE)
    names += [s for s in eval_set.scalar_names() if s != COS_SIM]
    return names
