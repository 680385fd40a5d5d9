"""Fairness and diversity distributions and their discrepancy to a reference.

Four class distributions are supported:

* RDP (estimator form): per-class mean misclassification rate, normalized.
* RDP_correct: per-class correct-reconstruction rate, normalized.
* PR: marginal class distribution of the reconstructions.
* UCPR: the per-condition class frequencies of repeated reconstructions,
  averaged over uninformative conditions with equal weight.

A distribution is fair when it equals the reference (uniform unless given),
which holds iff both the chi-squared divergence and the Chebyshev distance
to the reference are zero.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DiscreteDistribution, DiversitySet, EvalSet, uniform_distribution
from .errors import (
    DegenerateAllCorrect,
    DegenerateAllWrong,
    EmptyClass,
    EmptyCondition,
    EmptyDiversitySet,
    EmptySet,
    InvalidK,
)
from . import stats


class Kind(str, enum.Enum):
    RDP = "RDP"
    RDP_CORRECT = "RDP_correct"
    PR = "PR"
    UCPR = "UCPR"


def _class_rates(eval_set: EvalSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-class record counts and correct-reconstruction counts."""
    k = eval_set.partition.k
    true = eval_set.true_classes()
    recon = eval_set.recon_classes()
    n = np.bincount(true, minlength=k)
    empty = [eval_set.partition.labels[j] for j in range(k) if n[j] == 0]
    if empty:
        raise EmptyClass(f"no records for class(es) {empty}")
    correct = np.bincount(true[true == recon], minlength=k)
    return n, correct


def rdp_distribution(eval_set: EvalSet) -> DiscreteDistribution:
    """Normalized per-class mean 0-1 reconstruction loss."""
    n, correct = _class_rates(eval_set)
    loss = (n - correct) / n
    if loss.sum() == 0:
        raise DegenerateAllCorrect("every record is reconstructed in its own class")
    return DiscreteDistribution(tuple(loss / loss.sum()))


def rdp_distribution_correct(eval_set: EvalSet) -> DiscreteDistribution:
    """Normalized per-class rate of class-preserving reconstruction."""
    n, correct = _class_rates(eval_set)
    rate = correct / n
    if rate.sum() == 0:
        raise DegenerateAllWrong("no record is reconstructed in its own class")
    return DiscreteDistribution(tuple(rate / rate.sum()))


def pr_distribution(eval_set: EvalSet) -> DiscreteDistribution:
    if len(eval_set) == 0:
        raise EmptySet("cannot estimate PR from an empty set")
    counts = np.bincount(eval_set.recon_classes(), minlength=eval_set.partition.k)
    return DiscreteDistribution(tuple(counts / counts.sum()))


def cpr_distribution(recon_classes: Sequence[int], k: int) -> DiscreteDistribution:
    if len(recon_classes) == 0:
        raise EmptyCondition("condition has no replicates")
    counts = np.bincount(np.asarray(recon_classes, dtype=np.int64), minlength=k)
    if counts.size != k:
        raise InvalidK(f"class index outside [0, {k})")
    return DiscreteDistribution(tuple(counts / counts.sum()))


def ucpr_distribution(dset: DiversitySet) -> DiscreteDistribution:
    if not dset.conditions:
        raise EmptyDiversitySet("no conditions")
    k = dset.partition.k
    per_condition = np.array([cpr_distribution(c.recon_classes, k).probs for c in dset.conditions])
    return DiscreteDistribution(tuple(per_condition.mean(axis=0)))


def _reference(d: DiscreteDistribution, reference: DiscreteDistribution | None) -> np.ndarray:
    if reference is None:
        return uniform_distribution(d.k).array
    if reference.k != d.k:
        raise InvalidK(f"reference has {reference.k} classes, distribution {d.k}")
    q = reference.array
    if np.any(q <= 0):
        raise InvalidK("reference distribution needs positive entries")
    return q


def chi2_divergence(d: DiscreteDistribution, reference: DiscreteDistribution | None = None) -> float:
    """Pearson chi-squared divergence sum_j (p_j - q_j)^2 / q_j."""
    q = _reference(d, reference)
    return float(np.sum((d.array - q) ** 2 / q))


def chebyshev(d: DiscreteDistribution, reference: DiscreteDistribution | None = None) -> float:
    q = _reference(d, reference)
    return float(np.max(np.abs(d.array - q)))


def chi2_divergence_to_uniform(d: DiscreteDistribution) -> float:
    k = d.k
    return float(k * np.sum((d.array - 1.0 / k) ** 2))


def chebyshev_to_uniform(d: DiscreteDistribution) -> float:
    return float(np.max(np.abs(d.array - 1.0 / d.k)))


@dataclass(frozen=True)
class FairnessScores:
    kind: Kind
    distribution: DiscreteDistribution
    chi2_divergence: float
    chebyshev: float

    @property
    def fair(self) -> bool:
        return self.chi2_divergence == 0 and self.chebyshev == 0


def distribution(kind: Kind | str, data) -> DiscreteDistribution:
    kind = Kind(kind)
    if kind is Kind.RDP:
        return rdp_distribution(data)
    if kind is Kind.RDP_CORRECT:
        return rdp_distribution_correct(data)
    if kind is Kind.PR:
        return pr_distribution(data)
    return ucpr_distribution(data)


def score(kind: Kind | str, data, reference: DiscreteDistribution | None = None) -> FairnessScores:
    """Distribution of ``kind`` for ``data`` (an EvalSet, or a DiversitySet for UCPR) with both discrepancies."""
    kind = Kind(kind)
    d = distribution(kind, data)
    if reference is None:
        return FairnessScores(kind, d, chi2_divergence_to_uniform(d), chebyshev_to_uniform(d))
    return FairnessScores(kind, d, chi2_divergence(d, reference), chebyshev(d, reference))


def uniformity_test(
    kind: Kind | str,
    data,
    alpha: float = stats.ALPHA,
    reference: DiscreteDistribution | None = None,
) -> stats.TestResult:
    """Pearson test of the null hypothesis that the ``kind`` distribution is uniform.

    RDP (either form) is tested as homogeneity of the k x 2 table of
    (correct, incorrect) counts per class; both forms are uniform exactly when
    the per-class correct rates agree. PR uses the goodness-of-fit test on the
    reconstruction class counts (against ``reference`` if given), UCPR the same
    test on counts pooled over all conditions.
    """
    kind = Kind(kind)
    if kind in (Kind.RDP, Kind.RDP_CORRECT):
        n, correct = _class_rates(data)
        return stats.chi2_homogeneity(np.column_stack([correct, n - correct]), alpha)
    if kind is Kind.PR:
        counts = np.bincount(data.recon_classes(), minlength=data.partition.k)
        return stats.chi2_gof(counts, None if reference is None else reference.probs, alpha)
    return stats.chi2_gof(data.pooled_counts(), None if reference is None else reference.probs, alpha)
