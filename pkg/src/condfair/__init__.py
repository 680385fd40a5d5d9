"""Fairness, diversity and performance evaluation for conditional generative models.

Reconstructions are scored by how far their class distributions lie from
uniform: representation demographic parity (RDP), proportional
representation (PR) and uninformative conditional proportional
representation (UCPR), each with a chi-squared divergence and a Chebyshev
discrepancy plus a Pearson uniformity test.
"""
from __future__ import annotations

from .core import (
    ClassPartition,
    Condition,
    DiscreteDistribution,
    DiversitySet,
    EvalRecord,
    EvalSet,
    load_diversity_manifest,
    load_eval_manifest,
    uniform_distribution,
)
from .errors import ComputationError, CondFairError, ValidationError
from .fairness import FairnessScores, Kind, score, uniformity_test

__version__ = "0.1.0"

__all__ = [
    "ClassPartition",
    "ComputationError",
    "CondFairError",
    "Condition",
    "DiscreteDistribution",
    "DiversitySet",
    "EvalRecord",
    "EvalSet",
    "FairnessScores",
    "Kind",
    "ValidationError",
    "load_diversity_manifest",
    "load_eval_manifest",
    "score",
    "uniform_distribution",
    "uniformity_test",
]
