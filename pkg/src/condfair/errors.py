"""Exception hierarchy.

Validation errors (bad input files, shapes, labels) map to CLI exit code 2,
computation errors (degenerate or infeasible problems) to exit code 3.
"""
from __future__ import annotations


class CondFairError(Exception):
    """Base class for all package errors."""


class ValidationError(CondFairError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ComputationError(CondFairError, ArithmeticError):
    pass


# -- manifests / core model --------------------------------------------------

class MalformedManifest(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


class DuplicateSample(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyCondition(ValidationError):
    pass


class InvalidK(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


# -- images -------------------------------------------------------------------

class ShapeMismatch(ValidationError):
    pass


class ImageTooSmall(ValidationError):
    pass


class Upscale(ValidationError):
    pass


class EmptyList(ValidationError):
    pass


class EmptyGroup(EmptyList):
    pass


# -- metrics ------------------------------------------------------------------

class ZeroVector(ValidationError):
    pass


class MissingEmbedding(ValidationError):
    pass


class UnknownMetric(ValidationError):
    pass


class EmptySet(ValidationError):
    pass


class EmptyClass(ValidationError):
    pass


class EmptyDiversitySet(ValidationError):
    pass


class WrongPartition(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class EmptyCounts(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class DegenerateAllCorrect(ComputationError):
    """Every class is reconstructed perfectly; the misclassification normalizer is zero."""


class DegenerateAllWrong(ComputationError):
    """No class is ever reconstructed correctly; the correct-rate normalizer is zero."""


class DegenerateMargin(ComputationError):
    """A contingency table has an empty row or column."""


class ZeroVariance(ComputationError):
    pass


class AllZeroDifferences(ComputationError):
    pass


class InfeasibleTarget(ComputationError):
    pass


class NoPairedSamples(ComputationError):
    pass
