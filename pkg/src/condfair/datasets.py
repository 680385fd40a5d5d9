"""Dataset-side procedures: biased subsampling, uninformative conditions and a
confusion-matrix simulator with its closed-form expectations."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import ClassPartition, DiscreteDistribution, EvalRecord, EvalSet, _read_rows
from .errors import (
    DegenerateAllCorrect,
    DegenerateAllWrong,
    DuplicateSample,
    EmptyGroup,
    InfeasibleTarget,
    InvalidDistribution,
    MalformedManifest,
    ShapeMismatch,
    WrongPartition,
)
from .imaging import Image, downsample_bilinear_aa, mean_image

FAIRFACE_RACES = (
    "White",
    "Black",
    "Latino_Hispanic",
    "East Asian",
    "Southeast Asian",
    "Indian",
    "Middle Eastern",
)

# CelebA-like racial mix. Only the White share (> 0.80) and the Southeast Asian
# share (0.0005) are fixed; the rest are editable defaults read off a bar chart.
UNFAIRFACE_DEFAULT = {
    "White": 0.8200,
    "Black": 0.0450,
    "Latino_Hispanic": 0.0400,
    "East Asian": 0.0500,
    "Southeast Asian": 0.0005,
    "Indian": 0.0145,
    "Middle Eastern": 0.0300,
}

# relative slack when comparing target_j * n with integer availabilities
_QUOTA_RTOL = 1e-9


@dataclass(frozen=True)
class LabeledIndex:
    partition: ClassPartition
    sample_ids: tuple[str, ...]
    classes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sample_ids) != len(self.classes):
            raise MalformedManifest("sample_ids and classes differ in length")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise DuplicateSample("duplicate sample_id in labeled index")
        k = self.partition.k
        if any(not 0 <= c < k for c in self.classes):
            raise MalformedManifest("class index outside the partition")

    def available(self) -> np.ndarray:
        return np.bincount(np.asarray(self.classes, dtype=np.int64), minlength=self.partition.k)


def load_labeled_index(
    path: str | Path,
    partition: ClassPartition,
    id_column: str = "sample_id",
    class_column: str = "class",
) -> LabeledIndex:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        _, rows = _read_rows(fh, path, (id_column, class_column))
    ids, classes = [], []
    for line, row in rows:
        ids.append(row[id_column].strip())
        classes.append(partition.index(row[class_column].strip(), line=line))
    return LabeledIndex(partition, tuple(ids), tuple(classes))


def load_target(path: str | Path, partition: ClassPartition) -> DiscreteDistribution:
    """Read a ``class,probability`` file; classes not listed get probability 0."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        _, rows = _read_rows(fh, path, ("class", "probability"))
    probs = [0.0] * partition.k
    seen = set()
    for line, row in rows:
        j = partition.index(row["class"].strip(), line=line)
        if j in seen:
            raise MalformedManifest(f"class {row['class']!r} listed twice", line=line)
        seen.add(j)
        try:
            probs[j] = float(row["probability"])
        except ValueError:
            raise MalformedManifest(f"bad probability {row['probability']!r}", line=line) from None
    return DiscreteDistribution(tuple(probs))


def unfairface_target(
    partition: ClassPartition, overrides: Mapping[str, float] | None = None
) -> DiscreteDistribution:
    """Default biased race target, in the order of ``partition``."""
    if sorted(partition.labels) != sorted(FAIRFACE_RACES):
        raise WrongPartition(f"expected the 7 FairFace races {FAIRFACE_RACES}, got {partition.labels}")
    table = dict(UNFAIRFACE_DEFAULT)
    table.update(overrides or {})
    return DiscreteDistribution(tuple(table[label] for label in partition.labels))


def largest_remainder(target: DiscreteDistribution, n: int) -> np.ndarray:
    """Hamilton apportionment of n seats: floors of target*n, leftovers to the largest remainders."""
    raw = target.array * n
    quotas = np.floor(raw).astype(np.int64)
    remainders = raw - quotas
    short = n - int(quotas.sum())
    if short > 0:
        # stable sort keeps ties in class order
        order = np.argsort(-remainders, kind="stable")
        quotas[order[:short]] += 1
    return quotas


def quota_feasible(target: DiscreteDistribution, available: Sequence[int], n: int) -> bool:
    """Whether n samples can follow ``target`` exactly in expectation: target_j * n <= available_j for all j."""
    t = target.array
    a = np.asarray(available, dtype=float)
    return bool(np.all(t * n <= a * (1 + _QUOTA_RTOL) + _QUOTA_RTOL))


def max_subset_size(target: DiscreteDistribution, available: Sequence[int]) -> int:
    a = np.asarray(available, dtype=np.int64)
    t = target.array
    if a.shape != t.shape:
        raise InvalidDistribution(f"target has {t.size} classes, availability {a.size}")
    missing = np.flatnonzero((t > 0) & (a == 0))
    if missing.size:
        raise InfeasibleTarget(f"classes {missing.tolist()} have positive target but no samples")
    pos = t > 0
    n = int(min(math.floor(a[j] / t[j] * (1 + _QUOTA_RTOL)) for j in np.flatnonzero(pos)))
    n = min(n, int(a[pos].sum()))
    while n > 0 and not quota_feasible(target, a, n):
        n -= 1
    return n


def max_biased_subset(index: LabeledIndex, target: DiscreteDistribution, seed: int) -> list[str]:
    """Largest subset of ``index`` whose class proportions follow ``target``.

    n is the largest size with target_j * n <= available_j for every class;
    per-class counts are the largest-remainder rounding of target * n, drawn
    uniformly without replacement. Ids are returned in index order.
    """
    available = index.available()
    n = max_subset_size(target, available)
    quotas = np.minimum(largest_remainder(target, n), available)
    rng = np.random.default_rng(seed)
    classes = np.asarray(index.classes, dtype=np.int64)
    chosen = []
    for j, q in enumerate(quotas):
        pool = np.flatnonzero(classes == j)
        if q > 0:
            chosen.append(rng.choice(pool, size=int(q), replace=False))
    picked = np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=np.int64)
    return [index.sample_ids[i] for i in picked]


# -- uninformative conditions -------------------------------------------------

def build_uninformative_conditions(
    groups: Mapping[str, Sequence[Image]], out_size: int = 4
) -> list[tuple[str, Image]]:
    """Per class: average all images, then downscale the average to out_size x out_size."""
    out = []
    shape = None
    for label, images in groups.items():
        if not images:
            raise EmptyGroup(f"class {label!r} has no images")
        if shape is None:
            shape = images[0].shape
        elif images[0].shape != shape:
            raise ShapeMismatch(f"class {label!r} images have shape {images[0].shape}, expected {shape}")
        avg = mean_image(images)
        out.append((label, downsample_bilinear_aa(avg, out_size, out_size)))
    return out


# -- simulator -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Row-stochastic matrix: row j is the reconstruction-class distribution given true class j."""

    rows: np.ndarray

    def __post_init__(self):
        m = np.array(self.rows, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise InvalidDistribution(f"confusion matrix must be square with k >= 2, got {m.shape}")
        for row in m:
            DiscreteDistribution(tuple(row))
        m.setflags(write=False)
        object.__setattr__(self, "rows", m)

    @property
    def k(self) -> int:
        return self.rows.shape[0]


def load_confusion(path: str | Path) -> tuple[ClassPartition, ConfusionMatrix]:
    """Read a ``true_class,<label_1>,...,<label_k>`` CSV with one row per true class."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        header, rows = _read_rows(fh, path, ("true_class",))
    labels = tuple(header[1:])
    if header[0] != "true_class":
        raise MalformedManifest("first column must be true_class", line=1)
    partition = ClassPartition(labels)
    m = np.zeros((partition.k, partition.k))
    seen = set()
    for line, row in rows:
        j = partition.index(row["true_class"].strip(), line=line)
        if j in seen:
            raise MalformedManifest(f"row for {labels[j]!r} repeated", line=line)
        seen.add(j)
        try:
            m[j] = [float(row[lab]) for lab in labels]
        except ValueError as exc:
            raise MalformedManifest(str(exc), line=line) from None
    if len(seen) != partition.k:
        missing = [labels[j] for j in range(partition.k) if j not in seen]
        raise MalformedManifest(f"missing rows for {missing}")
    try:
        return partition, ConfusionMatrix(m)
    except InvalidDistribution as exc:
        raise MalformedManifest(f"{path}: {exc}") from None


def simulate_eval_set(
    confusion: ConfusionMatrix,
    per_class_counts: Sequence[int],
    seed: int,
    partition: ClassPartition | None = None,
    name: str = "simulated",
) -> EvalSet:
    """Draw count_j records of true class j with recon_class sampled from confusion row j.

    Sample ids are ``<class index>-<running number>``, so two simulations with
    the same counts share ids and can be paired.
    """
    k = confusion.k
    if partition is None:
        partition = ClassPartition(tuple(f"C{j + 1}" for j in range(k)))
    if partition.k != k or len(per_class_counts) != k:
        raise ShapeMismatch("partition, confusion matrix and counts disagree on k")
    if any(int(c) != c or c < 0 for c in per_class_counts):
        raise InvalidDistribution("per-class counts must be non-negative integers")
    rng = np.random.default_rng(seed)
    records = []
    for j, count in enumerate(per_class_counts):
        recon = rng.choice(k, size=int(count), p=confusion.rows[j])
        records.extend(EvalRecord(f"{j}-{i:07d}", j, int(r)) for i, r in enumerate(recon))
    return EvalSet(partition, tuple(records), name)


def expected_distributions(
    confusion: ConfusionMatrix, class_prior: DiscreteDistribution, strict: bool = False
) -> dict[str, DiscreteDistribution | None]:
    """Population PR, RDP (misclassification form) and RDP (correct-rate form).

    An RDP entry whose normalizer vanishes (identity matrix, or zero diagonal)
    is None, or raises when ``strict``.
    """
    if class_prior.k != confusion.k:
        raise ShapeMismatch("prior and confusion matrix disagree on k")
    pr = class_prior.array @ confusion.rows
    diag = np.diag(confusion.rows)
    miss = 1.0 - diag
    rdp = rdp_correct = None
    if miss.sum() > 0:
        rdp = DiscreteDistribution(tuple(miss / miss.sum()))
    elif strict:
        raise DegenerateAllCorrect("confusion matrix is the identity")
    if diag.sum() > 0:
        rdp_correct = DiscreteDistribution(tuple(diag / diag.sum()))
    elif strict:
        raise DegenerateAllWrong("confusion matrix has a zero diagonal")
    return {"pr": DiscreteDistribution(tuple(pr / pr.sum())), "rdp": rdp, "rdp_correct": rdp_correct}


def write_subset(ids: Sequence[str], path: str | Path) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


def read_subset(path: str | Path) -> list[str]:
    return [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]


def write_target(target: DiscreteDistribution, partition: ClassPartition, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "probability"])
        for label, p in zip(partition.labels, target.probs):
            writer.writerow([label, repr(p)])
