"""Shared data model and manifest ingestion.

Class labels are strings in files and integer indices in memory. The index
of a label is its position in the :class:`ClassPartition`.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateSample,
    EmptyCondition,
    InvalidDistribution,
    InvalidK,
    MalformedManifest,
    UnknownClass,
)

SCALAR_PREFIX = "scalar:"
EVAL_COLUMNS = ("sample_id", "true_class", "recon_class")
DIVERSITY_COLUMNS = ("condition_id", "replicate", "recon_class")


@dataclass(frozen=True)
class ClassPartition:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise InvalidK(f"a partition needs at least 2 classes, got {len(labels)}")
        if any(not isinstance(lab, str) or not lab.strip() for lab in labels):
            raise MalformedManifest("class labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise MalformedManifest(f"duplicate class labels in {labels}")

    @property
    def k(self) -> int:
        return len(self.labels)

    def index(self, label: str, line: int | None = None) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownClass(f"unknown class {label!r}", line=line) from None

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over the k classes of a partition."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) < 2:
            raise InvalidK("a distribution needs at least 2 entries")
        if any(not math.isfinite(p) or p < 0 for p in probs):
            raise InvalidDistribution(f"entries must be finite and non-negative: {probs}")
        if abs(math.fsum(probs) - 1.0) > 1e-9:
            raise InvalidDistribution(f"entries sum to {math.fsum(probs)!r}, not 1")

    @classmethod
    def from_weights(cls, weights: Iterable[float]) -> "DiscreteDistribution":
        w = np.asarray(list(weights), dtype=float)
        total = w.sum()
        if total <= 0:
            raise InvalidDistribution("weights must have a positive sum")
        return cls(tuple(w / total))

    @property
    def k(self) -> int:
        return len(self.probs)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, j):
        return self.probs[j]


def uniform_distribution(k: int) -> DiscreteDistribution:
    if int(k) != k or k < 2:
        raise InvalidK(f"k must be an integer >= 2, got {k!r}")
    k = int(k)
    return DiscreteDistribution((1.0 / k,) * k)


@dataclass(frozen=True)
class EvalRecord:
    """Classifier outputs and scalar metrics for one (original, reconstruction) pair."""

    sample_id: str
    true_class: int
    recon_class: int
    embedding_true: tuple[float, ...] | None = None
    embedding_recon: tuple[float, ...] | None = None
    scalars: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("embedding_true", "embedding_recon"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        object.__setattr__(self, "scalars", {str(k): float(v) for k, v in self.scalars.items()})
        for name, value in self.scalars.items():
            if not math.isfinite(value):
                raise MalformedManifest(f"{self.sample_id}: scalar {name!r} is not finite")
        a, b = self.embedding_true, self.embedding_recon
        if a is not None and b is not None and (len(a) != len(b) or len(a) == 0):
            raise DimensionMismatch(
                f"{self.sample_id}: embedding dimensions {len(a)} and {len(b)} differ or are empty"
            )

    @property
    def has_embeddings(self) -> bool:
        return self.embedding_true is not None and self.embedding_recon is not None

    def with_scalars(self, **values: float) -> "EvalRecord":
        merged = dict(self.scalars)
        merged.update(values)
        return EvalRecord(
            self.sample_id, self.true_class, self.recon_class,
            self.embedding_true, self.embedding_recon, merged,
        )


@dataclass(frozen=True)
class EvalSet:
    partition: ClassPartition
    records: tuple[EvalRecord, ...]
    name: str = ""

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        k = self.partition.k
        seen = set()
        for rec in records:
            if not (0 <= rec.true_class < k and 0 <= rec.recon_class < k):
                raise UnknownClass(f"{rec.sample_id}: class index outside [0, {k})")
            if rec.sample_id in seen:
                raise DuplicateSample(f"duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)

    def __len__(self):
        return len(self.records)

    def true_classes(self) -> np.ndarray:
        return np.fromiter((r.true_class for r in self.records), dtype=np.int64, count=len(self.records))

    def recon_classes(self) -> np.ndarray:
        return np.fromiter((r.recon_class for r in self.records), dtype=np.int64, count=len(self.records))

    def by_id(self) -> dict[str, EvalRecord]:
        return {r.sample_id: r for r in self.records}

    def scalar_names(self) -> list[str]:
        names: dict[str, None] = {}
        for r in self.records:
            for key in r.scalars:
                names.setdefault(key, None)
        return list(names)

    def replace_records(self, records: Iterable[EvalRecord]) -> "EvalSet":
        return EvalSet(self.partition, tuple(records), self.name)


@dataclass(frozen=True)
class Condition:
    condition_id: str
    recon_classes: tuple[int, ...]


@dataclass(frozen=True)
class DiversitySet:
    """Predicted classes of repeated reconstructions, grouped per uninformative condition."""

    partition: ClassPartition
    conditions: tuple[Condition, ...]

    def __post_init__(self):
        conditions = tuple(
            c if isinstance(c, Condition) else Condition(str(c[0]), tuple(c[1]))
            for c in self.conditions
        )
        object.__setattr__(self, "conditions", conditions)
        k = self.partition.k
        for cond in conditions:
            if not cond.recon_classes:
                raise EmptyCondition(f"condition {cond.condition_id!r} has no replicates")
            if any(not 0 <= c < k for c in cond.recon_classes):
                raise UnknownClass(f"condition {cond.condition_id!r}: class index outside [0, {k})")
        if not self.balanced:
            warnings.warn(
                "replicate counts differ across conditions: "
                + ", ".join(f"{c.condition_id}={len(c.recon_classes)}" for c in conditions),
                stacklevel=2,
            )

    @property
    def balanced(self) -> bool:
        return len({len(c.recon_classes) for c in self.conditions}) <= 1

    def pooled_counts(self) -> np.ndarray:
        counts = np.zeros(self.partition.k, dtype=np.int64)
        for cond in self.conditions:
            counts += np.bincount(cond.recon_classes, minlength=self.partition.k)
        return counts


# -- manifest I/O -------------------------------------------------------------

def _open_csv(path: Path):
    path = Path(path)
    # FileNotFoundError propagates untouched: it is an I/O problem, not a validation one
    handle = open(path, newline="", encoding="utf-8")
    return handle


def _check_header(header: Sequence[str] | None, required: Sequence[str], path: Path) -> None:
    if header is None:
        raise MalformedManifest(f"{path}: empty file", line=1)
    missing = [c for c in required if c not in header]
    if missing:
        raise MalformedManifest(f"{path}: missing column(s) {missing}", line=1)
    if len(set(header)) != len(header):
        raise MalformedManifest(f"{path}: duplicate column names", line=1)


def read_partition(spec: str | Path | Sequence[str]) -> ClassPartition:
    """Build a partition from a label list, a comma-separated string or a file of labels (one per line)."""
    if isinstance(spec, (list, tuple)):
        return ClassPartition(tuple(spec))
    text = str(spec)
    path = Path(text)
    if path.is_file():
        labels = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
        return ClassPartition(tuple(lab for lab in labels if lab and not lab.startswith("#")))
    return ClassPartition(tuple(lab.strip() for lab in text.split(",")))


def infer_partition(path: str | Path, columns: Sequence[str] = ("true_class", "recon_class")) -> ClassPartition:
    """Partition in first-appearance order, scanning ``columns`` one after another."""
    labels: "OrderedDict[str, None]" = OrderedDict()
    with _open_csv(Path(path)) as fh:
        _, rows = _read_rows(fh, Path(path), columns)
    for col in columns:
        for _, row in rows:
            value = (row.get(col) or "").strip()
            if value:
                labels.setdefault(value, None)
    return ClassPartition(tuple(labels))


def _read_rows(lines: Iterable[str], path: Path, required: Sequence[str]):
    """Return (header, [(line_number, row_dict), ...]); comment and blank lines are skipped."""
    header = None
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#") or not line.strip():
            continue
        cells = next(csv.reader([line]))
        if header is None:
            header = [c.strip() for c in cells]
            _check_header(header, required, path)
            continue
        if len(cells) != len(header):
            raise MalformedManifest(
                f"expected {len(header)} fields, found {len(cells)}", line=lineno
            )
        rows.append((lineno, dict(zip(header, cells))))
    if header is None:
        raise MalformedManifest(f"{path}: empty file", line=1)
    return header, rows


def _load_embeddings(path: Path) -> dict[str, tuple[tuple[float, ...] | None, tuple[float, ...] | None]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sid = str(obj["sample_id"])
                true = obj.get("true")
                recon = obj.get("recon")
                true = None if true is None else tuple(float(v) for v in true)
                recon = None if recon is None else tuple(float(v) for v in recon)
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedManifest(f"{path}: {exc}", line=lineno) from None
            if sid in out:
                raise DuplicateSample(f"{path}: duplicate embedding for {sid!r}", line=lineno)
            for vec in (true, recon):
                if vec is not None and not all(math.isfinite(v) for v in vec):
                    raise MalformedManifest(f"{path}: non-finite embedding for {sid!r}", line=lineno)
            if true is not None and recon is not None and (len(true) != len(recon) or not true):
                raise DimensionMismatch(
                    f"{path}: embedding dimensions {len(true)} and {len(recon)} for {sid!r}", line=lineno
                )
            out[sid] = (true, recon)
    return out


def load_eval_manifest(
    path: str | Path,
    partition: ClassPartition,
    embeddings: str | Path | None = None,
    name: str | None = None,
    first_per_class: int | None = None,
) -> EvalSet:
    """Load and validate an evaluation manifest.

    The CSV header is ``sample_id,true_class,recon_class`` followed by any
    number of ``scalar:<name>`` columns; empty scalar cells mean "absent".
    An optional ``gt_class`` column holds dataset annotations. With
    ``first_per_class=N`` only the first N records per true class (file
    order) are kept, and, when ``gt_class`` is present, only those whose
    classifier label agrees with the annotation.
    """
    path = Path(path)
    emb = _load_embeddings(Path(embeddings)) if embeddings is not None else {}
    records: list[EvalRecord] = []
    seen: set[str] = set()
    kept = np.zeros(partition.k, dtype=np.int64)
    with _open_csv(path) as fh:
        header, rows = _read_rows(fh, path, EVAL_COLUMNS)
    scalar_cols = [c for c in header if c.startswith(SCALAR_PREFIX)]
    extra = set(header) - set(EVAL_COLUMNS) - set(scalar_cols) - {"gt_class"}
    if extra:
        raise MalformedManifest(f"{path}: unexpected column(s) {sorted(extra)}", line=1)
    for line, row in rows:
        sid = row["sample_id"].strip()
        if not sid:
            raise MalformedManifest("empty sample_id", line=line)
        if sid in seen:
            raise DuplicateSample(f"duplicate sample_id {sid!r}", line=line)
        seen.add(sid)
        true_c = partition.index(row["true_class"].strip(), line=line)
        recon_c = partition.index(row["recon_class"].strip(), line=line)
        scalars = {}
        for col in scalar_cols:
            cell = row[col].strip()
            if cell == "":
                continue
            try:
                value = float(cell)
            except ValueError:
                raise MalformedManifest(f"{col}: not a number: {cell!r}", line=line) from None
            if not math.isfinite(value):
                raise MalformedManifest(f"{col}: non-finite value {cell!r}", line=line)
            scalars[col[len(SCALAR_PREFIX):]] = value
        e_true, e_recon = emb.get(sid, (None, None))
        if e_true is not None and e_recon is not None and len(e_true) != len(e_recon):
            raise DimensionMismatch(f"{sid}: embedding dimensions differ", line=line)
        if first_per_class is not None:
            gt = (row.get("gt_class") or "").strip()
            if gt and partition.index(gt, line=line) != true_c:
                continue
            if kept[true_c] >= first_per_class:
                continue
            kept[true_c] += 1
        records.append(EvalRecord(sid, true_c, recon_c, e_true, e_recon, scalars))
    return EvalSet(partition, tuple(records), name if name is not None else path.stem)


def write_eval_manifest(
    eval_set: EvalSet, path: str | Path, embeddings: str | Path | None = None
) -> None:
    """Serialize an EvalSet so that :func:`load_eval_manifest` reproduces it exactly."""
    labels = eval_set.partition.labels
    scalar_names = eval_set.scalar_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(EVAL_COLUMNS) + [SCALAR_PREFIX + s for s in scalar_names])
        for r in eval_set.records:
            cells = [repr(r.scalars[s]) if s in r.scalars else "" for s in scalar_names]
            writer.writerow([r.sample_id, labels[r.true_class], labels[r.recon_class], *cells])
    if embeddings is not None:
        with open(embeddings, "w", encoding="utf-8", newline="\n") as fh:
            for r in eval_set.records:
                if r.embedding_true is None and r.embedding_recon is None:
                    continue
                obj = {
                    "sample_id": r.sample_id,
                    "true": None if r.embedding_true is None else list(r.embedding_true),
                    "recon": None if r.embedding_recon is None else list(r.embedding_recon),
                }
                fh.write(json.dumps(obj) + "\n")


def load_diversity_manifest(
    path: str | Path,
    partition: ClassPartition,
    expected_conditions: Sequence[str] | None = None,
) -> DiversitySet:
    """Load a ``condition_id,replicate,recon_class`` manifest.

    Conditions may be declared up front, either through ``expected_conditions``
    or a leading ``# conditions: a,b,c`` comment line; a declared condition
    without rows raises :class:`EmptyCondition`.
    """
    path = Path(path)
    declared = list(expected_conditions or [])
    groups: "OrderedDict[str, list[int]]" = OrderedDict()
    replicates: dict[str, set[str]] = {}
    with _open_csv(path) as fh:
        lines = fh.readlines()
    for line in lines:
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if body.lower().startswith("conditions:"):
            declared += [c.strip() for c in body.split(":", 1)[1].split(",") if c.strip()]
    _, rows = _read_rows(lines, path, DIVERSITY_COLUMNS)
    for line, row in rows:
        cid = row["condition_id"].strip()
        rep = row["replicate"].strip()
        if not cid or not rep:
            raise MalformedManifest("empty condition_id or replicate", line=line)
        if rep in replicates.setdefault(cid, set()):
            raise MalformedManifest(f"duplicate replicate {rep!r} for condition {cid!r}", line=line)
        replicates[cid].add(rep)
        groups.setdefault(cid, []).append(partition.index(row["recon_class"].strip(), line=line))
    for cid in declared:
        if cid not in groups:
            raise EmptyCondition(f"declared condition {cid!r} has no rows")
    if not groups:
        raise EmptyCondition(f"{path}: no conditions")
    ordered = declared + [c for c in groups if c not in declared]
    seen_ids: set[str] = set()
    conditions = []
    for cid in ordered:
        if cid in seen_ids:
            continue
        seen_ids.add(cid)
        conditions.append(Condition(cid, tuple(groups[cid])))
    return DiversitySet(partition, tuple(conditions))


def write_diversity_manifest(dset: DiversitySet, path: str | Path) -> None:
    labels = dset.partition.labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIVERSITY_COLUMNS)
        for cond in dset.conditions:
            for i, c in enumerate(cond.recon_classes):
                writer.writerow([cond.condition_id, i, labels[c]])
