"""Benchmark report assembly and rendering (JSON, long-format CSV, Markdown).

Markers never re-threshold anything: a performance cell is bold exactly when
its paired test did not reject, and a fairness/diversity cell carries a cross
exactly when its uniformity test rejected.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import attributes, fairness, stats
from .core import DiversitySet, EvalSet
from .errors import (
    AllZeroDifferences,
    DegenerateAllCorrect,
    DegenerateAllWrong,
    DegenerateMargin,
    NoPairedSamples,
    UnknownMetric,
    ValidationError,
    ZeroVariance,
)
from .fairness import Kind

# column order of the performance table; other scalar metrics follow alphabetically
METRIC_ORDER = ("lpips", "dssim", attributes.COSINE, attributes.LOSS_01, "niqe", "blur")
METRIC_LABELS = {
    "lpips": "LPIPS",
    "dssim": "DSSIM",
    attributes.COSINE: "L_cos",
    attributes.LOSS_01: "L_0-1",
    "niqe": "NIQE",
    "blur": "BLUR",
}
# metrics where higher raw values are better; they are negated so every column reads lower-is-better
NEGATED_METRICS = frozenset({"blur"})
BINARY_METRICS = frozenset({attributes.LOSS_01})
RDP_VARIANTS = {"estimator": Kind.RDP, "correct": Kind.RDP_CORRECT}

CROSS = "✗"
ABSENT = "—"


@dataclass
class ReportConfig:
    alpha: float = stats.ALPHA
    rdp_variant: str = "estimator"
    metrics: tuple[str, ...] | None = None
    variants: tuple[str, ...] | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.rdp_variant not in RDP_VARIANTS:
            raise ValidationError(f"rdp_variant must be one of {sorted(RDP_VARIANTS)}")


@dataclass
class ModelRuns:
    """All inputs for one model: evaluation and diversity sets keyed by variant (training set) name."""

    model: str
    eval_sets: dict[str, EvalSet] = field(default_factory=dict)
    diversity_sets: dict[str, DiversitySet] = field(default_factory=dict)


@dataclass
class PerformanceRow:
    model: str
    metric: str
    values: dict[str, float | None]
    n_pairs: int = 0
    test: stats.TestResult | None = None
    normality: stats.TestResult | None = None
    note: str | None = None

    @property
    def not_significant(self) -> bool:
        return self.test is not None and not self.test.reject


@dataclass
class DiscrepancyRow:
    model: str
    variant: str
    kind: str
    distribution: list[float] | None
    chi2: float | None
    cheb: float | None
    test: stats.TestResult | None = None
    note: str | None = None

    @property
    def rejected(self) -> bool:
        return self.test is not None and self.test.reject


@dataclass
class BreakdownRow:
    figure: str
    model: str
    variant: str
    label: str
    value: float | None


@dataclass
class BenchmarkReport:
    classes: list[str]
    variants: list[str]
    models: list[str]
    alpha: float
    rdp_variant: str
    performance: list[PerformanceRow] = field(default_factory=list)
    fairness: list[DiscrepancyRow] = field(default_factory=list)
    diversity: list[DiscrepancyRow] = field(default_factory=list)
    breakdown: list[BreakdownRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkReport":
        def test(d):
            return None if d is None else stats.TestResult(**d)

        return cls(
            classes=list(data["classes"]),
            variants=list(data["variants"]),
            models=list(data["models"]),
            alpha=data["alpha"],
            rdp_variant=data["rdp_variant"],
            performance=[
                PerformanceRow(**{**r, "test": test(r["test"]), "normality": test(r["normality"])})
                for r in data["performance"]
            ],
            fairness=[DiscrepancyRow(**{**r, "test": test(r["test"])}) for r in data["fairness"]],
            diversity=[DiscrepancyRow(**{**r, "test": test(r["test"])}) for r in data["diversity"]],
            breakdown=[BreakdownRow(**r) for r in data["breakdown"]],
        )


# -- assembly -----------------------------------------------------------------

def _ordered_metrics(names: Iterable[str]) -> list[str]:
    names = list(dict.fromkeys(names))
    head = [m for m in METRIC_ORDER if m in names]
    return head + sorted(m for m in names if m not in METRIC_ORDER)


def _no_difference(name: str, alpha: float) -> stats.TestResult:
    return stats.TestResult(name, 0.0, 0, 1.0, alpha, False)


def _paired_test(metric: str, a: np.ndarray, b: np.ndarray, alpha: float):
    """Returns (test, normality diagnostic, note)."""
    note = None
    if metric in BINARY_METRICS:
        try:
            test = stats.chi2_binary_paired(a.astype(int), b.astype(int), alpha)
        except DegenerateMargin:
            test = _no_difference("pearson_chi2_binary", alpha)
            note = "degenerate table (identical constant losses): no evidence of difference"
        return test, None, note
    try:
        test = stats.wilcoxon_signed_rank(a, b, alpha)
    except AllZeroDifferences:
        test = _no_difference("wilcoxon", alpha)
        note = "all paired differences are zero: no evidence of difference"
    normality = None
    try:
        normality = stats.anderson_darling_normal(a - b, alpha)
    except (ValidationError, ZeroVariance):
        pass
    return test, normality, note


def _performance_rows(run: ModelRuns, variants: Sequence[str], metrics, alpha) -> list[PerformanceRow]:
    sets = {v: run.eval_sets[v] for v in variants if v in run.eval_sets}
    if metrics is None:
        names = []
        for s in sets.values():
            names += attributes.available_metrics(s)
        metrics = _ordered_metrics(names)
    paired = [v for v in variants if v in sets][:2]
    if len(paired) == 2:
        common = set(sets[paired[0]].by_id()) & set(sets[paired[1]].by_id())
        if not common:
            raise NoPairedSamples(f"{run.model}: variants {paired} share no sample_id")
    rows = []
    for metric in metrics:
        sign = -1.0 if metric in NEGATED_METRICS else 1.0
        values = {}
        per_variant = {}
        for v, s in sets.items():
            try:
                values[v] = sign * attributes.summarize_metric(s, metric).mean
            except UnknownMetric:
                values[v] = None
            per_variant[v] = attributes.metric_values(s, metric)
        row = PerformanceRow(run.model, metric, values)
        if len(paired) == 2:
            va, vb = per_variant[paired[0]], per_variant[paired[1]]
            ids = [i for i in va if i in vb]
            row.n_pairs = len(ids)
            if ids:
                a = np.array([sign * va[i] for i in ids])
                b = np.array([sign * vb[i] for i in ids])
                row.test, row.normality, row.note = _paired_test(metric, a, b, alpha)
            else:
                row.note = "no paired samples carry this metric"
        rows.append(row)
    return rows


def _discrepancy_row(model, variant, kind: Kind, data, alpha) -> DiscrepancyRow:
    try:
        sc = fairness.score(kind, data)
        row = DiscrepancyRow(model, variant, kind.value, list(sc.distribution.probs), sc.chi2_divergence, sc.chebyshev)
    except DegenerateAllCorrect:
        row = DiscrepancyRow(model, variant, kind.value, None, 0.0, 0.0,
                             note="degenerate: every class reconstructed perfectly (DegenerateAllCorrect); reported as 0")
    except DegenerateAllWrong:
        row = DiscrepancyRow(model, variant, kind.value, None, 0.0, 0.0,
                             note="degenerate: no class ever reconstructed correctly (DegenerateAllWrong); reported as 0")
    try:
        row.test = fairness.uniformity_test(kind, data, alpha)
    except DegenerateMargin as exc:
        extra = f"uniformity test not applicable ({exc})"
        row.note = f"{row.note}; {extra}" if row.note else extra
    return row


def build_report(runs: Sequence[ModelRuns], config: ReportConfig | None = None) -> BenchmarkReport:
    """Assemble performance, fairness and diversity tables for every model and variant.

    Paired tests compare the first two variants of each model on the sample
    ids both share: Wilcoxon signed-rank for continuous metrics, the Pearson
    2x2 test for the binary 0-1 loss.
    """
    config = config or ReportConfig()
    partitions = {s.partition for r in runs for s in (*r.eval_sets.values(), *r.diversity_sets.values())}
    if len(partitions) != 1:
        raise ValidationError("all inputs must share one class partition")
    partition = partitions.pop()
    variants = list(config.variants or [])
    for r in runs:
        for v in (*r.eval_sets, *r.diversity_sets):
            if v not in variants and not config.variants:
                variants.append(v)
    rdp_kind = RDP_VARIANTS[config.rdp_variant]
    labels = list(partition.labels)
    report = BenchmarkReport(labels, variants, [r.model for r in runs], config.alpha, config.rdp_variant)
    for run in runs:
        if run.eval_sets:
            report.performance += _performance_rows(run, variants, config.metrics, config.alpha)
        for v in variants:
            s = run.eval_sets.get(v)
            if s is not None:
                for kind in (rdp_kind, Kind.PR):
                    row = _discrepancy_row(run.model, v, kind, s, config.alpha)
                    report.fairness.append(row)
                    if row.distribution is not None:
                        report.breakdown += [
                            BreakdownRow(kind.value, run.model, v, lab, p)
                            for lab, p in zip(labels, row.distribution)
                        ]
                summary = attributes.summarize_metric(s, attributes.LOSS_01)
                report.breakdown += [
                    BreakdownRow(attributes.LOSS_01, run.model, v, lab, m)
                    for lab, m in zip(labels, summary.class_means)
                ]
            d = run.diversity_sets.get(v)
            if d is not None:
                row = _discrepancy_row(run.model, v, Kind.UCPR, d, config.alpha)
                report.diversity.append(row)
                report.breakdown += [
                    BreakdownRow(Kind.UCPR.value, run.model, v, lab, p)
                    for lab, p in zip(labels, row.distribution)
                ]
    return report


# -- rendering ---------------------------------------------------------------

def to_json(report: BenchmarkReport) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def from_json(text: str) -> BenchmarkReport:
    return BenchmarkReport.from_dict(json.loads(text))


CSV_COLUMNS = ("block", "model", "variant", "metric", "value", "test", "statistic", "p_value", "reject", "note")


def _test_cells(t: stats.TestResult | None) -> list:
    if t is None:
        return ["", "", "", ""]
    return [t.name, repr(t.statistic), repr(t.p_value), int(t.reject)]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def to_csv(report: BenchmarkReport) -> str:
    """Long format: one row per (block, model, variant, quantity)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.performance:
        for v in report.variants:
            if v in row.values:
                w.writerow(["performance", row.model, v, row.metric, _num(row.values[v]),
                            *_test_cells(row.test), row.note or ""])
    for block, rows in (("fairness", report.fairness), ("diversity", report.diversity)):
        for row in rows:
            for q, val in (("chi2", row.chi2), ("cheb", row.cheb)):
                w.writerow([block, row.model, row.variant, f"{row.kind}-{q}", _num(val),
                            *_test_cells(row.test), row.note or ""])
    for b in report.breakdown:
        w.writerow(["breakdown", b.model, b.variant, f"{b.figure}:{b.label}", _num(b.value), "", "", "", "", ""])
    return buf.getvalue()


def _fmt(v: float | None, digits: int) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ABSENT
    return f"{v:.{digits}f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" if i == 0 else "---:" for i in range(len(header))) + "|"]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def to_markdown(report: BenchmarkReport, digits: int = 3) -> str:
    lines: list[str] = []
    variants = report.variants
    alpha = report.alpha
    if report.performance:
        metrics = _ordered_metrics(r.metric for r in report.performance)
        lines.append("## Performance")
        lines.append("")
        header = ["Model"] + [f"{METRIC_LABELS.get(m, m)} ({v})" for m in metrics for v in variants]
        body = []
        for model in report.models:
            cells = {(r.metric): r for r in report.performance if r.model == model}
            if not cells:
                continue
            row = [model]
            for m in metrics:
                r = cells.get(m)
                for v in variants:
                    val = _fmt(None if r is None else r.values.get(v), digits)
                    row.append(f"**{val}**" if r is not None and r.not_significant and val != ABSENT else val)
            body.append(row)
        lines += _table(header, body)
        lines.append("")
        lines.append(
            f"Values are in bold if the null hypothesis that the results of {' and '.join(variants[:2])} "
            f"coincide is not rejected (alpha = {alpha}). Lower scores indicate better performance; "
            "BLUR is the negated blur index."
        )
        lines.append("")

    for title, rows in (("Fairness", report.fairness), ("Diversity", report.diversity)):
        if not rows:
            continue
        kinds = list(dict.fromkeys(r.kind for r in rows))
        lines.append(f"## {title}")
        lines.append("")
        header = ["Model"]
        for kind in kinds:
            header += [f"Δ_{kind}-χ² ({v})" for v in variants]
            header += [f"Δ_{kind}-Cheb ({v})" for v in variants]
            header += [f"P_{kind}=U([k]) ({v})" for v in variants]
        body = []
        for model in report.models:
            mine = {(r.kind, r.variant): r for r in rows if r.model == model}
            if not mine:
                continue
            row = [model]
            for kind in kinds:
                row += [_fmt(mine[(kind, v)].chi2, digits) if (kind, v) in mine else ABSENT for v in variants]
                row += [_fmt(mine[(kind, v)].cheb, digits) if (kind, v) in mine else ABSENT for v in variants]
                for v in variants:
                    r = mine.get((kind, v))
                    row.append(ABSENT if r is None or r.test is None else (CROSS if r.rejected else ""))
            body.append(row)
        lines += _table(header, body)
        lines.append("")
        lines.append(
            f"{CROSS} marks that the null hypothesis P = U([k]) is rejected (alpha = {alpha}). "
            "Lower scores indicate more " + ("fairness." if title == "Fairness" else "diversity.")
        )
        notes = [f"- {r.model} / {r.variant} / {r.kind}: {r.note}" for r in rows if r.note]
        if notes:
            lines.append("")
            lines += notes
        lines.append("")

    if report.breakdown:
        lines.append("## Per-class breakdown")
        lines.append("")
        figures = list(dict.fromkeys(b.figure for b in report.breakdown))
        for fig in figures:
            lines.append(f"### {fig}")
            lines.append("")
            keyed = {}
            for b in report.breakdown:
                if b.figure == fig:
                    keyed.setdefault((b.model, b.variant), {})[b.label] = b.value
            body = [[m, v] + [_fmt(vals.get(c), digits) for c in report.classes] for (m, v), vals in keyed.items()]
            lines += _table(["Model", "Variant"] + report.classes, body)
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"


FORMATS = {"json": (to_json, ".json"), "csv": (to_csv, ".csv"), "markdown": (to_markdown, ".md")}


def emit(report: BenchmarkReport, fmt: str, path: str | Path) -> None:
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; choose from {sorted(FORMATS)}")
    render, _ = FORMATS[fmt]
    Path(path).write_text(render(report), encoding="utf-8")


def emit_all(report: BenchmarkReport, out_dir: str | Path, stem: str,
             formats: Sequence[str] = ("json", "csv", "markdown")) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        path = out_dir / f"{stem}{FORMATS[fmt][1]}" if fmt in FORMATS else out_dir / f"{stem}.{fmt}"
        emit(report, fmt, path)
        paths.append(path)
    return paths
