"""Command-line entry point.

Exit codes: 0 success, 1 I/O error, 2 validation error, 3 infeasible or
degenerate computation.
"""
from __future__ import annotations

import functools
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import attributes, datasets, fairness, imaging, reporting
from .config import CONFIG_ENV, RunConfig, load_config
from .core import (
    ClassPartition,
    DIVERSITY_COLUMNS,
    infer_partition,
    load_diversity_manifest,
    load_eval_manifest,
    read_partition,
    write_eval_manifest,
)
from .errors import ComputationError, CondFairError, ValidationError
from .fairness import Kind

log = logging.getLogger("condfair")

EXIT_IO, EXIT_VALIDATION, EXIT_COMPUTATION = 1, 2, 3
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    """Map library errors to exit codes; tracebacks are logged under --verbose."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (CondFairError, OSError) as exc:
            log.debug("command failed", exc_info=True)
            if isinstance(exc, OSError):
                _fail(EXIT_IO, str(exc))
            code = EXIT_COMPUTATION if isinstance(exc, ComputationError) else EXIT_VALIDATION
            _fail(code, f"{type(exc).__name__}: {exc}")
    return wrapper


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _require_dir(path) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no such directory: {path}")
    return path


def _partition(classes: str | None, manifest: Path, columns=("true_class", "recon_class")) -> ClassPartition:
    if classes:
        return read_partition(classes)
    return infer_partition(manifest, columns)


def _cfg(ctx: click.Context) -> RunConfig:
    return ctx.obj or RunConfig()


@click.group()
@click.option("--config", "config_path", envvar=CONFIG_ENV, type=click.Path(dir_okay=False),
              help=f"key = value config file (default from ${CONFIG_ENV}).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, verbose):
    """Evaluate conditional generative models for performance, fairness and diversity."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if config_path:
        try:
            ctx.obj = load_config(_require_file(config_path))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
        except ValidationError as exc:
            _fail(EXIT_VALIDATION, str(exc))
    else:
        ctx.obj = RunConfig()


classes_option = click.option(
    "--classes", default=None,
    help="Class labels in order: comma-separated, or a file with one label per line. "
         "Defaults to first-appearance order in the input.",
)
alpha_option = click.option("--alpha", type=float, default=None, help="Significance level (default 0.05).")
format_option = click.option(
    "--format", "formats", multiple=True, type=click.Choice(sorted(reporting.FORMATS)),
    help="Report format(s); repeatable. Default: all three.",
)
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
                          show_default=True, help="Directory for report files.")


# -- validate ------------------------------------------------------------------

@main.command()
@click.argument("manifest")
@classes_option
@click.option("--embeddings", default=None, help="JSON-lines embedding sidecar.")
@click.pass_context
@handle_errors
def validate(ctx, manifest, classes, embeddings):
    """Check an evaluation or diversity manifest."""
    path = _require_file(manifest)
    if embeddings:
        _require_file(embeddings)
    classes = classes or _cfg(ctx).classes
    with open(path, encoding="utf-8") as fh:
        header = next((ln for ln in fh if ln.strip() and not ln.startswith("#")), "")
    if DIVERSITY_COLUMNS[0] in header.split(","):
        part = _partition(classes, path, ("recon_class",))
        dset = load_diversity_manifest(path, part)
        sizes = sorted({len(c.recon_classes) for c in dset.conditions})
        click.echo(f"ok: {len(dset.conditions)} conditions, replicates per condition {sizes}, k={part.k}")
    else:
        part = _partition(classes, path)
        es = load_eval_manifest(path, part, embeddings=embeddings)
        click.echo(f"ok: {len(es)} records, k={part.k}, scalars={es.scalar_names()}")


# -- metrics -------------------------------------------------------------------

def _image_scalars(record, true_dir: Path, recon_dir: Path) -> dict[str, float]:
    recon = imaging.load_png(_require_file(recon_dir / f"{record.sample_id}.png"))
    out = {"blur": imaging.blur_index(recon)}
    if true_dir is not None:
        true = imaging.load_png(_require_file(true_dir / f"{record.sample_id}.png"))
        out["dssim"] = imaging.dssim(true, recon)
    return out


@main.command()
@click.argument("manifest")
@classes_option
@click.option("--embeddings", default=None)
@click.option("--true-images", type=click.Path(file_okay=False), default=None,
              help="Directory of originals named <sample_id>.png (enables DSSIM).")
@click.option("--recon-images", type=click.Path(file_okay=False), default=None,
              help="Directory of reconstructions named <sample_id>.png (enables blur, DSSIM).")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--write-manifest", type=click.Path(dir_okay=False), default=None,
              help="Also write the manifest augmented with computed scalars.")
@click.option("--name", default=None, help="Model name used in the report.")
@format_option
@out_option
@click.pass_context
@handle_errors
def metrics(ctx, manifest, classes, embeddings, true_images, recon_images, workers, write_manifest,
            name, formats, out_dir):
    """Summarize per-record performance metrics overall and per class."""
    cfg = _cfg(ctx).override(formats=formats or None)
    path = _require_file(manifest)
    part = _partition(classes or cfg.classes, path)
    es = load_eval_manifest(path, part, embeddings=embeddings and _require_file(embeddings))
    if true_images and not recon_images:
        raise ValidationError("--true-images requires --recon-images")
    if recon_images:
        recon_dir = _require_dir(recon_images)
        true_dir = _require_dir(true_images) if true_images else None
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            extra = list(pool.map(lambda r: _image_scalars(r, true_dir, recon_dir), es.records))
        es = es.replace_records(r.with_scalars(**x) for r, x in zip(es.records, extra))
    es = attributes.annotate_cosine(es)
    if write_manifest:
        write_eval_manifest(es, write_manifest)
    names = [m for m in attributes.available_metrics(es) if cfg.metrics is None or m in cfg.metrics]
    for m in names:
        s = attributes.summarize_metric(es, m)
        per_class = ", ".join(
            f"{lab}={'—' if v is None else f'{v:.4f}'}" for lab, v in zip(part.labels, s.class_means)
        )
        click.echo(f"{m}: mean={s.mean:.6f} (n={s.count}); {per_class}")
    model = name or es.name
    run = reporting.ModelRuns(model, {es.name: es})
    report = reporting.build_report([run], reporting.ReportConfig(cfg.alpha, cfg.rdp_variant, tuple(names)))
    report.fairness = []
    report.breakdown = [b for b in report.breakdown if b.figure == attributes.LOSS_01]
    for p in reporting.emit_all(report, out_dir, "metrics", cfg.formats):
        click.echo(f"wrote {p}")


# -- fairness ------------------------------------------------------------------

def _verdict(test) -> str:
    if test is None:
        return "uniformity test not applicable"
    decision = "REJECTED" if test.reject else "not rejected"
    return (f"H0 P=U([k]) {decision} at alpha={test.alpha} "
            f"({test.name}: statistic={test.statistic:.6g}, dof={test.dof}, p={test.p_value:.4g})")


def _print_rows(rows, labels):
    for row in rows:
        click.echo(f"{row.kind}:")
        if row.distribution is not None:
            dist = ", ".join(f"{lab}={p:.6f}" for lab, p in zip(labels, row.distribution))
            click.echo(f"  distribution: {dist}")
        if row.note:
            click.echo(f"  note: {row.note}")
        click.echo(f"  Δ_{row.kind}-χ² = {row.chi2:.6f}")
        click.echo(f"  Δ_{row.kind}-Cheb = {row.cheb:.6f}")
        click.echo(f"  {_verdict(row.test)}")


@main.command(name="fairness")
@click.argument("manifest")
@classes_option
@alpha_option
@click.option("--rdp-variant", type=click.Choice(sorted(reporting.RDP_VARIANTS)), default=None)
@format_option
@out_option
@click.pass_context
@handle_errors
def fairness_cmd(ctx, manifest, classes, alpha, rdp_variant, formats, out_dir):
    """RDP and PR discrepancies to uniformity with Pearson tests."""
    cfg = _cfg(ctx).override(alpha=alpha, rdp_variant=rdp_variant, formats=formats or None)
    path = _require_file(manifest)
    part = _partition(classes or cfg.classes, path)
    es = load_eval_manifest(path, part)
    run = reporting.ModelRuns(es.name, {es.name: es})
    report = reporting.build_report([run], reporting.ReportConfig(cfg.alpha, cfg.rdp_variant, ()))
    report.performance = []
    report.breakdown = [b for b in report.breakdown if b.figure != attributes.LOSS_01]
    _print_rows(report.fairness, part.labels)
    for p in reporting.emit_all(report, out_dir, "fairness", cfg.formats):
        click.echo(f"wrote {p}")


# -- diversity -----------------------------------------------------------------

@main.command()
@click.argument("manifest")
@classes_option
@alpha_option
@format_option
@out_option
@click.pass_context
@handle_errors
def diversity(ctx, manifest, classes, alpha, formats, out_dir):
    """UCPR discrepancy to uniformity from repeated reconstructions of uninformative conditions."""
    cfg = _cfg(ctx).override(alpha=alpha, formats=formats or None)
    path = _require_file(manifest)
    part = _partition(classes or cfg.classes, path, ("recon_class",))
    dset = load_diversity_manifest(path, part)
    run = reporting.ModelRuns(path.stem, diversity_sets={path.stem: dset})
    report = reporting.build_report([run], reporting.ReportConfig(cfg.alpha, cfg.rdp_variant))
    _print_rows(report.diversity, part.labels)
    for p in reporting.emit_all(report, out_dir, "diversity", cfg.formats):
        click.echo(f"wrote {p}")


# -- subsample -----------------------------------------------------------------

@main.command()
@click.option("--index", "index_path", required=True, help="CSV with sample ids and class labels.")
@click.option("--target", "target_path", default=None, help="CSV class,probability.")
@click.option("--unfairface", is_flag=True, help="Use the built-in biased race target.")
@classes_option
@click.option("--id-column", default="sample_id", show_default=True)
@click.option("--class-column", default="class", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Output file of newline-separated sample ids.")
@click.pass_context
@handle_errors
def subsample(ctx, index_path, target_path, unfairface, classes, id_column, class_column, seed, out_path):
    """Largest subset whose class proportions follow a target distribution."""
    cfg = _cfg(ctx).override(seed=seed)
    path = _require_file(index_path)
    if bool(target_path) == bool(unfairface):
        raise ValidationError("give exactly one of --target or --unfairface")
    if classes or cfg.classes:
        part = read_partition(classes or cfg.classes)
    elif unfairface:
        part = ClassPartition(datasets.FAIRFACE_RACES)
    else:
        part = infer_partition(path, (class_column,))
    index = datasets.load_labeled_index(path, part, id_column, class_column)
    if unfairface:
        target = datasets.unfairface_target(part)
    else:
        target = datasets.load_target(_require_file(target_path), part)
    ids = datasets.max_biased_subset(index, target, cfg.seed)
    datasets.write_subset(ids, out_path)
    chosen = set(ids)
    counts = np.bincount([c for s, c in zip(index.sample_ids, index.classes) if s in chosen], minlength=part.k)
    n = len(ids)
    summary = Path(str(out_path) + ".summary.csv")
    lines = ["class,available,target,count,proportion"]
    for j, lab in enumerate(part.labels):
        prop = float(counts[j] / n) if n else 0.0
        lines.append(f"{lab},{index.available()[j]},{target.probs[j]!r},{counts[j]},{prop!r}")
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"n={n}")
    for line in lines[1:]:
        click.echo("  " + line)
    click.echo(f"wrote {out_path} and {summary}")


# -- conditions ----------------------------------------------------------------

def _parse_perturb(value: str | None):
    if not value:
        return None
    try:
        n, scale, seed = value.split(",")
        n, scale, seed = int(n), float(scale), int(seed)
    except ValueError:
        raise ValidationError(f"--perturb expects n,sigma,seed, got {value!r}") from None
    if n < 0 or scale < 0:
        raise ValidationError("--perturb needs n >= 0 and sigma >= 0")
    return n, scale, seed


def _perturb_seed(seed: int, class_index: int, replicate: int) -> int:
    return int(np.random.SeedSequence([seed, class_index, replicate]).generate_state(1)[0])


@main.command()
@click.argument("image_dir")
@click.argument("out_dir")
@classes_option
@click.option("--size", type=int, default=4, show_default=True, help="Side length of the conditions.")
@click.option("--pre-size", type=int, default=None,
              help="Downscale every image to this square size before averaging.")
@click.option("--perturb", default=None, help="n,sigma,seed: also write n Gaussian-perturbed copies per class.")
@click.pass_context
@handle_errors
def conditions(ctx, image_dir, out_dir, classes, size, pre_size, perturb):
    """Build one class-averaged, downscaled uninformative condition per class subdirectory."""
    root = _require_dir(image_dir)
    perturb = _parse_perturb(perturb)
    classes = classes or _cfg(ctx).classes
    labels = list(read_partition(classes).labels) if classes else sorted(p.name for p in root.iterdir() if p.is_dir())
    groups = {}
    for label in labels:
        folder = _require_dir(root / label)
        files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        images = [imaging.load_png(f) for f in files]
        if pre_size:
            images = [imaging.downsample_bilinear_aa(im, pre_size, pre_size) for im in images]
        groups[label] = images
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for ci, (label, cond) in enumerate(datasets.build_uninformative_conditions(groups, size)):
        imaging.save_png(cond, out / f"{label}.png")
        written += 1
        if perturb:
            n, scale, seed = perturb
            for r in range(n):
                noisy = imaging.perturb_gaussian(cond, scale, _perturb_seed(seed, ci, r))
                imaging.save_png(noisy, out / f"{label}_p{r:03d}.png")
                written += 1
    click.echo(f"wrote {written} condition image(s) to {out}")


# -- simulate ------------------------------------------------------------------

@main.command()
@click.option("--confusion", "confusion_path", required=True, help="CSV true_class,<label_1>,...,<label_k>.")
@click.option("--counts", required=True, help="Records per class: one integer, or one per class.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def simulate(ctx, confusion_path, counts, seed, out_path):
    """Write a synthetic evaluation manifest drawn from a confusion matrix."""
    cfg = _cfg(ctx).override(seed=seed)
    part, conf = datasets.load_confusion(_require_file(confusion_path))
    try:
        values = [int(c) for c in counts.split(",")]
    except ValueError:
        raise ValidationError(f"--counts must be integers, got {counts!r}") from None
    if len(values) == 1:
        values = values * part.k
    es = datasets.simulate_eval_set(conf, values, cfg.seed, part, name=Path(out_path).stem)
    write_eval_manifest(es, out_path)
    click.echo(f"wrote {len(es)} records to {out_path}")


# -- report --------------------------------------------------------------------

def _parse_run(spec: str) -> tuple[str, str, Path]:
    parts = spec.split(":", 2)
    if len(parts) != 3 or not all(parts):
        raise ValidationError(f"expected MODEL:VARIANT:PATH, got {spec!r}")
    return parts[0], parts[1], Path(parts[2])


@main.command()
@click.option("--run", "runs", multiple=True, help="MODEL:VARIANT:MANIFEST, repeatable.")
@click.option("--diversity", "div_runs", multiple=True, help="MODEL:VARIANT:DIVERSITY_MANIFEST, repeatable.")
@classes_option
@alpha_option
@click.option("--rdp-variant", type=click.Choice(sorted(reporting.RDP_VARIANTS)), default=None)
@click.option("--variants", default=None, help="Comma-separated variant order; the first two are compared.")
@click.option("--stem", default="report", show_default=True)
@format_option
@out_option
@click.pass_context
@handle_errors
def report(ctx, runs, div_runs, classes, alpha, rdp_variant, variants, stem, formats, out_dir):
    """Full benchmark tables: performance with paired tests, fairness and diversity."""
    cfg = _cfg(ctx).override(
        alpha=alpha, rdp_variant=rdp_variant, formats=formats or None,
        variants=tuple(v.strip() for v in variants.split(",")) if variants else None,
    )
    if not runs and not div_runs:
        raise ValidationError("nothing to report: give --run and/or --diversity")
    parsed = [_parse_run(s) for s in runs]
    parsed_div = [_parse_run(s) for s in div_runs]
    for _, _, p in parsed + parsed_div:
        _require_file(p)
    classes = classes or cfg.classes
    if classes:
        part = read_partition(classes)
    else:
        seen = {}
        for _, _, p in parsed:
            seen.update(dict.fromkeys(infer_partition(p).labels))
        for _, _, p in parsed_div:
            seen.update(dict.fromkeys(infer_partition(p, ("recon_class",)).labels))
        part = ClassPartition(tuple(seen))
    models: dict[str, reporting.ModelRuns] = {}
    for model, variant, p in parsed:
        models.setdefault(model, reporting.ModelRuns(model)).eval_sets[variant] = load_eval_manifest(p, part)
    for model, variant, p in parsed_div:
        models.setdefault(model, reporting.ModelRuns(model)).diversity_sets[variant] = load_diversity_manifest(p, part)
    rc = reporting.ReportConfig(cfg.alpha, cfg.rdp_variant, cfg.metrics, cfg.variants)
    rep = reporting.build_report(list(models.values()), rc)
    for p in reporting.emit_all(rep, out_dir, stem, cfg.formats):
        click.echo(f"wrote {p}")


if __name__ == "__main__":
    main()
