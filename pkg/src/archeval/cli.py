"""Command-line entry point.

Exit codes: 0 success, 1 runtime or I/O failure, 2 validation failure.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .errors import (ArchEvalError, DatasetError, DegenerateIndexError, IndexFormatError, KBValidationError,
                     StageError)
from .evaluation import DEFAULT_SAMPLE_CAP, class_subset_crr, genuine_imposter_split, leave_one_out_crr
from .features import SiftConfig
from .imaging import PreprocessConfig
from .index import atomic_write, build_index, compute_pairwise_scores, load_index, save_index
from .knowledge import DEFAULT_CONFIDENCE_THRESHOLD, evaluate_design, load_kb
from .labels import PatternLabel
from .matching import MatchConfig

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("archeval")


class Fail(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


@dataclasses.dataclass(frozen=True)
class Configs:
    pre: PreprocessConfig = PreprocessConfig()
    sift: SiftConfig = SiftConfig()
    match: MatchConfig = MatchConfig()


def _section(cls, data: dict, name: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise Fail(f"config: unknown key(s) in [{name}]: {', '.join(unknown)}", EXIT_INVALID)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise Fail(f"config: invalid [{name}] section: {exc}", EXIT_INVALID) from None


def load_configs(path: str | None, gate_override: bool = False) -> Configs:
    """Read the optional JSON config; command-line flags win over file values."""
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise Fail(f"config: cannot read {path}: {exc}", EXIT_RUNTIME) from None
        except json.JSONDecodeError as exc:
            raise Fail(f"config: {path} is not valid JSON: {exc}", EXIT_INVALID) from None
        if not isinstance(data, dict):
            raise Fail(f"config: {path} must hold a JSON object", EXIT_INVALID)
        unknown = sorted(set(data) - {"preprocess", "sift", "match"})
        if unknown:
            raise Fail(f"config: unknown section(s): {', '.join(unknown)}", EXIT_INVALID)
    pre_data = dict(data.get("preprocess", {}))
    if gate_override:
        pre_data["gate_override"] = True
    return Configs(_section(PreprocessConfig, pre_data, "preprocess"),
                   _section(SiftConfig, data.get("sift", {}), "sift"),
                   _section(MatchConfig, data.get("match", {}), "match"))


def _write_json(path: str, payload: dict) -> None:
    try:
        atomic_write(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    except OSError as exc:
        raise Fail(f"cannot write {path}: {exc}", EXIT_RUNTIME) from None


def _open_index(path: str):
    try:
        return load_index(path)
    except OSError as exc:
        raise Fail(f"index: cannot read {path}: {exc}", EXIT_RUNTIME) from None
    except IndexFormatError as exc:
        raise Fail(f"index: {path}: {exc}", EXIT_RUNTIME) from None


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             help="JSON file with preprocess/sift/match sections.")
out_option = click.option("--out", type=click.Path(dir_okay=False), help="Also write a JSON report here.")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="archeval")
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def cli(verbose: int) -> None:
    """Classify architecture diagrams and report their quality attributes."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@cli.command("index")
@click.argument("dataset_root", type=click.Path(file_okay=False))
@click.argument("out_index", type=click.Path(dir_okay=False))
@config_option
@out_option
@click.option("--gate-override", is_flag=True, help="Index images below the resolution gate (with a warning).")
@click.option("--with-scores", is_flag=True, help="Cache the pairwise score matrix in the index.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
def cmd_index(dataset_root, out_index, config_path, out, gate_override, with_scores, workers):
    """Build an index from DATASET_ROOT/<pattern-label>/<image> files."""
    cfgs = load_configs(config_path, gate_override)
    try:
        index = build_index(dataset_root, cfgs.pre, cfgs.sift, workers=workers)
    except DatasetError as exc:
        raise Fail(f"index: {exc}", EXIT_INVALID) from None
    if with_scores and len(index) >= 2:
        index.scores = compute_pairwise_scores(index, cfgs.match)
    report = index.build_report
    for w in report.warnings:
        click.echo(f"WARNING {w}", err=True)
    try:
        save_index(index, out_index)
    except OSError as exc:
        raise Fail(f"index: cannot write {out_index}: {exc}", EXIT_RUNTIME) from None
    click.echo(str(report))
    if out:
        _write_json(out, {"indexed": report.indexed,
                          "rejected": [{"path": p, "reason": r} for p, r in report.rejected],
                          "warnings": report.warnings})


@cli.command("evaluate")
@click.argument("index_path", type=click.Path(dir_okay=False))
@click.argument("kb_path", type=click.Path())
@click.argument("image_path", type=click.Path(dir_okay=False))
@config_option
@out_option
@click.option("--top-k", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--min-confidence", type=click.FloatRange(0.0, 1.0), default=DEFAULT_CONFIDENCE_THRESHOLD,
              show_default=True, help="Rank-1 dissimilarity above this value flags the report as low confidence.")
@click.option("--gate-override", is_flag=True, help="Accept a query image below the resolution gate.")
@click.option("--qa", "requested", multiple=True, help="Also recommend tactics for this QA (repeatable).")
def cmd_evaluate(index_path, kb_path, image_path, config_path, out, top_k, min_confidence, gate_override,
                 requested):
    """Evaluate the design shown in IMAGE_PATH."""
    cfgs = load_configs(config_path, gate_override)
    try:
        kb = load_kb(kb_path)
    except OSError as exc:
        raise Fail(f"knowledge base: cannot read {kb_path}: {exc}", EXIT_RUNTIME) from None
    except KBValidationError as exc:
        raise Fail(f"knowledge base: {exc}", EXIT_INVALID) from None
    index = _open_index(index_path)
    try:
        report = evaluate_design(kb, index, image_path, cfgs.pre, cfgs.sift, cfgs.match, top_k=top_k,
                                 confidence_threshold=min_confidence, requested_qas=list(requested))
    except StageError as exc:
        raise Fail(f"evaluate failed at stage '{exc.stage}': {exc.cause}", EXIT_RUNTIME) from None
    click.echo(report.to_text())
    if out:
        try:
            atomic_write(out, report.to_json().encode())
        except OSError as exc:
            raise Fail(f"cannot write {out}: {exc}", EXIT_RUNTIME) from None


@cli.command("crr")
@click.argument("index_path", type=click.Path(dir_okay=False))
@config_option
@out_option
@click.option("--subset-curve", is_flag=True, help="Also compute CRR over k-class subsets.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sample-cap", type=click.IntRange(min=1), default=DEFAULT_SAMPLE_CAP, show_default=True)
def cmd_crr(index_path, config_path, out, subset_curve, seed, sample_cap):
    """Leave-one-out rank-1 recognition rate over the index."""
    cfgs = load_configs(config_path)
    index = _open_index(index_path)
    try:
        if len(index) < 2 or len(set(index.labels)) < 2:
            raise DegenerateIndexError(f"index {index_path} needs at least 2 records and 2 labels "
                                       f"(has {len(index)} records, {len(set(index.labels))} labels)")
        scores = index.scores if index.scores is not None else compute_pairwise_scores(index, cfgs.match)
        report = leave_one_out_crr(index, cfgs.match, scores=scores)
        dists = genuine_imposter_split(scores, index.labels)
        curve = class_subset_crr(index, cfgs.match, seed, sample_cap, scores=scores) if subset_curve else None
    except DegenerateIndexError as exc:
        raise Fail(f"crr: {exc}", EXIT_INVALID) from None
    click.echo(report.to_text())
    click.echo()
    click.echo(dists.to_text())
    if curve is not None:
        click.echo()
        click.echo(curve.to_text())
    if out:
        payload = {"crr": report.to_dict(), "scores": dists.to_dict()}
        if curve is not None:
            payload["subset_curve"] = curve.to_dict()
        _write_json(out, payload)


@cli.command("kb-validate")
@click.argument("kb_path", type=click.Path())
def cmd_kb_validate(kb_path):
    """Validate a knowledge-base file and list every violation."""
    try:
        kb = load_kb(kb_path)
    except OSError as exc:
        raise Fail(f"knowledge base: cannot read {kb_path}: {exc}", EXIT_RUNTIME) from None
    except KBValidationError as exc:
        raise Fail(str(exc), EXIT_INVALID) from None
    click.echo(f"OK {kb.summary()}")


@cli.command("stats")
@click.argument("index_path", type=click.Path(dir_okay=False))
@config_option
@out_option
def cmd_stats(index_path, config_path, out):
    """Per-label record and keypoint counts, plus genuine/imposter score summaries."""
    cfgs = load_configs(config_path)
    index = _open_index(index_path)
    lines = [f"records: {len(index)}", f"score matrix cached: {'yes' if index.scores is not None else 'no'}"]
    per_label = []
    for label in PatternLabel:
        recs = [r for r in index.records if r.label is label]
        if not recs:
            continue
        counts = [len(r.features) for r in recs]
        per_label.append({"label": label.value, "records": len(recs), "keypoints_mean": sum(counts) / len(counts),
                          "keypoints_min": min(counts), "keypoints_max": max(counts)})
        lines.append(f"  {label.value:<36} {len(recs):>5} images  keypoints mean {sum(counts) / len(counts):7.1f}"
                     f"  min {min(counts):4d}  max {max(counts):4d}")
    payload = {"records": len(index), "labels": per_label}
    if len(index) >= 2:
        scores = index.scores if index.scores is not None else compute_pairwise_scores(index, cfgs.match)
        dists = genuine_imposter_split(scores, index.labels)
        lines += ["", dists.to_text()]
        payload["scores"] = dists.to_dict()
    click.echo("\n".join(lines))
    if out:
        _write_json(out, payload)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="archeval", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_RUNTIME
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except ArchEvalError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
