"""Command-line front end: ingest -> clean -> generate -> stats/eval.

Exit codes are a stable contract: 0 success, 1 domain validation failure,
2 I/O or usage error. Every artifact-producing command writes a run manifest
with input digests next to its output (or wherever --manifest points).
Set KIE2QA_NO_COLOR to disable styling.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .cleaning import (
    BUILTIN_PROFILES,
    EmptyResultWarning,
    builtin_profile,
    clean_dataset,
    load_profile,
)
from .generator import (
    GenerationConfig,
    GenerationSkipWarning,
    generate,
    load_generation_config,
    load_qa_dataset,
    save_qa_dataset,
)
from .metrics import delta, evaluate_predictions, fleiss_kappa, load_predictions, self_bleu
from .model import (
    DatasetValidationError,
    dataset_paths,
    load_kie_dataset,
    read_kie_dataset,
    save_kie_dataset,
    validate_dataset,
)
from .records import RecordError, canonical_json, file_digest, read_records
from .reporting import dataset_stats, stats_table
from .templates import load_template_suite, validate_suite

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _use_color(stream) -> bool:
    return os.environ.get("KIE2QA_NO_COLOR") is None and hasattr(stream, "isatty") and stream.isatty()


def _styled(text: str, code: str, stream) -> str:
    return f"\x1b[{code}m{text}\x1b[0m" if _use_color(stream) else text


def _print_issues(issues) -> None:
    for issue in issues:
        record = canonical_json(
            {"severity": issue.severity, "location": issue.location, "message": issue.message}
        )
        color = "31" if issue.severity == "error" else "33"
        print(_styled(record, color, sys.stderr), file=sys.stderr)


def _write_manifest(
    args, command: str, inputs: list[Path], outputs: list[Path], started: float,
    seed: int | None = None, config_digest: str | None = None,
) -> None:
    path = getattr(args, "manifest", None)
    if path is None:
        if not outputs:
            return
        path = Path(str(outputs[0]) + ".manifest.json")
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "input_digests": {str(p): file_digest(p) for p in inputs},
        "config_digest": config_digest,
        "output_paths": [str(p) for p in outputs],
        "duration_seconds": round(time.monotonic() - started, 3),
    }
    Path(path).write_text(canonical_json(manifest) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    started = time.monotonic()
    try:
        ds = read_kie_dataset(args.input)
    except (RecordError,) as exc:
        _print_issues([_as_issue(exc)])
        return EXIT_DOMAIN
    issues = validate_dataset(ds)
    _print_issues(issues)
    errors = [i for i in issues if i.severity == "error"]
    warnings_ = [i for i in issues if i.severity == "warning"]
    print(
        f"{ds.name}: {len(ds.documents)} documents, "
        f"{sum(len(d.entities) for d in ds.documents)} entities, "
        f"{len(errors)} error(s), {len(warnings_)} warning(s)"
    )
    _write_manifest(args, "ingest", _dataset_inputs(args.input), [], started)
    if errors or (args.strict and warnings_):
        return EXIT_DOMAIN
    return EXIT_OK


def _as_issue(exc: Exception):
    from .model import Issue

    return Issue("error", getattr(exc, "location", "") or "", str(exc))


def cmd_clean(args) -> int:
    started = time.monotonic()
    try:
        ds = load_kie_dataset(args.dataset)
    except DatasetValidationError as exc:
        _print_issues(exc.issues)
        return EXIT_DOMAIN
    if args.profile in BUILTIN_PROFILES:
        profile = builtin_profile(args.profile)
        profile_inputs: list[Path] = []
    else:
        profile = load_profile(args.profile)
        profile_inputs = [Path(args.profile)]

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyResultWarning)
        cleaned = clean_dataset(ds, profile)
    for w in caught:
        print(_styled(f"warning: {w.message}", "33", sys.stderr), file=sys.stderr)

    docs_path, meta_path = save_kie_dataset(cleaned, args.out)
    print(f"cleaned dataset written to {docs_path}")
    _write_manifest(
        args, "clean", _dataset_inputs(args.dataset) + profile_inputs, [docs_path, meta_path], started
    )
    return EXIT_OK


def cmd_generate(args) -> int:
    started = time.monotonic()
    config = _resolve_config(args)
    if config is None:
        return EXIT_USAGE

    try:
        ds = load_kie_dataset(args.dataset)
    except DatasetValidationError as exc:
        _print_issues(exc.issues)
        return EXIT_DOMAIN
    suite = load_template_suite(args.templates)
    suite_issues = validate_suite(suite, ds.ontology)
    if suite_issues:
        _print_issues(suite_issues)
        return EXIT_DOMAIN

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", GenerationSkipWarning)
            qa = generate(ds, suite, config, jobs=args.jobs)
    except ValueError as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_DOMAIN
    for w in caught:
        print(_styled(f"warning: {w.message}", "33", sys.stderr), file=sys.stderr)

    out = Path(args.out)
    save_qa_dataset(qa, out)
    print(f"{len(qa.instances)} instances written to {out}")
    inputs = _dataset_inputs(args.dataset) + [Path(args.templates)]
    if args.config:
        inputs.append(Path(args.config))
    _write_manifest(
        args, "generate", inputs, [out], started,
        seed=config.seed, config_digest=config.digest(),
    )
    return EXIT_OK


def _resolve_config(args) -> GenerationConfig | None:
    base = {}
    if args.config:
        try:
            base = load_generation_config(args.config).record()
        except (RecordError, ValueError) as exc:
            print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
            return None
    overrides = {
        "seed": args.seed,
        "strategy": args.strategy,
        "boolean_count_per_doc": args.boolean_count_per_doc,
        "extractive_quota": args.extractive_quota,
        "boolean_quota": args.boolean_quota,
        "single_page_only": True if args.single_page_only else None,
    }
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if merged.get("seed") is None:
        print(
            "error: generate refuses to run without an explicit seed "
            "(pass --seed or set it in the config file)",
            file=sys.stderr,
        )
        return None
    try:
        return GenerationConfig(**merged)
    except (TypeError, ValueError) as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return None


def cmd_stats(args) -> int:
    started = time.monotonic()
    qa = load_qa_dataset(args.qa)
    report = dataset_stats(qa)
    if args.table:
        print(stats_table(report))
    else:
        rounded = {
            k: (round(v, 4) if isinstance(v, float) else v) for k, v in report.record().items()
        }
        print(canonical_json(rounded))
    outputs = []
    if args.out:
        Path(args.out).write_text(canonical_json(report.record()) + "\n", encoding="utf-8")
        outputs.append(Path(args.out))
    _write_manifest(args, "stats", [Path(args.qa)], outputs, started)
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.monotonic()
    qa = load_qa_dataset(args.qa)
    try:
        predictions = load_predictions(args.predictions)
        ds = load_kie_dataset(args.ocr_from)
        streams = {d.doc_id: d.ocr_text() for d in ds.documents}
        report = evaluate_predictions(qa.instances, predictions, streams)
    except (ValueError, DatasetValidationError) as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_DOMAIN

    print(f"anls {report.anls:.4f} over {report.num_records} predictions")
    for qtype, value in report.anls_by_question_type.items():
        print(f"anls[{qtype}] {value:.4f}")
    for qtype, tally in report.groundedness_counts.items():
        joined = " ".join(f"{label}={count}" for label, count in tally.items())
        print(f"groundedness[{qtype}] {joined}")
    if report.num_unscored:
        print(
            _styled(f"warning: {report.num_unscored} instance(s) had no prediction", "33", sys.stderr),
            file=sys.stderr,
        )
    outputs = []
    if args.out:
        Path(args.out).write_text(canonical_json(report.record()) + "\n", encoding="utf-8")
        outputs.append(Path(args.out))
    _write_manifest(
        args, "eval",
        [Path(args.qa), Path(args.predictions)] + _dataset_inputs(args.ocr_from),
        outputs, started,
    )
    return EXIT_OK


def cmd_delta(args) -> int:
    try:
        print(f"{delta(args.anls_d1_on_d1, args.anls_d2_on_d1):.4f}")
    except ValueError as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_selfbleu(args) -> int:
    lines = [
        line.rstrip("\n") for line in Path(args.corpus).read_text(encoding="utf-8").splitlines()
    ]
    lines = [line for line in lines if line.strip()]
    try:
        value = self_bleu(lines, n=args.n, sample_size=args.sample_size, rng=args.seed)
    except ValueError as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_DOMAIN
    print(f"{value:.4f}")
    return EXIT_OK


def cmd_kappa(args) -> int:
    rows = []
    for lineno, rec in read_records(args.ratings):
        if not isinstance(rec, list):
            print(f"error: {args.ratings}:{lineno}: expected a JSON array of counts", file=sys.stderr)
            return EXIT_DOMAIN
        rows.append(rec)
    try:
        print(f"{fleiss_kappa(rows):.4f}")
    except ValueError as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def _dataset_inputs(path) -> list[Path]:
    docs, meta = dataset_paths(path)
    return [docs, meta]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kie2qa",
        description="Build question-answer datasets from KIE annotations and evaluate predictions.",
    )
    parser.add_argument("--version", action="version", version=f"kie2qa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a KIE dataset file")
    p.add_argument("input", help="dataset documents file (.jsonl with a .meta.json companion)")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("clean", help="normalize entity values with a cleaning profile")
    p.add_argument("--dataset", required=True)
    p.add_argument(
        "--profile", required=True,
        help=f"builtin profile ({', '.join(BUILTIN_PROFILES)}) or a profile file",
    )
    p.add_argument("--out", required=True, help="output documents file")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("generate", help="generate a QA dataset")
    p.add_argument("--dataset", required=True, help="cleaned dataset documents file")
    p.add_argument("--templates", required=True, help="template suite file")
    p.add_argument("--config", default=None, help="generation config file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--strategy", choices=("per_entity", "generate_all_then_sample"), default=None)
    p.add_argument("--boolean-count-per-doc", type=int, default=None)
    p.add_argument("--extractive-quota", type=int, default=None)
    p.add_argument("--boolean-quota", type=int, default=None)
    p.add_argument("--single-page-only", action="store_true")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="summarize a QA dataset")
    p.add_argument("--qa", required=True)
    p.add_argument("--table", action="store_true", help="aligned plain-text table")
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", help="score predictions against a QA dataset")
    p.add_argument("--qa", required=True)
    p.add_argument("--predictions", required=True, help="JSONL of {qa_id, prediction}")
    p.add_argument("--ocr-from", required=True, help="source dataset for OCR grounding")
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("delta", help="relative ANLS drop between training distributions")
    p.add_argument("anls_d1_on_d1", type=float)
    p.add_argument("anls_d2_on_d1", type=float)
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("self-bleu", help="corpus diversity (one sentence per line)")
    p.add_argument("corpus")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--sample-size", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfbleu)

    p = sub.add_parser("kappa", help="Fleiss kappa over a JSONL count matrix")
    p.add_argument("ratings")
    p.set_defaults(func=cmd_kappa)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_USAGE
    except RecordError as exc:
        print(_styled(f"error: {exc}", "31", sys.stderr), file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
