"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation error, 2 backend or worker failure.
Each run prints a machine-readable JSON summary on stdout; human logs go
to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from specforge import contexts as contexts_mod
from specforge import dataset as dataset_mod
from specforge import evaluate as evaluate_mod
from specforge import executor as executor_mod
from specforge import intents as intents_mod
from specforge import specderive as specderive_mod
from specforge.llm import (
    BackendError,
    FewShotExemplar,
    HttpBackend,
    MockBackend,
    QuotaError,
)
from specforge.model import (
    CodeCandidate,
    ExecutionRecord,
    Intent,
    ProgrammaticContext,
    ValidationError,
    canonical_digest,
    canonical_json,
    read_records,
    write_records,
)

logger = logging.getLogger("specforge")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2

PIPELINE_STAGES = (
    "mine-contexts",
    "gen-intents",
    "gen-solutions",
    "execute",
    "derive-specs",
    "build-dataset",
)


def _emit_summary(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        loaded = yaml.safe_load(fh) or {}
    if not isinstance(loaded, dict):
        raise ValidationError(f"{path}: config root must be a mapping")
    return loaded


def _make_backend(args, config: dict, role: str):
    backend_cfg = dict(config.get("backend", {}))
    kind = getattr(args, "backend", None) or backend_cfg.get("kind", "mock")
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        url = getattr(args, "backend_url", None) or backend_cfg.get("url")
        model_key = "model_generalist" if role == "generalist" else "model_coder"
        model = getattr(args, "backend_model", None) or backend_cfg.get(model_key)
        if not url or not model:
            raise ValidationError(
                f"http backend requires backend.url and backend.{model_key}"
            )
        return HttpBackend(
            url=url,
            model=model,
            max_concurrency=int(backend_cfg.get("max_concurrency", 4)),
        )
    raise ValidationError(f"unknown backend kind: {kind!r}")


def _load_exemplars(path: Optional[str], kind: str) -> list[FewShotExemplar]:
    if not path:
        return []
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    exemplars = []
    for entry in entries:
        if entry.get("kind", kind) != kind:
            continue
        exemplars.append(
            FewShotExemplar(
                kind=kind,
                body=entry["body"],
                terminator=entry.get("terminator", "[END]"),
            )
        )
    return exemplars


def _read_typed(path: str, cls) -> list:
    _, raw = read_records(path)
    return [cls.from_record(r) for r in raw]


# --- stage implementations ---------------------------------------------------


def _stage_mine_contexts(args, config: dict) -> dict:
    report = contexts_mod.scan_directory(args.input_dir, args.limit)
    write_records(args.out, report.contexts, seed=args.seed)
    return {
        "command": "mine-contexts",
        "out": str(args.out),
        "contexts": len(report.contexts),
        "skipped": len(report.skipped),
    }


def _stage_gen_intents(args, config: dict) -> dict:
    backend = _make_backend(args, config, role="generalist")
    exemplars = _load_exemplars(args.exemplars, "intent_gen")
    all_contexts = _read_typed(args.contexts, ProgrammaticContext)
    kept: list[Intent] = []
    dropped = 0
    for context in all_contexts:
        rng = (
            random.Random(f"{args.seed}:{context.context_id}")
            if args.seed_random
            else None
        )
        batch = intents_mod.generate_intents(
            context,
            n=args.n,
            backend=backend,
            exemplars=exemplars,
            threshold=args.rouge_threshold,
            mode=args.rouge_mode,
            seed=args.seed,
            rng=rng,
        )
        kept.extend(batch.kept)
        dropped += len(batch.dropped)
    write_records(args.out, kept, seed=args.seed)
    return {
        "command": "gen-intents",
        "out": str(args.out),
        "contexts": len(all_contexts),
        "intents": len(kept),
        "dropped": dropped,
    }


def _stage_gen_solutions(args, config: dict) -> dict:
    backend = _make_backend(args, config, role="coder")
    exemplars = _load_exemplars(args.exemplars, "solution_gen")
    intents = _read_typed(args.intents, Intent)
    context_list = _read_typed(args.contexts, ProgrammaticContext)
    context_map = {c.context_id: c for c in context_list}
    report = dataset_mod.sample_solutions(
        intents,
        context_map,
        backend,
        samples_per_intent=args.samples,
        temperature=args.temperature,
        exemplars=exemplars,
        seed=args.seed,
    )
    write_records(args.out, report.candidates, seed=args.seed)
    return {
        "command": "gen-solutions",
        "out": str(args.out),
        "intents": len(intents),
        "candidates": len(report.candidates),
        "extraction_failures": report.extraction_failures,
    }


def _stage_execute(args, config: dict) -> dict:
    candidates = _read_typed(args.candidates, CodeCandidate)
    intents = _read_typed(args.intents, Intent)
    context_list = _read_typed(args.contexts, ProgrammaticContext)
    lookup = executor_mod.build_context_lookup(intents, context_list)
    if args.replay:
        pool = executor_mod.ReplaySource.from_file(args.replay)
    else:
        worker_cmd = args.worker_cmd or config.get("pipeline", {}).get("worker_cmd")
        if not worker_cmd:
            raise ValidationError("execute needs --replay or --worker-cmd")
        pool = executor_mod.WorkerPool(
            worker_cmd,
            size=args.workers,
            timeout_ms=args.timeout_ms,
            log_dir=args.worker_log_dir,
        )
    records = executor_mod.execute_candidates(
        candidates, lookup, pool, timeout_ms=args.timeout_ms
    )
    write_records(args.out, records, seed=args.seed)
    histogram = executor_mod.status_histogram(records)
    rate = executor_mod.execution_rate(records) if records else 0.0
    return {
        "command": "execute",
        "out": str(args.out),
        "records": len(records),
        "execution_rate": rate,
        "status_histogram": histogram,
    }


def _stage_derive_specs(args, config: dict) -> dict:
    records = _read_typed(args.executions, ExecutionRecord)
    intents = _read_typed(args.intents, Intent)
    candidates = _read_typed(args.candidates, CodeCandidate)
    intent_by_id = {i.intent_id: i for i in intents}
    source_by_candidate = {c.candidate_id: c.source for c in candidates}
    candidate_intent = {c.candidate_id: c.intent_id for c in candidates}
    backend = _make_backend(args, config, role="generalist")
    exemplars = _load_exemplars(args.exemplars, "io_summary")

    spec_records = []
    rejected = 0
    for record in records:
        if record.status.value != "ok":
            continue
        intent = intent_by_id.get(candidate_intent.get(record.candidate_id))
        if intent is None:
            continue
        try:
            if args.spec_type == "type_desc":
                spec = specderive_mod.derive_type_desc(record)
            elif args.spec_type == "io_examples":
                spec = specderive_mod.derive_io_examples(
                    record, include_inputs=args.include_inputs
                )
            else:
                spec = specderive_mod.derive_io_summary(
                    record,
                    intent,
                    source_by_candidate[record.candidate_id],
                    backend,
                    noisy=args.noisy,
                    exemplars=exemplars,
                    seed=args.seed,
                )
        except specderive_mod.SpecRejected:
            rejected += 1
            continue
        entry = spec.to_record()
        entry["record_type"] = "spec_assignment"
        entry["candidate_id"] = record.candidate_id
        entry["intent_id"] = intent.intent_id
        spec_records.append(entry)
    write_records(args.out, spec_records, seed=args.seed)
    return {
        "command": "derive-specs",
        "out": str(args.out),
        "spec_type": args.spec_type,
        "specs": len(spec_records),
        "rejected": rejected,
    }


def read_spec_assignments(path: str) -> dict:
    """spec_assignment records -> {candidate_id: IOSpecification}."""
    from specforge.model import IOSpecification

    _, raw = read_records(path)
    result = {}
    for entry in raw:
        result[entry["candidate_id"]] = IOSpecification.from_record(entry)
    return result


def _stage_build_dataset(args, config: dict) -> dict:
    records = _read_typed(args.executions, ExecutionRecord)
    candidates = _read_typed(args.candidates, CodeCandidate)
    intents = _read_typed(args.intents, Intent)
    context_list = _read_typed(args.contexts, ProgrammaticContext)
    specs = read_spec_assignments(args.specs) if args.specs else {}
    examples = dataset_mod.select_examples(
        records,
        candidates,
        intents,
        context_list,
        per_intent_cap=args.cap,
        specs_by_candidate=specs,
    )
    write_records(args.out, examples, seed=args.seed)
    manifest = dataset_mod.build_mixture(args.out, args.mix, args.ratio)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    Path(manifest_path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    stats = dataset_mod.corpus_stats(examples, records)
    if args.stats:
        Path(args.stats).write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return {
        "command": "build-dataset",
        "out": str(args.out),
        "manifest": str(manifest_path),
        "stats": stats,
    }


def _stage_evaluate(args, config: dict) -> dict:
    problems = evaluate_mod.read_problems(args.problems)
    prediction_records = _read_typed(args.predictions, ExecutionRecord)
    candidates = _read_typed(args.candidates, CodeCandidate)
    candidate_intent = {c.candidate_id: c.intent_id for c in candidates}
    problem_by_intent = {p.intent.intent_id: p.problem_id for p in problems}
    grouped: dict[str, list[ExecutionRecord]] = {p.problem_id: [] for p in problems}
    for record in prediction_records:
        intent_id = candidate_intent.get(record.candidate_id)
        problem_id = problem_by_intent.get(intent_id)
        if problem_id is not None:
            grouped[problem_id].append(record)
    ks = [int(k) for k in args.k.split(",") if k]
    report = evaluate_mod.score_corpus(
        problems,
        grouped,
        ks,
        tol=args.tol,
        sorted_rows=args.sorted_rows,
        empirical=args.empirical,
    )
    Path(args.out).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {"command": "evaluate", "out": str(args.out), "report": report}


def _stage_report(args, config: dict) -> dict:
    records = _read_typed(args.executions, ExecutionRecord)
    report = evaluate_mod.error_report(records)
    Path(args.out).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {"command": "report", "out": str(args.out), "report": report}


def _stage_pass_at_k(args, config: dict) -> dict:
    value = evaluate_mod.pass_at_k(args.n, args.c, args.k)
    print(f"{value:.6f}")
    return {}


# --- pipeline runner ---------------------------------------------------------


def _file_digest(path: Path) -> str:
    return canonical_digest(path.read_bytes())


def _planned_path(out_dir: Path, stage: str, params: dict, inputs: list[Path]) -> Path:
    key = {
        "stage": stage,
        "params": params,
        "inputs": [_file_digest(p) for p in inputs],
    }
    return out_dir / f"{stage}-{canonical_digest(canonical_json(key))[:12]}.ndr"


def _run_pipeline(args, config: dict) -> dict:
    pcfg = dict(config.get("pipeline", {}))
    required = pcfg.get("input_dir")
    if not required:
        raise ValidationError("pipeline.input_dir missing from config")
    out_dir = Path(pcfg.get("out_dir", "build"))
    seed = int(pcfg.get("seed", args.seed))
    params = {
        "limit": pcfg.get("limit"),
        "n_intents": int(pcfg.get("n_intents", 6)),
        "rouge_threshold": float(pcfg.get("rouge_threshold", 0.7)),
        "rouge_mode": pcfg.get("rouge_mode", "f"),
        "samples_per_intent": int(pcfg.get("samples_per_intent", 5)),
        "temperature": float(pcfg.get("temperature", 0.8)),
        "spec_type": pcfg.get("spec_type", "io_summary"),
        "noisy": bool(pcfg.get("noisy", False)),
        "include_inputs": bool(pcfg.get("include_inputs", False)),
        "cap": int(pcfg.get("cap", 2)),
        "timeout_ms": int(pcfg.get("timeout_ms", 10000)),
        "workers": int(pcfg.get("workers", 1)),
        "seed": seed,
        "backend": config.get("backend", {}).get("kind", "mock"),
    }

    if args.dry_run:
        plan = [
            {"stage": stage, "out": "<content-addressed>", "params": params}
            for stage in PIPELINE_STAGES
        ]
        return {"command": "pipeline", "dry_run": True, "plan": plan}

    out_dir.mkdir(parents=True, exist_ok=True)
    ns = argparse.Namespace(
        backend=None, backend_url=None, backend_model=None, seed=seed,
        exemplars=pcfg.get("exemplars"),
    )

    # mine-contexts
    contexts_path = _planned_path(out_dir, "contexts", params, [])
    ns_mine = argparse.Namespace(
        input_dir=pcfg["input_dir"], limit=params["limit"],
        out=contexts_path, seed=seed,
    )
    summary = {"command": "pipeline", "dry_run": False, "stages": {}}
    summary["stages"]["mine-contexts"] = _stage_mine_contexts(ns_mine, config)

    # gen-intents
    intents_path = _planned_path(out_dir, "intents", params, [contexts_path])
    ns_intents = argparse.Namespace(
        contexts=str(contexts_path), out=intents_path, n=params["n_intents"],
        rouge_threshold=params["rouge_threshold"], rouge_mode=params["rouge_mode"],
        seed=seed, seed_random=bool(pcfg.get("seed_random", False)),
        exemplars=pcfg.get("exemplars"), backend=None, backend_url=None,
        backend_model=None,
    )
    summary["stages"]["gen-intents"] = _stage_gen_intents(ns_intents, config)

    # gen-solutions
    candidates_path = _planned_path(out_dir, "candidates", params, [contexts_path, intents_path])
    ns_solutions = argparse.Namespace(
        intents=str(intents_path), contexts=str(contexts_path),
        out=candidates_path, samples=params["samples_per_intent"],
        temperature=params["temperature"], seed=seed,
        exemplars=pcfg.get("exemplars"), backend=None, backend_url=None,
        backend_model=None,
    )
    summary["stages"]["gen-solutions"] = _stage_gen_solutions(ns_solutions, config)

    # execute
    executions_path = _planned_path(out_dir, "executions", params, [candidates_path])
    ns_execute = argparse.Namespace(
        candidates=str(candidates_path), intents=str(intents_path),
        contexts=str(contexts_path), out=executions_path,
        replay=pcfg.get("replay"), worker_cmd=pcfg.get("worker_cmd"),
        workers=params["workers"], timeout_ms=params["timeout_ms"],
        worker_log_dir=pcfg.get("worker_log_dir"), seed=seed,
    )
    summary["stages"]["execute"] = _stage_execute(ns_execute, config)

    # derive-specs
    specs_path = _planned_path(out_dir, "specs", params, [executions_path, intents_path])
    ns_specs = argparse.Namespace(
        executions=str(executions_path), intents=str(intents_path),
        candidates=str(candidates_path), out=specs_path,
        spec_type=params["spec_type"], noisy=params["noisy"],
        include_inputs=params["include_inputs"], seed=seed,
        exemplars=pcfg.get("exemplars"), backend=None, backend_url=None,
        backend_model=None,
    )
    summary["stages"]["derive-specs"] = _stage_derive_specs(ns_specs, config)

    # build-dataset
    dataset_path = _planned_path(out_dir, "dataset", params, [executions_path, specs_path])
    ns_dataset = argparse.Namespace(
        executions=str(executions_path), candidates=str(candidates_path),
        intents=str(intents_path), contexts=str(contexts_path),
        specs=str(specs_path), out=dataset_path, cap=params["cap"],
        mix=pcfg.get("mix"), ratio=float(pcfg.get("ratio", 1.0)),
        manifest=None, stats=str(out_dir / "stats.json"), seed=seed,
    )
    summary["stages"]["build-dataset"] = _stage_build_dataset(ns_dataset, config)
    summary["dataset"] = str(dataset_path)
    return summary


# --- argument parsing ---------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--verbose", action="store_true")


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["mock", "http"])
    parser.add_argument("--backend-url")
    parser.add_argument("--backend-model")
    parser.add_argument("--exemplars", help="JSON file of few-shot exemplars")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specforge",
        description="Execution-grounded synthetic instruction data pipeline",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("mine-contexts", help="mine tabular files into contexts")
    _add_common(p)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int)
    p.set_defaults(func=_stage_mine_contexts)

    p = sub.add_parser("gen-intents", help="generate and filter NL intents")
    _add_common(p)
    _add_backend_args(p)
    p.add_argument("--contexts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--rouge-threshold", type=float, default=0.7)
    p.add_argument("--rouge-mode", choices=["f", "p", "r"], default="f")
    p.add_argument("--seed-random", action="store_true",
                   help="seed the kept set with a random candidate")
    p.set_defaults(func=_stage_gen_intents)

    p = sub.add_parser("gen-solutions", help="sample candidate solutions")
    _add_common(p)
    _add_backend_args(p)
    p.add_argument("--intents", required=True)
    p.add_argument("--contexts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--temperature", type=float, default=0.8)
    p.set_defaults(func=_stage_gen_solutions)

    p = sub.add_parser("execute", help="run candidates in sandbox workers")
    _add_common(p)
    p.add_argument("--candidates", required=True)
    p.add_argument("--intents", required=True)
    p.add_argument("--contexts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout-ms", type=int, default=executor_mod.DEFAULT_TIMEOUT_MS)
    p.add_argument("--replay", help="serve recorded execution fixtures")
    p.add_argument("--worker-cmd", help="command line of the guest worker")
    p.add_argument("--worker-log-dir")
    p.set_defaults(func=_stage_execute)

    p = sub.add_parser("derive-specs", help="derive I/O specifications")
    _add_common(p)
    _add_backend_args(p)
    p.add_argument("--executions", required=True)
    p.add_argument("--intents", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spec-type", choices=["type_desc", "io_examples", "io_summary"],
                   required=True)
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--include-inputs", action="store_true")
    p.set_defaults(func=_stage_derive_specs)

    p = sub.add_parser("build-dataset", help="select examples and emit the dataset")
    _add_common(p)
    p.add_argument("--executions", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--intents", required=True)
    p.add_argument("--contexts", required=True)
    p.add_argument("--specs")
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=int, default=2)
    p.add_argument("--mix", help="auxiliary dataset file")
    p.add_argument("--ratio", type=float, default=1.0)
    p.add_argument("--manifest")
    p.add_argument("--stats")
    p.set_defaults(func=_stage_build_dataset)

    p = sub.add_parser("evaluate", help="score predictions against problems")
    _add_common(p)
    p.add_argument("--problems", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--k", default="1")
    p.add_argument("--tol", type=float, default=evaluate_mod.DEFAULT_TOLERANCE)
    p.add_argument("--sorted-rows", action="store_true")
    p.add_argument("--empirical", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_evaluate)

    p = sub.add_parser("report", help="error frequency report")
    _add_common(p)
    p.add_argument("--executions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_report)

    p = sub.add_parser("pass-at-k", help="print the pass@k estimate")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=_stage_pass_at_k)

    p = sub.add_parser("pipeline", help="chain all stages from a config")
    psub = p.add_subparsers(dest="pipeline_command")
    prun = psub.add_parser("run")
    _add_common(prun)
    prun.add_argument("--dry-run", action="store_true")
    prun.set_defaults(func=_run_pipeline)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:  # argparse exits on bad usage; --help exits 0
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(getattr(args, "config", None))
        summary = args.func(args, config)
    except (BackendError, QuotaError, executor_mod.PoolExhausted) as exc:
        logger.error("%s", exc)
        return EXIT_BACKEND
    except (ValidationError, ValueError, KeyError, LookupError, OSError,
            contexts_mod.EmptyCorpus, intents_mod.UnparseableCompletion,
            dataset_mod.MissingAuxiliary) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    if summary:
        _emit_summary(summary)
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
