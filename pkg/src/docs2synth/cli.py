"""Unified command line: every stage plus serving and comparison.

Exit codes: 0 success (including a run stopped at pending review),
2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigParseError, ConfigValidationError, load_config
from .evalharness import compare_strategies, evaluate, load_eval_json, save_eval_json
from .inference import append_trace_jsonl, load_traces_jsonl, rag_baseline, run_loop
from .pipeline import STAGES, StageFailed, run_all, run_stages
from .retriever.model import load_checkpoint
from .retriever.served import ServedRetriever
from .store import JsonlStore, latest_by_key
from .synthgen import QAPair

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to config.yml")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docs2synth",
        description="Annotation-free document understanding pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every stage end to end")
    _add_config_arg(p_run)
    p_run.add_argument("--force", action="store_true", help="ignore stage memoization")

    p_ingest = sub.add_parser("ingest", help="normalize OCR output into documents.jsonl")
    _add_config_arg(p_ingest)
    p_ingest.add_argument("--input", help="override collection.input_dir")
    p_ingest.add_argument("--format", help="override collection.ocr_format")

    for name, help_text in (
        ("synth", "generate and verify QA pairs"),
        ("train", "export train.jsonl and train the retriever"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_arg(p)
        p.add_argument("--force", action="store_true")

    p_server = sub.add_parser("review-server", help="serve the review API and UI")
    _add_config_arg(p_server)
    p_server.add_argument("--host", help="override review.server.host")
    p_server.add_argument("--port", type=int, help="override review.server.port")

    p_infer = sub.add_parser("infer", help="answer one question against one document")
    _add_config_arg(p_infer)
    p_infer.add_argument("--question", required=True)
    p_infer.add_argument("--doc", required=True, help="doc_id within the ingested collection")
    p_infer.add_argument("--k", type=int, default=None)
    p_infer.add_argument("--iterations", type=int, default=None)
    p_infer.add_argument(
        "--strategy", choices=("trained", "served", "rag-baseline"), default=None
    )
    p_infer.add_argument("--save", action="store_true", help="append trace to traces.jsonl")

    p_eval = sub.add_parser("eval", help="score traces against QA pairs")
    _add_config_arg(p_eval)
    p_eval.add_argument("--traces", help="traces.jsonl (default: storage root)")
    p_eval.add_argument("--qa", help="qa.jsonl (default: storage root)")
    p_eval.add_argument("--out", help="eval.json output path")

    p_compare = sub.add_parser("compare", help="side-by-side eval.json comparison")
    p_compare.add_argument("results", nargs="+", help="two or more eval.json files")
    p_compare.add_argument("--config", help="write the table into this config's storage root")
    p_compare.add_argument("--out", help="output path (default: comparison.md)")

    return parser


def _print_manifest(manifest) -> None:
    for name in STAGES:
        state = manifest.stages.get(name)
        if state is not None:
            line = f"{name:8s} {state.status}"
            if state.error:
                line += f"  ({state.error})"
            print(line)


def cmd_run(args) -> int:
    config = load_config(args.config)
    manifest = run_all(config, force=args.force)
    _print_manifest(manifest)
    if manifest.stages["review"].status == "pending":
        print(
            "review pending: start `docs2synth review-server --config "
            f"{args.config}` to triage pairs, then re-run."
        )
    return EXIT_OK


def cmd_single_stage(args, stage: str) -> int:
    config = load_config(args.config)
    if stage == "ingest" and (args.input or args.format):
        collection = config.collection
        if args.input:
            collection = dataclasses.replace(collection, input_dir=args.input)
        if args.format:
            collection = dataclasses.replace(collection, ocr_format=args.format)
        config = dataclasses.replace(config, collection=collection)
    manifest = run_stages(config, (stage,), force=getattr(args, "force", False))
    _print_manifest(manifest)
    return EXIT_OK


def cmd_review_server(args) -> int:
    import uvicorn

    from .review_server import create_app

    config = load_config(args.config)
    app = create_app(config)
    host = args.host or config.review.server.host
    port = args.port or config.review.server.port
    uvicorn.run(app, host=host, port=port, log_level="info")
    return EXIT_OK


def cmd_infer(args) -> int:
    config = load_config(args.config)
    root = Path(config.storage.root_dir)
    from . import docmodel

    docs = {d.doc_id: d for d in docmodel.load_documents_jsonl(root / "documents.jsonl")}
    if args.doc not in docs:
        print(f"unknown doc_id {args.doc!r}", file=sys.stderr)
        return EXIT_STAGE
    section = config.inference
    if args.k is not None:
        section = dataclasses.replace(section, k=args.k)
    if args.iterations is not None:
        section = dataclasses.replace(section, max_iterations=args.iterations)
    if args.strategy is not None:
        section = dataclasses.replace(section, retriever=args.strategy)
    loop_config = section.loop_config()
    artifacts_dir = root / "artifacts"
    doc = docs[args.doc]
    if section.retriever == "rag-baseline":
        trace = rag_baseline(
            args.question,
            doc,
            loop_config.k,
            config.providers,
            answerer_provider=loop_config.answerer_provider,
            artifacts_dir=artifacts_dir,
        )
    else:
        model = None
        scorer = None
        if section.retriever == "served":
            scorer = ServedRetriever(section.served_url).score
        else:
            model = load_checkpoint(root / "checkpoints" / "retriever.ckpt")
        trace = run_loop(
            args.question,
            doc,
            model,
            loop_config,
            config.providers,
            artifacts_dir=artifacts_dir,
            scorer=scorer,
        )
    print(json.dumps(trace.to_json_dict(), indent=2, ensure_ascii=False))
    if args.save:
        append_trace_jsonl(trace, root / "traces.jsonl")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = load_config(args.config)
    root = Path(config.storage.root_dir)
    traces = load_traces_jsonl(args.traces or root / "traces.jsonl")
    qa_path = args.qa or root / "qa.jsonl"
    store = JsonlStore(Path(qa_path).parent)
    records = latest_by_key(store.scan("qa"), "qa_id")
    pairs = [QAPair.from_json_dict(r) for r in records]
    result = evaluate(traces, pairs, k=config.inference.k)
    out = Path(args.out) if args.out else root / "eval.json"
    save_eval_json(result, out)
    print(
        f"exact_match={result.exact_match:.4f} anls={result.anls:.4f} "
        f"hit@{result.k}={result.retriever_hit_at_k:.4f} -> {out}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    results = {Path(p).stem: load_eval_json(p) for p in args.results}
    comparison = compare_strategies(results)
    print(comparison.table)
    if args.out:
        out = Path(args.out)
    elif args.config:
        config = load_config(args.config)
        out = Path(config.storage.root_dir) / "comparison.md"
    else:
        out = Path("comparison.md")
    out.write_text(comparison.table + "\n", encoding="utf-8")
    machine = out.with_suffix(".json")
    machine.write_text(
        json.dumps(comparison.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command in ("ingest", "synth", "train"):
            return cmd_single_stage(args, args.command)
        if args.command == "review-server":
            return cmd_review_server(args)
        if args.command == "infer":
            return cmd_infer(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "compare":
            return cmd_compare(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailed as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
