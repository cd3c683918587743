"""Command-line surface: run the agent, build and query the knowledge base,
and inspect run journals."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config
from .errors import AutomindError, FatalConfigError
from .gateway import Backend, Gateway, HttpBackend, RecordingBackend, ReplayBackend
from .journal import export_dot, load_journal_tree, render_tree_text
from .knowledge import (
    HashingEmbedder,
    LabelPath,
    build_index,
    ingest_corpus,
    label_entry,
    label_task,
    load_index,
    load_taxonomy,
    retrieve,
    retrieve_papers,
    save_index,
    summarize_paper,
)
from .knowledge.entries import KnowledgeQuery
from .runloop import load_task, run

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_NO_VALID_SOLUTION = 2


def _make_backend(transcript: str | None, config: RunConfig) -> Backend:
    if transcript is not None:
        return ReplayBackend(transcript)
    if config.api_base:
        return HttpBackend(config.api_base, config.api_key or "")
    raise FatalConfigError(
        "no backend available: pass --transcript for a replay run or set "
        "AUTOMIND_API_BASE / AUTOMIND_API_KEY for a live one"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, os.environ)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.no_knowledge:
        config = replace(config, knowledge_enabled=False)
    if args.index is not None:
        config = replace(config, index_dir=Path(args.index))

    backend = _make_backend(args.transcript, config)
    run_id = args.run_id or time.strftime("run-%Y%m%d-%H%M%S")
    run_dir = Path(args.out) / run_id
    if args.record:
        backend = RecordingBackend(backend, run_dir / "transcript.jsonl")

    task, task_data = load_task(args.task, run_dir / "workspace")
    result = run(
        task=task,
        config=config,
        backend=backend,
        run_dir=run_dir,
        task_data=task_data,
    )
    print(f"run directory: {run_dir}")
    print(f"nodes created: {result.nodes_created}")
    print(
        "tokens: %(input)d input / %(output)d output / %(total)d total"
        % result.tokens
    )
    if result.best is None:
        print("no valid solution")
        return EXIT_NO_VALID_SOLUTION
    direction = "min" if result.best_metric.lower_is_better else "max"
    print(
        f"best node: {result.best} "
        f"metric={result.best_metric.value:g} ({direction})"
    )
    print(f"submission: {result.submission_path}")
    return EXIT_OK


def _cmd_kb_build(args: argparse.Namespace) -> int:
    config = load_config(args.config, os.environ)
    backend = _make_backend(args.transcript, config)
    gateway = Gateway(config.models, backend)
    taxonomy = load_taxonomy(args.taxonomy)

    tricks, papers, warnings = ingest_corpus(args.corpus)
    print(f"ingested {len(tricks)} tricks, {len(papers)} papers", end="")
    print(f", {len(warnings)} warnings" if warnings else "")
    for trick in tricks:
        trick.labels = label_entry(trick, taxonomy, gateway, rounds=args.rounds)
    for paper in papers:
        summarize_paper(paper, gateway)
    index = build_index([*tricks, *papers], HashingEmbedder(dim=args.dim))
    save_index(index, args.out)
    print(f"index written to {args.out} ({len(index)} entries)")
    return EXIT_OK


def _parse_label_arg(raw: str, taxonomy) -> list[LabelPath]:
    labels = []
    for part in raw.split(","):
        top, _, sub = part.partition("/")
        label = LabelPath(top=top.strip(), sub=sub.strip())
        if not taxonomy.contains(label):
            raise FatalConfigError(f"label not in taxonomy: {label}")
        labels.append(label)
    return labels


def _cmd_kb_query(args: argparse.Namespace) -> int:
    config = load_config(args.config, os.environ)
    taxonomy = load_taxonomy(args.taxonomy)
    index = load_index(args.index)
    description = Path(args.task).read_text(encoding="utf-8")
    if args.labels:
        labels = _parse_label_arg(args.labels, taxonomy)
    else:
        gateway = Gateway(config.models, _make_backend(args.transcript, config))
        labels = label_task(description, taxonomy, gateway, rounds=args.rounds)
    query = KnowledgeQuery(
        task_id=args.task_id or Path(args.task).stem,
        task_labels=tuple(labels),
        free_text=description,
        k=args.k,
    )
    results = retrieve(index, query) if args.kind == "tricks" else retrieve_papers(index, query)
    for entry in results:
        title = entry.title if hasattr(entry, "title") else entry.meta.title
        print(json.dumps({"kind": args.kind, "id": entry.id, "title": title}))
    return EXIT_OK


def _cmd_tree_show(args: argparse.Namespace) -> int:
    print(render_tree_text(load_journal_tree(args.journal)))
    return EXIT_OK


def _cmd_tree_export(args: argparse.Namespace) -> int:
    dot = export_dot(load_journal_tree(args.journal))
    Path(args.dot).write_text(dot, encoding="utf-8")
    print(f"wrote {args.dot}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="automind",
        description="Knowledge-grounded tree search agent for data science tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the agent on a task directory")
    p_run.add_argument("--task", required=True, help="task directory")
    p_run.add_argument("--config", default=None, help="flat key=value config file")
    p_run.add_argument("--transcript", default=None, help="replay transcript file")
    p_run.add_argument("--record", action="store_true", help="record a transcript")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument(
        "--no-knowledge",
        action="store_true",
        help="disable the expert knowledge base",
    )
    p_run.add_argument("--index", default=None, help="knowledge index directory")
    p_run.add_argument("--out", default="runs", help="output root directory")
    p_run.add_argument("--run-id", default=None, help="run directory name")
    p_run.set_defaults(func=_cmd_run)

    p_kb = sub.add_parser("kb", help="knowledge base commands")
    kb_sub = p_kb.add_subparsers(dest="kb_command", required=True)

    p_build = kb_sub.add_parser("build", help="ingest, label, and index a corpus")
    p_build.add_argument("--corpus", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--config", default=None)
    p_build.add_argument("--transcript", default=None)
    p_build.add_argument("--taxonomy", default=None, help="taxonomy JSON file")
    p_build.add_argument("--rounds", type=int, default=5)
    p_build.add_argument("--dim", type=int, default=256)
    p_build.set_defaults(func=_cmd_kb_build)

    p_query = kb_sub.add_parser("query", help="query a built index")
    p_query.add_argument("--index", required=True)
    p_query.add_argument("--task", required=True, help="task description file")
    p_query.add_argument("-k", type=int, default=3)
    p_query.add_argument("--kind", choices=("tricks", "papers"), default="tricks")
    p_query.add_argument("--labels", default=None, help="Top/Sub,Top/Sub overrides")
    p_query.add_argument("--task-id", default=None)
    p_query.add_argument("--config", default=None)
    p_query.add_argument("--transcript", default=None)
    p_query.add_argument("--taxonomy", default=None)
    p_query.add_argument("--rounds", type=int, default=5)
    p_query.set_defaults(func=_cmd_kb_query)

    p_tree = sub.add_parser("tree", help="inspect run journals")
    tree_sub = p_tree.add_subparsers(dest="tree_command", required=True)

    p_show = tree_sub.add_parser("show", help="render the solution tree as text")
    p_show.add_argument("--journal", required=True)
    p_show.set_defaults(func=_cmd_tree_show)

    p_export = tree_sub.add_parser("export", help="write a DOT graph of the tree")
    p_export.add_argument("--journal", required=True)
    p_export.add_argument("--dot", required=True)
    p_export.set_defaults(func=_cmd_tree_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("AUTOMIND_LOG_LEVEL", "INFO"),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AutomindError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
