"""Batch command-line front end over JSONL pipelines.

Subcommands: linearize, eval, validate, stats, fewshot, mix, format-spec.
All inputs and outputs are JSONL/JSON on explicit paths, with "-" standing
for stdin/stdout. Exit codes: 0 clean, 1 data error (details routed to an
errors stream), 2 usage error.

Every file output gets a sidecar ``<path>.manifest.json`` recording the
command, config snapshot, and toolkit version; single-document JSON outputs
embed the same manifest (without the timestamp, so reruns are byte
identical).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Callable, Iterable, Iterator, Sequence, TextIO

from . import __version__
from .corpus import (
    DEFAULT_STRATEGY,
    TOKEN_COUNTER_VERSION,
    TokenBudget,
    TruncationError,
    count_tokens,
    format_histogram_table,
    length_histogram,
    truncate_knowledge,
)
from .fewshot import (
    EXAMPLE_JOIN,
    PRNG_FAMILY,
    TARGET_JOIN,
    EmbeddingProvider,
    MixtureSpec,
    PromptBudgetError,
    build_prompt,
    render_example_input,
    sample_schedule,
    select_random,
    select_similar,
    temperature_weights,
)
from .knowledge import Record, read_records, validate_record
from .linearize import (
    COMPONENT_JOIN,
    FORMAT_VERSION,
    SEPARATORS,
    LinearizationConfig,
    OrderingPolicy,
    assemble_input,
    linearize_knowledge,
    reverse_knowledge,
)
from .metrics import (
    BLEC_RULES_VERSION,
    BLEU_VERSION,
    NormalizationConfig,
    evaluate_corpus,
)
from .validators import SQL_GRAMMAR_VERSION, check_validity

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------------------
# I/O helpers


@contextmanager
def _open_in(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as f:
            yield f


@contextmanager
def _open_out(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as f:
            yield f


def _read_jsonl(path: str) -> list[dict[str, Any]]:
    with _open_in(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def _write_jsonl(path: str, rows: Iterable[dict[str, Any]]) -> None:
    with _open_out(path) as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def _dump_json(path: str, doc: dict[str, Any]) -> None:
    with _open_out(path) as f:
        json.dump(doc, f, ensure_ascii=False, indent=2)
        f.write("\n")


def _manifest(command: str, config: dict[str, Any], inputs: Sequence[str], outputs: Sequence[str]) -> dict[str, Any]:
    return {
        "command": command,
        "config": config,
        "inputs": list(inputs),
        "outputs": [o for o in outputs if o and o != "-"],
        "toolkit_version": __version__,
        "format_version": FORMAT_VERSION,
    }


def _write_manifest_sidecar(manifest: dict[str, Any], *outputs: str) -> None:
    stamped = dict(manifest, created_at=datetime.now(timezone.utc).isoformat())
    for path in outputs:
        if path and path != "-":
            _dump_json(path + ".manifest.json", stamped)


def _load_config_file(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    with _open_in(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SystemExit("config file must hold a JSON object")
    return data


def _setting(args: argparse.Namespace, config: dict[str, Any], name: str, default: Any = None) -> Any:
    """Flag value when given, else config-file value, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _linearization_config(args: argparse.Namespace, config: dict[str, Any]) -> LinearizationConfig:
    ordering = _setting(args, config, "ordering", OrderingPolicy.RS_C.value)
    reverse = _setting(args, config, "reverse", False)
    return LinearizationConfig(ordering=OrderingPolicy(ordering), reverse_knowledge=bool(reverse))


def _norm_config(args: argparse.Namespace, config: dict[str, Any]) -> NormalizationConfig | None:
    lowercase = _setting(args, config, "lowercase")
    if lowercase is None:
        return None  # per-kind defaults
    return NormalizationConfig(lowercase=bool(lowercase))


def _ordered_map(
    items: Sequence[Any],
    worker: Callable[[Any], Any],
    jobs: int,
) -> list[Any]:
    if jobs <= 1 or len(items) <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, items))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_linearize(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    cfg = _linearization_config(args, config)
    max_tokens = _setting(args, config, "max_tokens")
    strategy = _setting(args, config, "strategy", DEFAULT_STRATEGY)
    with _open_in(args.records) as f:
        rows = [json.loads(line) for line in f if line.strip()]

    def process(item: tuple[int, dict[str, Any]]) -> tuple[dict[str, Any] | None, dict[str, Any] | None]:
        index, row = item
        try:
            record = _parse_record(row)
            violations = validate_record(record)
            if violations:
                raise ValueError("; ".join(violations))
            knowledge = record.knowledge
            if max_tokens is not None and knowledge is not None:
                prefix = _prefix_tokens(record, cfg, strategy)
                budget = TokenBudget(max_tokens=int(max_tokens), counter=strategy)
                knowledge = truncate_knowledge(knowledge, prefix, budget)
            if cfg.reverse_knowledge:
                knowledge = reverse_knowledge(knowledge)
            text = assemble_input(
                record.request, linearize_knowledge(knowledge), record.context, cfg
            )
            return {"id": record.id, "input_text": text, "target_text": record.target}, None
        except (ValueError, KeyError, TruncationError) as e:
            return None, {"index": index, "id": row.get("id"), "error": str(e)}

    results = _ordered_map(list(enumerate(rows)), process, args.jobs)
    pairs = [p for p, _ in results if p is not None]
    errors = [e for _, e in results if e is not None]
    _write_jsonl(args.out, pairs)
    if errors:
        _write_jsonl(args.errors, errors)
    manifest = _manifest(
        "linearize",
        {
            "ordering": cfg.ordering.value,
            "reverse": cfg.reverse_knowledge,
            "max_tokens": max_tokens,
            "strategy": strategy,
            "separators_version": FORMAT_VERSION,
        },
        [args.records],
        [args.out],
    )
    _write_manifest_sidecar(manifest, args.out)
    return EXIT_DATA_ERROR if errors else EXIT_OK


def _parse_record(row: dict[str, Any]) -> Record:
    from .knowledge import record_from_json

    return record_from_json(row)


def _prefix_tokens(record: Record, cfg: LinearizationConfig, strategy: str) -> int:
    """Tokens the assembled input spends on everything except the knowledge.

    The component separator contributes one token (";") when both sides are
    present; the counter is additive across the space that follows it.
    """
    try:
        without = assemble_input(record.request, "", record.context, cfg)
    except ValueError:
        return 0
    return count_tokens(without, strategy) + count_tokens(COMPONENT_JOIN.strip(), strategy)


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    norm = _norm_config(args, config)
    # config key "task_lowercase" maps task tag -> bool, overriding the
    # per-kind lowercasing default for that task only
    task_norm = {
        task: NormalizationConfig(lowercase=bool(flag))
        for task, flag in (config.get("task_lowercase") or {}).items()
    }
    with _open_in(args.records) as f:
        records = list(read_records(f))
    rows = _read_jsonl(args.predictions)
    pairs: list[tuple[str, str]] = []
    for row in rows:
        pairs.append((str(row["id"]), str(row["prediction"])))
    try:
        report = evaluate_corpus(records, pairs, norm=norm, task_norm=task_norm or None)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        _write_jsonl(args.errors, [{"error": str(e)}])
        return EXIT_DATA_ERROR
    manifest = _manifest(
        "eval",
        {
            "lowercase_override": None if norm is None else norm.lowercase,
            "task_lowercase": config.get("task_lowercase") or {},
        },
        [args.records, args.predictions],
        [args.out, args.csv or ""],
    )
    doc = report.to_json()
    doc["manifest"] = manifest
    _dump_json(args.out, doc)
    _write_manifest_sidecar(manifest, args.out, args.csv)
    if args.csv:
        _write_per_record_csv(args.csv, report.per_record)
    return EXIT_OK


def _write_per_record_csv(path: str, per_record: dict[str, dict[str, Any]]) -> None:
    columns = ["id"]
    for scores in per_record.values():
        for key in scores:
            if key not in columns:
                columns.append(key)
    with _open_out(path) as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for rid, scores in per_record.items():
            writer.writerow({"id": rid, **{k: v for k, v in scores.items() if k != "parse_residue"}})


def cmd_validate(args: argparse.Namespace) -> int:
    rows = _read_jsonl(args.input)
    out = []
    errors = []
    for index, row in enumerate(rows):
        try:
            report = check_validity(str(row["text"]), str(row["language"]))
            out.append(
                {
                    "id": row["id"],
                    "language": report.language.value,
                    "valid": report.valid,
                    "error_kind": None if report.error_kind is None else report.error_kind.value,
                    "position": report.position,
                }
            )
        except (KeyError, ValueError) as e:
            errors.append({"index": index, "id": row.get("id"), "error": str(e)})
    _write_jsonl(args.out, out)
    if errors:
        _write_jsonl(args.errors, errors)
    manifest = _manifest("validate", {"sql_grammar": SQL_GRAMMAR_VERSION}, [args.input], [args.out])
    _write_manifest_sidecar(manifest, args.out)
    return EXIT_DATA_ERROR if errors else EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    cfg = _linearization_config(args, config)
    strategy = _setting(args, config, "strategy", DEFAULT_STRATEGY)
    with _open_in(args.records) as f:
        records = list(read_records(f))
    external = None
    if args.counts:
        external = {str(r["id"]): r for r in _read_jsonl(args.counts)}
    by_task: dict[str, list[Record]] = {}
    for r in records:
        by_task.setdefault(r.task, []).append(r)
    histograms = {
        task: length_histogram(rs, cfg, strategy, external) for task, rs in by_task.items()
    }
    overall = length_histogram(records, cfg, strategy, external)
    manifest = _manifest(
        "stats",
        {"strategy": strategy, "counter_version": TOKEN_COUNTER_VERSION},
        [args.records],
        [args.json_out or "-", args.table_out or ""],
    )
    doc = {
        "overall": overall.to_json(),
        "tasks": {task: h.to_json() for task, h in histograms.items()},
        "manifest": manifest,
    }
    if args.json_out:
        _dump_json(args.json_out, doc)
        _write_manifest_sidecar(manifest, args.json_out, args.table_out)
    table = format_histogram_table({**histograms, "(all)": overall})
    if args.table_out:
        with _open_out(args.table_out) as f:
            f.write(table + "\n")
    if not args.json_out and not args.table_out:
        _dump_json("-", doc)
    elif not args.table_out:
        print(table)
    return EXIT_OK


def cmd_fewshot(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    cfg = _linearization_config(args, config)
    k = int(_setting(args, config, "k", 5))
    seed = int(_setting(args, config, "seed", 0))
    mode = _setting(args, config, "mode", "select")
    budget_tokens = _setting(args, config, "budget")
    template = _setting(args, config, "template")
    with _open_in(args.train) as f:
        train = list(read_records(f))
    with _open_in(args.queries) as f:
        queries = list(read_records(f))
    provider = (
        EmbeddingProvider("external_file", args.embeddings)
        if args.embeddings
        else EmbeddingProvider()
    )
    budget = TokenBudget(max_tokens=int(budget_tokens)) if budget_tokens else None
    out_rows = []
    errors = []
    if mode == "random":
        shared = select_random(train, min(k, len(train)), seed)
    # Similarity-selected examples render most-similar-last, adjacent to the
    # query; budget trimming still drops the least similar first.
    order = "reversed" if mode == "select" else "given"
    for index, query in enumerate(queries):
        try:
            if mode == "random":
                examples = shared
            else:
                examples = select_similar(train, query, min(k, len(train)), provider)
            if budget is not None:
                prompt = build_prompt(examples, query, budget, cfg, template, example_order=order)
            else:
                blocks = [_plain_block(e, cfg, template) for e in examples]
                if order == "reversed":
                    blocks.reverse()
                prompt = EXAMPLE_JOIN.join(blocks + [render_example_input(query, cfg, template)])
            out_rows.append({"id": query.id, "prompt": prompt})
        except (ValueError, PromptBudgetError) as e:
            errors.append({"index": index, "id": query.id, "error": str(e)})
    _write_jsonl(args.out, out_rows)
    if errors:
        _write_jsonl(args.errors, errors)
    manifest = _manifest(
        "fewshot",
        {
            "k": k,
            "mode": mode,
            "seed": seed,
            "budget": budget_tokens,
            "embeddings": args.embeddings,
            "prng": PRNG_FAMILY,
        },
        [args.train, args.queries],
        [args.out],
    )
    _write_manifest_sidecar(manifest, args.out)
    return EXIT_DATA_ERROR if errors else EXIT_OK


def _plain_block(record: Record, cfg: LinearizationConfig, template: str | None) -> str:
    return render_example_input(record, cfg, template) + TARGET_JOIN + record.target


def cmd_mix(args: argparse.Namespace) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    spec = MixtureSpec(sizes=sizes, temperature=args.temperature)
    weights = temperature_weights(spec)
    schedule = sample_schedule(weights, args.steps, args.seed) if args.steps else []
    manifest = _manifest(
        "mix",
        {
            "sizes": list(sizes),
            "temperature": args.temperature,
            "steps": args.steps,
            "seed": args.seed,
            "prng": PRNG_FAMILY,
        },
        [],
        [args.out],
    )
    doc = {"weights": weights, "schedule": schedule, "manifest": manifest}
    _dump_json(args.out, doc)
    _write_manifest_sidecar(manifest, args.out)
    return EXIT_OK


def cmd_format_spec(args: argparse.Namespace) -> int:
    doc = {
        "separators": dict(SEPARATORS),
        "format_version": FORMAT_VERSION,
        "sql_grammar": SQL_GRAMMAR_VERSION,
        "blec_rules": BLEC_RULES_VERSION,
        "bleu": BLEU_VERSION,
        "token_counter": TOKEN_COUNTER_VERSION,
        "prng": PRNG_FAMILY,
        "knowledge_kinds": ["table", "highlighted_table", "triples", "schema", "ontology", "formal"],
        "output_kinds": [
            "free_text", "formal_sql", "formal_sexpr", "formal_top",
            "answer_set", "boolean", "dialogue_state",
        ],
        "toolkit_version": __version__,
    }
    _dump_json(args.out, doc)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skgtext",
        description="Flatten structured-knowledge records into text-to-text pairs and evaluate predictions.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("linearize", help="records JSONL -> {id, input_text, target_text} pairs")
    p.add_argument("records", help="records JSONL path or -")
    p.add_argument("--out", default="-")
    p.add_argument("--errors", default="errors.jsonl")
    p.add_argument("--config")
    p.add_argument("--ordering", choices=[o.value for o in OrderingPolicy])
    p.add_argument("--reverse", action="store_const", const=True, default=None,
                   help="reverse the structured knowledge ordering")
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--strategy", default=None, help="token counting strategy")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("eval", help="score predictions JSONL against records JSONL")
    p.add_argument("records")
    p.add_argument("predictions", help="JSONL of {id, prediction}")
    p.add_argument("--out", default="-")
    p.add_argument("--csv", help="optional per-record CSV path")
    p.add_argument("--errors", default="errors.jsonl")
    p.add_argument("--config")
    p.add_argument("--lowercase", action="store_const", const=True, default=None,
                   help="force lowercasing for every output kind")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="check formal-language well-formedness")
    p.add_argument("input", help="JSONL of {id, language, text}")
    p.add_argument("--out", default="-")
    p.add_argument("--errors", default="errors.jsonl")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="token-length histograms of a record corpus")
    p.add_argument("records")
    p.add_argument("--json", dest="json_out")
    p.add_argument("--table", dest="table_out")
    p.add_argument("--counts", help="external per-record token counts JSONL")
    p.add_argument("--config")
    p.add_argument("--ordering", choices=[o.value for o in OrderingPolicy])
    p.add_argument("--reverse", action="store_const", const=True, default=None)
    p.add_argument("--strategy", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fewshot", help="build few-shot prompts")
    p.add_argument("--train", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--errors", default="errors.jsonl")
    p.add_argument("--k", type=int)
    p.add_argument("--mode", choices=["random", "select"])
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--embeddings", help="external embedding file for select mode")
    p.add_argument("--template", help="prompt template with {input}/{request}/{knowledge}/{context}")
    p.add_argument("--config")
    p.add_argument("--ordering", choices=[o.value for o in OrderingPolicy])
    p.add_argument("--reverse", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("mix", help="temperature-mixing weights and schedule")
    p.add_argument("--sizes", required=True, help="comma-separated task sizes")
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("format-spec", help="print separator constants and grammar versions")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_format_spec)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
