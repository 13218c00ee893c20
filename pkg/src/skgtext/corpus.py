"""Token budgeting, knowledge truncation, and length statistics.

The default token counter is a deterministic proxy (word runs plus single
punctuation marks), not a subword vocabulary, so length distributions are
reproduced in shape rather than bit-exactly; per-record counts from a real
tokenizer can be supplied externally for fidelity runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .knowledge import (
    DatabaseSchema,
    HighlightedTable,
    Ontology,
    Record,
    StructuredKnowledge,
    Table,
    TripleSet,
)
from .linearize import CONTEXT_JOIN, LinearizationConfig, assemble_input, linearize_knowledge

DEFAULT_STRATEGY = "word_punct"
TOKEN_COUNTER_VERSION = "word-punct-1"

_TOKEN = re.compile(r"\w+|[^\w\s]")

_STRATEGIES: dict[str, Callable[[str], int]] = {
    "word_punct": lambda text: len(_TOKEN.findall(text)),
    "whitespace": lambda text: len(text.split()),
}


def count_tokens(text: str, strategy: str = DEFAULT_STRATEGY) -> int:
    """Deterministic token count of ``text`` under a named strategy.

    The default counts maximal runs of word characters plus each punctuation
    character as one token; counting is additive over concatenation with a
    separating space.
    """
    try:
        counter = _STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown token counting strategy {strategy!r}") from None
    return counter(text)


@dataclass(frozen=True)
class TokenBudget:
    max_tokens: int = 1024
    counter: str = DEFAULT_STRATEGY

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")

    def count(self, text: str) -> int:
        return count_tokens(text, self.counter)

    def fits(self, text: str) -> bool:
        return self.count(text) <= self.max_tokens


class TruncationError(ValueError):
    """Raised when even the irreducible knowledge core exceeds the budget."""


def removable_unit_count(knowledge: StructuredKnowledge | None) -> int:
    """How many whole units (rows, triples, tables, highlighted cells) a
    knowledge value exposes for truncation. Ontology slots are never removed
    and formal expressions have no units."""
    if isinstance(knowledge, Table):
        return len(knowledge.rows)
    if isinstance(knowledge, TripleSet):
        return len(knowledge.triples)
    if isinstance(knowledge, DatabaseSchema):
        return len(knowledge.tables)
    if isinstance(knowledge, HighlightedTable):
        return len(knowledge.highlighted)
    return 0


def keep_units(knowledge: StructuredKnowledge, n: int) -> StructuredKnowledge:
    """Keep the first ``n`` units of ``knowledge``, dropping from the end.

    Retained units are never reordered and cell contents never change, so
    the result still satisfies the type invariants.
    """
    if isinstance(knowledge, Table):
        return replace(knowledge, rows=knowledge.rows[:n])
    if isinstance(knowledge, TripleSet):
        return TripleSet(knowledge.triples[:n])
    if isinstance(knowledge, DatabaseSchema):
        return replace(knowledge, tables=knowledge.tables[:n])
    if isinstance(knowledge, HighlightedTable):
        return replace(knowledge, highlighted=knowledge.highlighted[:n])
    return knowledge


def truncate_knowledge(
    knowledge: StructuredKnowledge | None,
    assembled_prefix_tokens: int,
    budget: TokenBudget,
) -> StructuredKnowledge | None:
    """Drop trailing whole units until the linearized knowledge plus the
    already-assembled prefix fits the budget.

    A table always retains its header and, when it had any, at least one
    row; triple sets, schemas, and highlight lists retain at least one unit.
    Ontologies and formal expressions are kept whole. Idempotent: a fitting
    value is returned unchanged. Raises TruncationError when even the
    irreducible core exceeds the budget.
    """

    def fits(k: StructuredKnowledge | None) -> bool:
        return assembled_prefix_tokens + budget.count(linearize_knowledge(k)) <= budget.max_tokens

    if fits(knowledge):
        return knowledge
    total = removable_unit_count(knowledge)
    if total == 0:
        raise TruncationError(
            "knowledge has no removable units and exceeds the budget"
        )
    assert knowledge is not None
    for n in range(total - 1, 0, -1):
        candidate = keep_units(knowledge, n)
        if fits(candidate):
            return candidate
    raise TruncationError("even the irreducible knowledge core exceeds the budget")


# ---------------------------------------------------------------------------
# Length histograms

INPUT_BIN_EDGES = (512, 1024)
OUTPUT_BIN_EDGES = (128, 256)
STREAMS = ("structured", "text", "combined", "output")


def _bin_index(value: int, edges: tuple[int, int]) -> int:
    if value < edges[0]:
        return 0
    if value < edges[1]:
        return 1
    return 2


@dataclass(frozen=True)
class StreamHistogram:
    edges: tuple[int, int]
    counts: tuple[int, int, int]

    @property
    def percentages(self) -> tuple[float, float, float]:
        total = sum(self.counts)
        if total == 0:
            return (0.0, 0.0, 0.0)
        return tuple(100.0 * c / total for c in self.counts)  # type: ignore[return-value]

    def labels(self) -> tuple[str, str, str]:
        lo, hi = self.edges
        return (f"[0, {lo})", f"[{lo}, {hi})", f"[{hi}, inf)")


@dataclass(frozen=True)
class LengthHistogram:
    """Token-length distribution of a record corpus, one stream each for the
    structured knowledge, the request+context text, the combined assembled
    input, and the output."""

    structured: StreamHistogram
    text: StreamHistogram
    combined: StreamHistogram
    output: StreamHistogram
    num_records: int

    def to_json(self) -> dict:
        out: dict = {"num_records": self.num_records}
        for name in STREAMS:
            stream: StreamHistogram = getattr(self, name)
            out[name] = {
                "bins": list(stream.labels()),
                "counts": list(stream.counts),
                "percentages": [round(p, 2) for p in stream.percentages],
            }
        return out


def record_token_counts(
    record: Record,
    cfg: LinearizationConfig | None = None,
    strategy: str = DEFAULT_STRATEGY,
) -> dict[str, int]:
    """Structured / text / combined / output token counts of one record."""
    knowledge_text = linearize_knowledge(record.knowledge)
    text_parts = [p for p in (record.request, CONTEXT_JOIN.join(record.context)) if p]
    combined = assemble_input(
        record.request, knowledge_text, record.context, cfg or LinearizationConfig()
    )
    return {
        "structured": count_tokens(knowledge_text, strategy),
        "text": sum(count_tokens(p, strategy) for p in text_parts),
        "combined": count_tokens(combined, strategy),
        "output": count_tokens(record.target, strategy),
    }


def length_histogram(
    records: Sequence[Record],
    cfg: LinearizationConfig | None = None,
    strategy: str = DEFAULT_STRATEGY,
    external_counts: Mapping[str, Mapping[str, int]] | None = None,
) -> LengthHistogram:
    """Bin every record's token counts into the three-bucket layout.

    Input streams use bins [0, 512), [512, 1024), [1024, inf); the output
    stream uses [0, 128), [128, 256), [256, inf). ``external_counts`` maps
    record id to per-stream counts from an external tokenizer and overrides
    the built-in counter where present (missing streams fall back).
    """
    counts = {name: [0, 0, 0] for name in STREAMS}
    for record in records:
        computed = record_token_counts(record, cfg, strategy)
        override = (external_counts or {}).get(record.id, {})
        merged = dict(computed)
        merged.update({k: int(v) for k, v in override.items() if k in counts})
        if "combined" not in override and ("structured" in override or "text" in override):
            merged["combined"] = merged["structured"] + merged["text"]
        for name in STREAMS:
            edges = OUTPUT_BIN_EDGES if name == "output" else INPUT_BIN_EDGES
            counts[name][_bin_index(merged[name], edges)] += 1

    def stream(name: str) -> StreamHistogram:
        edges = OUTPUT_BIN_EDGES if name == "output" else INPUT_BIN_EDGES
        return StreamHistogram(edges=edges, counts=tuple(counts[name]))  # type: ignore[arg-type]

    return LengthHistogram(
        structured=stream("structured"),
        text=stream("text"),
        combined=stream("combined"),
        output=stream("output"),
        num_records=len(records),
    )


def format_histogram_table(histograms: Mapping[str, LengthHistogram]) -> str:
    """Aligned plain-text table, one row per task, twelve percentage columns
    (four streams x three bins)."""
    header_groups = {
        "structured": "Structure Input Tokens",
        "text": "Text Input Tokens",
        "combined": "Structure + Text Tokens",
        "output": "Output Tokens",
    }
    sample = next(iter(histograms.values()), None)
    bin_labels: list[str] = []
    for name in STREAMS:
        if sample is None:
            edges = OUTPUT_BIN_EDGES if name == "output" else INPUT_BIN_EDGES
            labels = StreamHistogram(edges, (0, 0, 0)).labels()
        else:
            labels = getattr(sample, name).labels()
        bin_labels.extend(labels)
    rows = []
    for task, hist in histograms.items():
        cells = [task]
        for name in STREAMS:
            cells.extend(f"{p:.2f}" for p in getattr(hist, name).percentages)
        rows.append(cells)
    head1 = [""] + [header_groups[name] for name in STREAMS for _ in range(3)]
    head2 = ["Distribution(%)"] + bin_labels
    table = [head1, head2] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(head2))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    return "\n".join(lines)
