"""Canonical data model for structured-knowledge records.

Six knowledge shapes are supported: plain tables, highlighted tables,
relation-triple sets (also used for KG subgraphs), database schemas,
slot ontologies, and opaque formal expressions. A :class:`Record` bundles
one task instance: user request, dialogue context, knowledge, and the gold
target string.

All values are immutable after construction (tuples everywhere), so they are
safe to share across threads. Constructors normalise sequence types but never
repair data: invariant checking lives in :func:`validate_record`, which
reports violations instead of raising, so that malformed inputs can be
inspected and routed to error streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Iterator, TextIO, Union


class OutputKind(str, Enum):
    """What the target string of a record encodes."""

    FREE_TEXT = "free_text"
    FORMAL_SQL = "formal_sql"
    FORMAL_SEXPR = "formal_sexpr"
    FORMAL_TOP = "formal_top"
    ANSWER_SET = "answer_set"
    BOOLEAN = "boolean"
    DIALOGUE_STATE = "dialogue_state"

    @property
    def formal_language(self) -> str | None:
        """Language tag ("sql", "sexpr", "top") for formal kinds, else None."""
        return _FORMAL_LANGUAGES.get(self)

    @property
    def is_formal(self) -> bool:
        return self in _FORMAL_LANGUAGES


_FORMAL_LANGUAGES = {
    OutputKind.FORMAL_SQL: "sql",
    OutputKind.FORMAL_SEXPR: "sexpr",
    OutputKind.FORMAL_TOP: "top",
}

# Default output kinds of the bundled benchmark task tags. `Record.task` is a
# free string so new tasks need no model change; this map only powers the
# consistency check in validate_record and metric dispatch defaults.
TASK_OUTPUT_KINDS: dict[str, OutputKind] = {
    "spider": OutputKind.FORMAL_SQL,
    "sparc": OutputKind.FORMAL_SQL,
    "cosql": OutputKind.FORMAL_SQL,
    "grailqa": OutputKind.FORMAL_SEXPR,
    "webqsp": OutputKind.FORMAL_SEXPR,
    "mtop": OutputKind.FORMAL_TOP,
    "wikisql": OutputKind.ANSWER_SET,
    "wikitq": OutputKind.ANSWER_SET,
    "compwebq": OutputKind.ANSWER_SET,
    "hybridqa": OutputKind.ANSWER_SET,
    "multimodalqa": OutputKind.ANSWER_SET,
    "sqa": OutputKind.ANSWER_SET,
    "fetaqa": OutputKind.FREE_TEXT,
    "dart": OutputKind.FREE_TEXT,
    "totto": OutputKind.FREE_TEXT,
    "kvret": OutputKind.FREE_TEXT,
    "sql2text": OutputKind.FREE_TEXT,
    "logic2text": OutputKind.FREE_TEXT,
    "tabfact": OutputKind.BOOLEAN,
    "feverous": OutputKind.BOOLEAN,
    "multiwoz": OutputKind.DIALOGUE_STATE,
}


def _str_tuple(value: Iterable[str]) -> tuple[str, ...]:
    return tuple(str(v) for v in value)


@dataclass(frozen=True)
class Table:
    """A grid of cells with a header row and optional page/section metadata.

    Cell strings are stored verbatim; no trimming or escaping happens here so
    that serialisations reproduce source data byte for byte.
    """

    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()
    page_title: str | None = None
    section_title: str | None = None
    caption: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "header", _str_tuple(self.header))
        object.__setattr__(self, "rows", tuple(_str_tuple(r) for r in self.rows))


@dataclass(frozen=True)
class HighlightedTable:
    """A table plus the set of cell coordinates that a description focuses on.

    ``row_header_columns`` names the columns whose cells act as row headers
    for the other cells of their row (and, for cells inside those columns,
    whose earlier values act as additional column headers). Defaults to
    column 0.
    """

    table: Table
    highlighted: tuple[tuple[int, int], ...]
    page_title: str
    section_title: str
    row_header_columns: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "highlighted", tuple((int(r), int(c)) for r, c in self.highlighted)
        )
        object.__setattr__(
            self, "row_header_columns", tuple(int(c) for c in self.row_header_columns)
        )


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str


@dataclass(frozen=True)
class TripleSet:
    """An ordered list of relation triples; order is significant.

    A subgraph retrieved from a knowledge graph is represented the same way,
    as a list of triples.
    """

    triples: tuple[Triple, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "triples", tuple(self.triples))


@dataclass(frozen=True)
class SchemaTable:
    """One table of a database schema.

    ``value_examples``, when present, is aligned with ``columns``; each entry
    is either None or the example values of that column.
    """

    name: str
    columns: tuple[str, ...]
    value_examples: tuple[tuple[str, ...] | None, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", _str_tuple(self.columns))
        if self.value_examples is not None:
            object.__setattr__(
                self,
                "value_examples",
                tuple(None if v is None else _str_tuple(v) for v in self.value_examples),
            )


@dataclass(frozen=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[SchemaTable, ...]
    primary_keys: tuple[tuple[str, str], ...] = ()
    foreign_keys: tuple[tuple[tuple[str, str], tuple[str, str]], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(
            self, "primary_keys", tuple((str(t), str(c)) for t, c in self.primary_keys)
        )
        object.__setattr__(
            self,
            "foreign_keys",
            tuple(((str(a), str(b)), (str(c), str(d))) for (a, b), (c, d) in self.foreign_keys),
        )


@dataclass(frozen=True)
class Ontology:
    """Ordered (slot, candidate values) pairs of a dialogue domain.

    A slot with no enumerable values carries the single value "none".
    """

    slots: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "slots", tuple((str(n), _str_tuple(v)) for n, v in self.slots)
        )

    def slot_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.slots)


@dataclass(frozen=True)
class DialogueState:
    """Ordered (slot, value) pairs; unset slots carry the value "none"."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "pairs", tuple((str(s), str(v)) for s, v in self.pairs)
        )

    def value(self, slot: str) -> str | None:
        for name, val in self.pairs:
            if name == slot:
                return val
        return None


@dataclass(frozen=True)
class FormalExpression:
    """Opaque knowledge text that is passed through linearization verbatim.

    Used for knowledge whose serialisation is task-specific and already flat
    (KG neighbourhoods with entity anchors, API listings, caption+schema
    strings, table-plus-passage concatenations).
    """

    text: str


StructuredKnowledge = Union[
    Table, HighlightedTable, TripleSet, DatabaseSchema, Ontology, FormalExpression
]


@dataclass(frozen=True)
class Record:
    """One task instance.

    ``context`` holds prior dialogue turns, most recent first. ``target`` is
    the gold output already in its serialized string form.
    """

    id: str
    task: str
    request: str | None
    context: tuple[str, ...]
    knowledge: StructuredKnowledge | None
    target: str
    output_kind: OutputKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", _str_tuple(self.context))
        if not isinstance(self.output_kind, OutputKind):
            object.__setattr__(self, "output_kind", OutputKind(self.output_kind))


# ---------------------------------------------------------------------------
# Validation


def validate_knowledge(knowledge: StructuredKnowledge | None) -> list[str]:
    """Invariant violations of a knowledge value, empty when well formed."""
    out: list[str] = []
    if knowledge is None or isinstance(knowledge, FormalExpression):
        return out
    if isinstance(knowledge, Table):
        _check_table(knowledge, out)
    elif isinstance(knowledge, HighlightedTable):
        _check_table(knowledge.table, out, prefix="table: ")
        n_rows = len(knowledge.table.rows)
        n_cols = len(knowledge.table.header)
        seen: set[tuple[int, int]] = set()
        for r, c in knowledge.highlighted:
            if not (0 <= r < n_rows and 0 <= c < n_cols):
                out.append(f"highlight ({r}, {c}) is out of bounds for a {n_rows}x{n_cols} table")
            if (r, c) in seen:
                out.append(f"highlight ({r}, {c}) is duplicated")
            seen.add((r, c))
        for c in knowledge.row_header_columns:
            if not 0 <= c < n_cols:
                out.append(f"row-header column {c} is out of bounds")
    elif isinstance(knowledge, TripleSet):
        for i, t in enumerate(knowledge.triples):
            for part, value in (("subject", t.subject), ("relation", t.relation), ("object", t.object)):
                if not value.strip():
                    out.append(f"triple {i} has an empty {part}")
    elif isinstance(knowledge, DatabaseSchema):
        _check_schema(knowledge, out)
    elif isinstance(knowledge, Ontology):
        seen_slots: set[str] = set()
        for name, values in knowledge.slots:
            if name in seen_slots:
                out.append(f"duplicate ontology slot {name!r}")
            seen_slots.add(name)
            if not values:
                out.append(f"ontology slot {name!r} has no values (use the single value 'none')")
    else:
        out.append(f"unknown knowledge type {type(knowledge).__name__}")
    return out


def _check_table(table: Table, out: list[str], prefix: str = "") -> None:
    if not table.header:
        out.append(prefix + "table header is empty")
        return
    width = len(table.header)
    for i, row in enumerate(table.rows):
        if len(row) != width:
            out.append(f"{prefix}row {i} has {len(row)} cells, expected {width}")


def _check_schema(schema: DatabaseSchema, out: list[str]) -> None:
    table_cols: dict[str, tuple[str, ...]] = {}
    for t in schema.tables:
        if t.name in table_cols:
            out.append(f"duplicate schema table {t.name!r}")
        table_cols[t.name] = t.columns
        if len(set(t.columns)) != len(t.columns):
            out.append(f"table {t.name!r} has duplicate column names")
        if t.value_examples is not None and len(t.value_examples) != len(t.columns):
            out.append(f"table {t.name!r} value examples are not aligned with its columns")
    def check_ref(kind: str, table: str, column: str) -> None:
        if table not in table_cols:
            out.append(f"{kind} references unknown table {table!r}")
        elif column not in table_cols[table]:
            out.append(f"{kind} references unknown column {table!r}.{column!r}")
    for t, c in schema.primary_keys:
        check_ref("primary key", t, c)
    for (t1, c1), (t2, c2) in schema.foreign_keys:
        check_ref("foreign key", t1, c1)
        check_ref("foreign key", t2, c2)


# Substrings that collide with the flat-text grammar when they occur inside
# table cells; reported as warnings only (cells are stored verbatim).
_SEPARATOR_COLLISIONS = (" | ", "col : ", " row ")


def validate_record(record: Record, include_separator_warnings: bool = False) -> list[str]:
    """Invariant violations of ``record``; empty iff the record is well formed.

    Pure: identical input always yields identical violations. With
    ``include_separator_warnings`` set, cells that contain grid separator
    substrings are additionally flagged (prefixed "warning:"); such records
    still linearize deterministically but cannot be re-parsed from flat text.
    """
    out: list[str] = []
    if not record.id:
        out.append("record id is empty")
    if record.request is None and record.knowledge is None:
        out.append("request and knowledge are both absent")
    expected = TASK_OUTPUT_KINDS.get(record.task)
    if expected is not None and record.output_kind is not expected:
        out.append(
            f"task {record.task!r} expects output kind {expected.value!r},"
            f" got {record.output_kind.value!r}"
        )
    out.extend(validate_knowledge(record.knowledge))
    if include_separator_warnings:
        out.extend(_separator_warnings(record.knowledge))
    return out


def _separator_warnings(knowledge: StructuredKnowledge | None) -> list[str]:
    cells: list[tuple[str, str]] = []
    if isinstance(knowledge, Table):
        cells = _table_cells(knowledge)
    elif isinstance(knowledge, HighlightedTable):
        cells = _table_cells(knowledge.table)
    out = []
    for where, cell in cells:
        hits = [s for s in _SEPARATOR_COLLISIONS if s in cell]
        if hits:
            out.append(f"warning: {where} contains separator substring(s) {hits}")
    return out


def _table_cells(table: Table) -> list[tuple[str, str]]:
    cells = [(f"header cell {i}", c) for i, c in enumerate(table.header)]
    for r, row in enumerate(table.rows):
        cells.extend((f"cell ({r}, {c})", v) for c, v in enumerate(row))
    return cells


# ---------------------------------------------------------------------------
# JSONL wire format

_KIND_NAMES = {
    Table: "table",
    HighlightedTable: "highlighted_table",
    TripleSet: "triples",
    DatabaseSchema: "schema",
    Ontology: "ontology",
    FormalExpression: "formal",
}


def knowledge_to_json(knowledge: StructuredKnowledge | None) -> dict[str, Any] | None:
    if knowledge is None:
        return None
    kind = _KIND_NAMES[type(knowledge)]
    if isinstance(knowledge, Table):
        return {
            "kind": kind,
            "header": list(knowledge.header),
            "rows": [list(r) for r in knowledge.rows],
            "page_title": knowledge.page_title,
            "section_title": knowledge.section_title,
            "caption": knowledge.caption,
        }
    if isinstance(knowledge, HighlightedTable):
        table = knowledge_to_json(knowledge.table)
        assert table is not None
        table.pop("kind")
        return {
            "kind": kind,
            "table": table,
            "highlighted": [list(h) for h in knowledge.highlighted],
            "page_title": knowledge.page_title,
            "section_title": knowledge.section_title,
            "row_header_columns": list(knowledge.row_header_columns),
        }
    if isinstance(knowledge, TripleSet):
        return {
            "kind": kind,
            "triples": [[t.subject, t.relation, t.object] for t in knowledge.triples],
        }
    if isinstance(knowledge, DatabaseSchema):
        return {
            "kind": kind,
            "db_id": knowledge.db_id,
            "tables": [
                {
                    "name": t.name,
                    "columns": list(t.columns),
                    "value_examples": None
                    if t.value_examples is None
                    else [None if v is None else list(v) for v in t.value_examples],
                }
                for t in knowledge.tables
            ],
            "primary_keys": [list(k) for k in knowledge.primary_keys],
            "foreign_keys": [[list(a), list(b)] for a, b in knowledge.foreign_keys],
        }
    if isinstance(knowledge, Ontology):
        return {"kind": kind, "slots": [[n, list(v)] for n, v in knowledge.slots]}
    if isinstance(knowledge, FormalExpression):
        return {"kind": kind, "text": knowledge.text}
    raise TypeError(f"cannot serialise {type(knowledge).__name__}")


def knowledge_from_json(data: dict[str, Any] | None) -> StructuredKnowledge | None:
    if data is None:
        return None
    kind = data.get("kind")
    if kind == "table":
        return _table_from_json(data)
    if kind == "highlighted_table":
        return HighlightedTable(
            table=_table_from_json(data["table"]),
            highlighted=tuple((r, c) for r, c in data["highlighted"]),
            page_title=data["page_title"],
            section_title=data["section_title"],
            row_header_columns=tuple(data.get("row_header_columns", (0,))),
        )
    if kind == "triples":
        return TripleSet(tuple(Triple(s, r, o) for s, r, o in data["triples"]))
    if kind == "schema":
        return DatabaseSchema(
            db_id=data["db_id"],
            tables=tuple(
                SchemaTable(
                    name=t["name"],
                    columns=tuple(t["columns"]),
                    value_examples=None
                    if t.get("value_examples") is None
                    else tuple(None if v is None else tuple(v) for v in t["value_examples"]),
                )
                for t in data["tables"]
            ),
            primary_keys=tuple((t, c) for t, c in data.get("primary_keys", ())),
            foreign_keys=tuple(
                ((a, b), (c, d)) for (a, b), (c, d) in data.get("foreign_keys", ())
            ),
        )
    if kind == "ontology":
        return Ontology(tuple((n, tuple(v)) for n, v in data["slots"]))
    if kind == "formal":
        return FormalExpression(data["text"])
    raise ValueError(f"unknown knowledge kind {kind!r}")


def _table_from_json(data: dict[str, Any]) -> Table:
    return Table(
        header=tuple(data["header"]),
        rows=tuple(tuple(r) for r in data.get("rows", ())),
        page_title=data.get("page_title"),
        section_title=data.get("section_title"),
        caption=data.get("caption"),
    )


def record_to_json(record: Record) -> dict[str, Any]:
    return {
        "id": record.id,
        "task": record.task,
        "request": record.request,
        "context": list(record.context),
        "knowledge": knowledge_to_json(record.knowledge),
        "target": record.target,
        "output_kind": record.output_kind.value,
    }


def record_from_json(data: dict[str, Any]) -> Record:
    return Record(
        id=data["id"],
        task=data["task"],
        request=data.get("request"),
        context=tuple(data.get("context", ())),
        knowledge=knowledge_from_json(data.get("knowledge")),
        target=data["target"],
        output_kind=OutputKind(data["output_kind"]),
    )


def read_records(stream: TextIO | Iterable[str]) -> Iterator[Record]:
    """Parse records from JSONL, one object per non-blank line."""
    for line in stream:
        line = line.strip()
        if line:
            yield record_from_json(json.loads(line))


def write_records(records: Iterable[Record], stream: TextIO) -> None:
    for record in records:
        stream.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")
