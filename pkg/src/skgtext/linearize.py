"""Deterministic flattening of structured knowledge into text sequences.

Every function here is pure: identical input yields byte-identical output.
The separator constants below are the canonical surface grammar and are
exposed through the ``format-spec`` CLI subcommand; changing them breaks
compatibility with previously produced corpora.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Sequence

from .knowledge import (
    DatabaseSchema,
    FormalExpression,
    HighlightedTable,
    Ontology,
    SchemaTable,
    StructuredKnowledge,
    Table,
    TripleSet,
)

FORMAT_VERSION = "1"

COLUMN_JOIN = " | "
HEADER_PREFIX = "col : "
ROW_PREFIX = " row {k} : "
TITLE_JOIN = " | "
TRIPLE_INTERNAL = " : "
TRIPLE_JOIN = " | "
SCHEMA_TABLE_JOIN = " | "
SCHEMA_COLUMN_JOIN = " , "
ONTOLOGY_SLOT_SUFFIX = "; "
ONTOLOGY_VALUE_JOIN = ", "
CONTEXT_JOIN = " | "
COMPONENT_JOIN = "; "

SEPARATORS: Mapping[str, str] = MappingProxyType(
    {
        "column_join": COLUMN_JOIN,
        "header_prefix": HEADER_PREFIX,
        "row_prefix": ROW_PREFIX,
        "title_join": TITLE_JOIN,
        "triple_internal": TRIPLE_INTERNAL,
        "triple_join": TRIPLE_JOIN,
        "schema_table_join": SCHEMA_TABLE_JOIN,
        "schema_column_join": SCHEMA_COLUMN_JOIN,
        "ontology_slot_suffix": ONTOLOGY_SLOT_SUFFIX,
        "ontology_value_join": ONTOLOGY_VALUE_JOIN,
        "context_join": CONTEXT_JOIN,
        "component_join": COMPONENT_JOIN,
    }
)


class OrderingPolicy(str, Enum):
    """Order of request (r), structured knowledge (s), and context (c).

    RS_C and RCS produce the same surface string (request; context;
    knowledge); they are distinct labels so runs can record which setting was
    intended. SR puts the knowledge first.
    """

    RS_C = "rs_c"
    SR = "sr"
    RCS = "rcs"


@dataclass(frozen=True)
class LinearizationConfig:
    ordering: OrderingPolicy = OrderingPolicy.RS_C
    reverse_knowledge: bool = False
    separators: Mapping[str, str] = field(default=SEPARATORS)

    def __post_init__(self) -> None:
        if not isinstance(self.ordering, OrderingPolicy):
            object.__setattr__(self, "ordering", OrderingPolicy(self.ordering))
        for name, sep in self.separators.items():
            if not sep:
                raise ValueError(f"separator {name!r} must be a non-empty string")


class TemplateError(ValueError):
    """A row template references placeholders that are not header cells."""

    def __init__(self, unresolved: Sequence[str]):
        self.unresolved = list(unresolved)
        super().__init__(f"unresolved template placeholders: {', '.join(self.unresolved)}")


def linearize_table(table: Table) -> str:
    """Render a table as "col : h1 | h2 ... row 1 : c1 | c2 ...".

    Page and section titles, when present, are prepended as a
    " | "-joined prefix before the header marker.
    """
    parts = [t for t in (table.page_title, table.section_title) if t is not None]
    prefix = TITLE_JOIN.join(parts) + " " if parts else ""
    out = [prefix, HEADER_PREFIX, COLUMN_JOIN.join(table.header)]
    for k, row in enumerate(table.rows, start=1):
        out.append(ROW_PREFIX.format(k=k))
        out.append(COLUMN_JOIN.join(row))
    return "".join(out)


def _highlight_headers(ht: HighlightedTable, row: int, col: int) -> tuple[list[str], list[str]]:
    """Column and row headers of one highlighted cell.

    Column headers are the header cell of the column plus, when the column is
    itself a row-header column, the values of earlier rows in that column
    (numbered-row tables label later entries with the earlier numbers). Row
    headers are the same-row values of the row-header columns.
    """
    col_headers = [ht.table.header[col]]
    if col in ht.row_header_columns:
        col_headers.extend(ht.table.rows[r][col] for r in range(row))
    row_headers = [
        ht.table.rows[row][c] for c in ht.row_header_columns if c != col
    ]
    return col_headers, row_headers


def linearize_highlighted_table(ht: HighlightedTable) -> str:
    """Render page title, section title, and each highlighted cell with its
    column/row headers inside tag markers."""
    out = [
        f"<page_title> {ht.page_title} </page_title> ",
        f"<section_title> {ht.section_title} </section_title> ",
        "<table> ",
    ]
    for row, col in ht.highlighted:
        value = ht.table.rows[row][col]
        col_headers, row_headers = _highlight_headers(ht, row, col)
        cell = [f"<cell> {value} "]
        cell.extend(f"<col_header> {h} </col_header> " for h in col_headers)
        cell.extend(f"<row_header> {h} </row_header> " for h in row_headers)
        cell.append("</cell> ")
        out.append("".join(cell))
    out.append("</table>")
    return "".join(out)


def linearize_triples(ts: TripleSet) -> str:
    return TRIPLE_JOIN.join(
        f"{t.subject}{TRIPLE_INTERNAL}{t.relation}{TRIPLE_INTERNAL}{t.object}"
        for t in ts.triples
    )


def _schema_column(name: str, values: tuple[str, ...] | None) -> str:
    if values:
        return f"{name} ( " + SCHEMA_COLUMN_JOIN.join(values) + " )"
    return name


def linearize_schema(schema: DatabaseSchema) -> str:
    """Render "| db_id | table : col1 , col2 | ..."; columns that carry value
    examples render as "name ( v1 , v2 )"."""
    parts = [schema.db_id]
    for t in schema.tables:
        examples = t.value_examples or (None,) * len(t.columns)
        cols = SCHEMA_COLUMN_JOIN.join(
            _schema_column(c, v) for c, v in zip(t.columns, examples)
        )
        parts.append(f"{t.name} : {cols}")
    return "| " + SCHEMA_TABLE_JOIN.join(parts)


def linearize_ontology(ontology: Ontology) -> str:
    """Render each slot as "slot: v1, v2; " with the trailing slot suffix kept."""
    return "".join(
        f"{name}: {ONTOLOGY_VALUE_JOIN.join(values)}{ONTOLOGY_SLOT_SUFFIX}"
        for name, values in ontology.slots
    )


def linearize_knowledge(knowledge: StructuredKnowledge | None) -> str:
    """Dispatch to the shape-specific linearizer; absent knowledge renders ""."""
    if knowledge is None:
        return ""
    if isinstance(knowledge, Table):
        return linearize_table(knowledge)
    if isinstance(knowledge, HighlightedTable):
        return linearize_highlighted_table(knowledge)
    if isinstance(knowledge, TripleSet):
        return linearize_triples(knowledge)
    if isinstance(knowledge, DatabaseSchema):
        return linearize_schema(knowledge)
    if isinstance(knowledge, Ontology):
        return linearize_ontology(knowledge)
    if isinstance(knowledge, FormalExpression):
        return knowledge.text
    raise TypeError(f"cannot linearize {type(knowledge).__name__}")


def reverse_knowledge(knowledge: StructuredKnowledge | None) -> StructuredKnowledge | None:
    """Reverse the internal ordering of a knowledge value.

    Tables reverse column order, schemas reverse table and column order,
    triple sets reverse the triple list, ontologies reverse slot and value
    order; formal expressions are returned unchanged. An involution:
    ``reverse_knowledge(reverse_knowledge(k)) == k``.
    """
    if knowledge is None or isinstance(knowledge, FormalExpression):
        return knowledge
    if isinstance(knowledge, Table):
        return _reverse_table(knowledge)
    if isinstance(knowledge, HighlightedTable):
        width = len(knowledge.table.header)
        return HighlightedTable(
            table=_reverse_table(knowledge.table),
            highlighted=tuple((r, width - 1 - c) for r, c in knowledge.highlighted),
            page_title=knowledge.page_title,
            section_title=knowledge.section_title,
            row_header_columns=tuple(width - 1 - c for c in knowledge.row_header_columns),
        )
    if isinstance(knowledge, TripleSet):
        return TripleSet(tuple(reversed(knowledge.triples)))
    if isinstance(knowledge, DatabaseSchema):
        return DatabaseSchema(
            db_id=knowledge.db_id,
            tables=tuple(
                SchemaTable(
                    name=t.name,
                    columns=tuple(reversed(t.columns)),
                    value_examples=None
                    if t.value_examples is None
                    else tuple(reversed(t.value_examples)),
                )
                for t in reversed(knowledge.tables)
            ),
            primary_keys=knowledge.primary_keys,
            foreign_keys=knowledge.foreign_keys,
        )
    if isinstance(knowledge, Ontology):
        return Ontology(
            tuple((name, tuple(reversed(values))) for name, values in reversed(knowledge.slots))
        )
    raise TypeError(f"cannot reverse {type(knowledge).__name__}")


def _reverse_table(table: Table) -> Table:
    return Table(
        header=tuple(reversed(table.header)),
        rows=tuple(tuple(reversed(r)) for r in table.rows),
        page_title=table.page_title,
        section_title=table.section_title,
        caption=table.caption,
    )


def assemble_input(
    request: str | None,
    knowledge_text: str,
    context: Sequence[str],
    cfg: LinearizationConfig | None = None,
) -> str:
    """Join request, context, and knowledge into the model input sequence.

    Components are joined by "; " in the order given by the config's
    ordering policy; context turns are joined by " | " most recent first.
    Absent components are skipped along with their separator.

    Raises ValueError when every component is empty.
    """
    cfg = cfg or LinearizationConfig()
    context_text = CONTEXT_JOIN.join(context)
    if cfg.ordering is OrderingPolicy.SR:
        components = [knowledge_text, request or "", context_text]
    else:  # RS_C and RCS share one surface form
        components = [request or "", context_text, knowledge_text]
    present = [c for c in components if c]
    if not present:
        raise ValueError("cannot assemble an input from empty components")
    return COMPONENT_JOIN.join(present)


_PLACEHOLDER = re.compile(r"\{([^{}]*)\}")


def render_row_template(template: str, table: Table, row_index: int) -> str:
    """Substitute each ``{header}`` placeholder with the row's cell value.

    Raises TemplateError listing placeholders that name no header cell.
    """
    row = table.rows[row_index]
    by_header = dict(zip(table.header, row))
    unresolved = [
        name for name in dict.fromkeys(_PLACEHOLDER.findall(template)) if name not in by_header
    ]
    if unresolved:
        raise TemplateError(unresolved)
    return _PLACEHOLDER.sub(lambda m: by_header[m.group(1)], template)


def render_schema_description(schema: DatabaseSchema) -> str:
    """Describe a database schema in template sentences joined by spaces."""
    tables = ", ".join(t.name for t in schema.tables)
    sentences = [f"{schema.db_id} contains tables such as {tables}."]
    for t in schema.tables:
        cols = ", ".join(t.columns)
        sentences.append(f"Table {t.name} has column such as {cols}.")
    for _, column in schema.primary_keys:
        sentences.append(f"{column} is the primary key.")
    for (t1, c1), (t2, c2) in schema.foreign_keys:
        sentences.append(f"The {c1} of {t1} is the foreign key of {c2} of {t2}.")
    return " ".join(sentences)
