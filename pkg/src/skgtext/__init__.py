"""skgtext: flatten structured knowledge into text sequences and evaluate
predictions against flat targets."""

__version__ = "0.1.0"

from .knowledge import (
    DatabaseSchema,
    DialogueState,
    FormalExpression,
    HighlightedTable,
    Ontology,
    OutputKind,
    Record,
    SchemaTable,
    StructuredKnowledge,
    Table,
    Triple,
    TripleSet,
    read_records,
    record_from_json,
    record_to_json,
    validate_record,
    write_records,
)
from .linearize import (
    LinearizationConfig,
    OrderingPolicy,
    assemble_input,
    linearize_knowledge,
    linearize_ontology,
    linearize_schema,
    linearize_table,
    linearize_triples,
    reverse_knowledge,
)
from .validators import (
    ErrorClass,
    ErrorKind,
    FormalLanguage,
    ValidityReport,
    check_sexpr_validity,
    check_sql_validity,
    check_top_validity,
    check_validity,
    classify_error,
)

__all__ = [name for name in dir() if not name.startswith("_")]
