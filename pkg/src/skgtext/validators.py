"""Well-formedness checkers for the three formal output languages.

These power the invalid vs valid-but-wrong error taxonomy: a wrong
prediction either fails its language's grammar (invalid) or parses but
mismatches the gold (valid but wrong). The SQL check is a syntactic parse
under a SELECT-statement dialect, documented below; execution-based checking
is out of scope, and the report's language tag lets callers substitute an
execution-backed checker.

The checkers are total: any input string produces a report, never an
exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable

SQL_GRAMMAR_VERSION = "select-dialect-1"


class FormalLanguage(str, Enum):
    SQL = "sql"
    SEXPR = "sexpr"
    TOP = "top"


class ErrorKind(str, Enum):
    LEX_ERROR = "lex_error"
    UNBALANCED_DELIMITER = "unbalanced_delimiter"
    GRAMMAR_VIOLATION = "grammar_violation"
    EMPTY_INPUT = "empty_input"


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of a well-formedness check.

    ``position`` is a character offset into the checked text; ``valid=True``
    implies the error fields are absent.
    """

    valid: bool
    language: FormalLanguage
    error_kind: ErrorKind | None = None
    position: int | None = None
    message: str | None = None

    def __post_init__(self) -> None:
        if self.valid and (self.error_kind is not None or self.position is not None):
            raise ValueError("a valid report cannot carry error fields")


class ErrorClass(str, Enum):
    CORRECT = "correct"
    INVALID_OUTPUT = "invalid_output"
    VALID_BUT_WRONG = "valid_but_wrong"


# ---------------------------------------------------------------------------
# SQL


class _SqlFailure(Exception):
    def __init__(self, kind: ErrorKind, position: int, message: str):
        self.kind = kind
        self.position = position
        self.message = message
        super().__init__(message)


_SQL_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?|\.\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<op><>|!=|<=|>=|==|[=<>*+\-/(),.;])
""",
    re.VERBOSE,
)

_SQL_KEYWORDS = {
    "select", "distinct", "from", "as", "join", "inner", "left", "right",
    "outer", "on", "where", "and", "or", "not", "in", "like", "between",
    "group", "by", "having", "order", "asc", "desc", "limit", "union",
    "intersect", "except", "all",
}
_AGGREGATES = {"count", "sum", "avg", "min", "max"}
_COMPARISONS = {"=", "==", "!=", "<>", "<", ">", "<=", ">="}


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "name" | "keyword" | "string" | "op" | "eof"
    value: str
    position: int


def _tokenize_sql(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _SQL_TOKEN.match(text, pos)
        if m is None:
            if text[pos] in "'\"":
                raise _SqlFailure(ErrorKind.LEX_ERROR, pos, "unterminated string literal")
            raise _SqlFailure(ErrorKind.LEX_ERROR, pos, f"unexpected character {text[pos]!r}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        value = m.group()
        kind = m.lastgroup or "op"
        if kind == "name" and value.lower() in _SQL_KEYWORDS:
            kind = "keyword"
            value = value.lower()
        tokens.append(_Token(kind, value, m.start()))
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _SqlParser:
    """Recursive descent over the SELECT dialect.

    Covered: select list with aggregates (count/sum/avg/min/max, distinct,
    *), FROM with comma cross joins and AS aliases, JOIN ... ON, WHERE with
    and/or/not, comparisons and (not) in/like/between, nested subqueries,
    GROUP BY, HAVING, ORDER BY asc/desc, LIMIT, and the set operators
    union/intersect/except. Keywords are case-insensitive; string literals
    take single or double quotes.
    """

    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    # token helpers -------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "keyword" and tok.value in words

    def accept_keyword(self, *words: str) -> bool:
        if self.at_keyword(*words):
            self.advance()
            return True
        return False

    def expect_keyword(self, word: str) -> None:
        if not self.accept_keyword(word):
            self.fail(f"expected {word.upper()}")

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.value in ops

    def accept_op(self, *ops: str) -> bool:
        if self.at_op(*ops):
            self.advance()
            return True
        return False

    def expect_op(self, op: str) -> None:
        if not self.accept_op(op):
            if op == ")":
                tok = self.peek()
                raise _SqlFailure(
                    ErrorKind.UNBALANCED_DELIMITER, tok.position, "unclosed parenthesis"
                )
            self.fail(f"expected {op!r}")

    def fail(self, message: str) -> None:
        tok = self.peek()
        raise _SqlFailure(ErrorKind.GRAMMAR_VIOLATION, tok.position, message)

    # grammar --------------------------------------------------------

    def parse(self) -> None:
        self.query()
        self.accept_op(";")
        if self.peek().kind != "eof":
            self.fail("unexpected trailing input")

    def query(self) -> None:
        self.select_statement()
        while self.accept_keyword("union", "intersect", "except"):
            self.accept_keyword("all")
            self.select_statement()

    def select_statement(self) -> None:
        self.expect_keyword("select")
        self.accept_keyword("distinct")
        self.select_item()
        while self.accept_op(","):
            self.select_item()
        self.expect_keyword("from")
        self.table_reference()
        while True:
            if self.accept_op(","):
                self.table_reference()
            elif self.at_keyword("join", "inner", "left", "right"):
                self.join_clause()
            else:
                break
        if self.accept_keyword("where"):
            self.expression()
        if self.accept_keyword("group"):
            self.expect_keyword("by")
            self.value_expression()
            while self.accept_op(","):
                self.value_expression()
        if self.accept_keyword("having"):
            self.expression()
        if self.accept_keyword("order"):
            self.expect_keyword("by")
            self.ordering_term()
            while self.accept_op(","):
                self.ordering_term()
        if self.accept_keyword("limit"):
            if self.peek().kind != "number":
                self.fail("expected a number after LIMIT")
            self.advance()

    def ordering_term(self) -> None:
        self.value_expression()
        self.accept_keyword("asc", "desc")

    def select_item(self) -> None:
        if self.accept_op("*"):
            return
        self.value_expression()
        if self.accept_keyword("as"):
            self.expect_name("alias")

    def join_clause(self) -> None:
        if self.accept_keyword("inner"):
            self.expect_keyword("join")
        elif self.accept_keyword("left", "right"):
            self.accept_keyword("outer")
            self.expect_keyword("join")
        else:
            self.expect_keyword("join")
        self.table_reference()
        self.expect_keyword("on")
        self.expression()

    def table_reference(self) -> None:
        if self.accept_op("("):
            self.query()
            self.expect_op(")")
        else:
            self.expect_name("table name")
        if self.accept_keyword("as"):
            self.expect_name("alias")

    def expect_name(self, what: str) -> None:
        if self.peek().kind != "name":
            self.fail(f"expected {what}")
        self.advance()

    def expression(self) -> None:
        self.and_expression()
        while self.accept_keyword("or"):
            self.and_expression()

    def and_expression(self) -> None:
        self.not_expression()
        while self.accept_keyword("and"):
            self.not_expression()

    def not_expression(self) -> None:
        if self.accept_keyword("not"):
            self.not_expression()
            return
        self.predicate()

    def predicate(self) -> None:
        self.value_expression()
        tok = self.peek()
        if tok.kind == "op" and tok.value in _COMPARISONS:
            self.advance()
            self.value_expression()
            return
        negated = self.accept_keyword("not")
        if self.accept_keyword("in"):
            self.expect_op("(")
            if self.at_keyword("select"):
                self.query()
            else:
                self.value_expression()
                while self.accept_op(","):
                    self.value_expression()
            self.expect_op(")")
        elif self.accept_keyword("like"):
            self.value_expression()
        elif self.accept_keyword("between"):
            self.value_expression()
            self.expect_keyword("and")
            self.value_expression()
        elif negated:
            self.fail("expected IN, LIKE, or BETWEEN after NOT")

    def value_expression(self) -> None:
        self.term()
        while self.at_op("+", "-", "*", "/"):
            # "*" is a wildcard only in the select list / aggregates, which
            # consume it before reaching here; as an infix token it is
            # multiplication.
            self.advance()
            self.term()

    def term(self) -> None:
        if self.accept_op("-"):
            self.term()
            return
        tok = self.peek()
        if tok.kind in ("number", "string"):
            self.advance()
            return
        if tok.kind == "name":
            self.advance()
            if tok.value.lower() in _AGGREGATES and self.at_op("("):
                self.advance()
                self.accept_keyword("distinct")
                if not self.accept_op("*"):
                    self.value_expression()
                self.expect_op(")")
                return
            if self.accept_op("."):
                if not self.accept_op("*"):
                    self.expect_name("column name")
            return
        if self.accept_op("("):
            if self.at_keyword("select"):
                self.query()
            else:
                self.expression()
            self.expect_op(")")
            return
        self.fail("expected a value expression")


def check_sql_validity(text: str) -> ValidityReport:
    """Syntactic validity of a SQL string under the SELECT dialect."""
    if not text.strip():
        return ValidityReport(
            False, FormalLanguage.SQL, ErrorKind.EMPTY_INPUT, 0, "empty input"
        )
    try:
        _SqlParser(_tokenize_sql(text)).parse()
    except _SqlFailure as e:
        return ValidityReport(False, FormalLanguage.SQL, e.kind, e.position, e.message)
    return ValidityReport(True, FormalLanguage.SQL)


# ---------------------------------------------------------------------------
# S-expressions


_SEXPR_TOKEN = re.compile(r"[()]|[^\s()]+")


def check_sexpr_validity(text: str) -> ValidityReport:
    """Valid iff parentheses balance, every list is non-empty with an atom
    head, and exactly one expression spans the input."""
    lang = FormalLanguage.SEXPR

    def bad(kind: ErrorKind, pos: int, msg: str) -> ValidityReport:
        return ValidityReport(False, lang, kind, pos, msg)

    if not text.strip():
        return bad(ErrorKind.EMPTY_INPUT, 0, "empty input")
    depth = 0
    complete = 0  # top-level expressions finished so far
    expect_head = False
    for m in _SEXPR_TOKEN.finditer(text):
        tok, pos = m.group(), m.start()
        if depth == 0 and complete:
            return bad(ErrorKind.GRAMMAR_VIOLATION, pos, "trailing content after expression")
        if tok == "(":
            if expect_head:
                return bad(ErrorKind.GRAMMAR_VIOLATION, pos, "list head must be a bare symbol")
            depth += 1
            expect_head = True
        elif tok == ")":
            if depth == 0:
                return bad(ErrorKind.UNBALANCED_DELIMITER, pos, "unmatched closing parenthesis")
            if expect_head:
                return bad(ErrorKind.GRAMMAR_VIOLATION, pos, "empty list")
            depth -= 1
            if depth == 0:
                complete += 1
        else:
            if depth == 0:
                complete += 1  # a bare atom is a complete expression
            expect_head = False
    if depth > 0:
        return bad(ErrorKind.UNBALANCED_DELIMITER, len(text), "unclosed parenthesis")
    return ValidityReport(True, lang)


# ---------------------------------------------------------------------------
# TOP representation (bracketed intent/slot trees)


_TOP_OPEN = re.compile(r"\[(IN|SL):([A-Z][A-Z0-9_]*)$")
_TOP_TOKEN = re.compile(r"\S+")


def check_top_validity(text: str) -> ValidityReport:
    """Valid iff brackets balance, every bracket opens an IN:/SL: node with
    an uppercase label, the root is a single IN node, and SL nodes never
    directly nest SL children."""
    lang = FormalLanguage.TOP

    def bad(kind: ErrorKind, pos: int, msg: str) -> ValidityReport:
        return ValidityReport(False, lang, kind, pos, msg)

    if not text.strip():
        return bad(ErrorKind.EMPTY_INPUT, 0, "empty input")
    stack: list[str] = []  # node kinds, "IN" / "SL"
    complete = 0
    for m in _TOP_TOKEN.finditer(text):
        tok, pos = m.group(), m.start()
        if not stack and complete:
            return bad(ErrorKind.GRAMMAR_VIOLATION, pos, "trailing content after root node")
        if tok == "]":
            if not stack:
                return bad(ErrorKind.UNBALANCED_DELIMITER, pos, "unmatched closing bracket")
            stack.pop()
            if not stack:
                complete += 1
        elif tok.startswith("["):
            node = _TOP_OPEN.match(tok)
            if node is None:
                return bad(ErrorKind.GRAMMAR_VIOLATION, pos, f"malformed node opener {tok!r}")
            kind = node.group(1)
            if not stack:
                if kind != "IN":
                    return bad(ErrorKind.GRAMMAR_VIOLATION, pos, "root node must be an intent")
            elif kind == "SL" and stack[-1] == "SL":
                return bad(
                    ErrorKind.GRAMMAR_VIOLATION, pos, "slot nodes cannot directly nest slots"
                )
            stack.append(kind)
        else:
            if not stack:
                return bad(ErrorKind.GRAMMAR_VIOLATION, pos, "token outside any node")
    if stack:
        return bad(ErrorKind.UNBALANCED_DELIMITER, len(text), "unclosed bracket")
    if complete == 0:
        return bad(ErrorKind.GRAMMAR_VIOLATION, len(text), "no intent node found")
    return ValidityReport(True, lang)


# ---------------------------------------------------------------------------


_CHECKERS = {
    FormalLanguage.SQL: check_sql_validity,
    FormalLanguage.SEXPR: check_sexpr_validity,
    FormalLanguage.TOP: check_top_validity,
}


def check_validity(text: str, language: FormalLanguage | str) -> ValidityReport:
    return _CHECKERS[FormalLanguage(language)](text)


def classify_error(
    prediction: str,
    gold: str,
    language: FormalLanguage | str,
    comparator: Callable[[str, str], bool],
) -> ErrorClass:
    """Classify a prediction as correct, invalid, or valid-but-wrong.

    ``comparator`` is the task's equivalence predicate (typically normalized
    exact match). Raises ValueError when the gold itself fails the validity
    check, which indicates a corrupt gold, not a model error.
    """
    language = FormalLanguage(language)
    gold_report = check_validity(gold, language)
    if not gold_report.valid:
        raise ValueError(
            f"gold is not valid {language.value}: {gold_report.message}"
            f" at {gold_report.position}"
        )
    if comparator(prediction, gold):
        return ErrorClass.CORRECT
    if not check_validity(prediction, language).valid:
        return ErrorClass.INVALID_OUTPUT
    return ErrorClass.VALID_BUT_WRONG
