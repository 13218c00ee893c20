"""Evaluation measures and corpus-level aggregation.

Per-record scoring is pure; `evaluate_corpus` dispatches on each record's
output kind, classifies formal predictions into the correct / invalid /
valid-but-wrong taxonomy, and pools the aggregates. All scalar metrics are
bounded: accuracies in {0, 1}, F1 in [0, 1], BLEU in [0, 100].
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .codec import parse_answers, parse_boolean, parse_dialogue_state
from .knowledge import Ontology, OutputKind, Record
from .validators import ErrorClass, check_sql_validity, classify_error

BLEC_RULES_VERSION = "1"
BLEU_VERSION = "corpus-bleu4+case.lc+tok.13a+smooth.exp"


@dataclass(frozen=True)
class NormalizationConfig:
    """String normalisation applied before comparison.

    Lowercasing defaults on for answer sets, booleans, and dialogue states
    and off for formal languages and free text; see KIND_NORMALIZATION.
    """

    trim: bool = True
    collapse_internal_whitespace: bool = True
    lowercase: bool = True


_WHITESPACE = re.compile(r"\s+")


def normalize(text: str, cfg: NormalizationConfig) -> str:
    if cfg.trim:
        text = text.strip()
    if cfg.collapse_internal_whitespace:
        text = _WHITESPACE.sub(" ", text)
    if cfg.lowercase:
        text = text.lower()
    return text


KIND_NORMALIZATION: Mapping[OutputKind, NormalizationConfig] = {
    OutputKind.ANSWER_SET: NormalizationConfig(lowercase=True),
    OutputKind.BOOLEAN: NormalizationConfig(lowercase=True),
    OutputKind.DIALOGUE_STATE: NormalizationConfig(lowercase=True),
    OutputKind.FREE_TEXT: NormalizationConfig(lowercase=False),
    OutputKind.FORMAL_SQL: NormalizationConfig(lowercase=False),
    OutputKind.FORMAL_SEXPR: NormalizationConfig(lowercase=False),
    OutputKind.FORMAL_TOP: NormalizationConfig(lowercase=False),
}


def exact_match(pred: str, gold: str, norm: NormalizationConfig) -> int:
    return int(normalize(pred, norm) == normalize(gold, norm))


def set_match(pred: str, gold: str, norm: NormalizationConfig) -> int:
    """1 iff the parsed answer multisets are equal after normalisation
    (order-insensitive)."""
    p = Counter(normalize(a, norm) for a in parse_answers(pred))
    g = Counter(normalize(a, norm) for a in parse_answers(gold))
    return int(p == g)


def joint_accuracy(
    pred_state, gold_state, norm: NormalizationConfig | None = None
) -> int:
    """1 iff every slot's value matches after normalisation.

    Both states must be drawn over the same ontology (same slot names in the
    same order); a mismatch raises ValueError.
    """
    norm = norm or KIND_NORMALIZATION[OutputKind.DIALOGUE_STATE]
    pred_slots = tuple(s for s, _ in pred_state.pairs)
    gold_slots = tuple(s for s, _ in gold_state.pairs)
    if pred_slots != gold_slots:
        raise ValueError("states are drawn over different ontologies")
    return int(
        all(
            normalize(pv, norm) == normalize(gv, norm)
            for (_, pv), (_, gv) in zip(pred_state.pairs, gold_state.pairs)
        )
    )


def set_f1(pred: Iterable[str], gold: Iterable[str]) -> tuple[float, float, float]:
    """Precision, recall, F1 over the multiset intersection of two answer
    sets. Two empty sets count as a perfect match."""
    p, g = Counter(pred), Counter(gold)
    tp = sum((p & g).values())
    n_pred, n_gold = sum(p.values()), sum(g.values())
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


class MicroF1:
    """Pools true/false positives and negatives across records.

    The micro aggregate is computed from pooled counts, not by averaging
    per-record F1 values.
    """

    def __init__(self) -> None:
        self.tp = 0
        self.fp = 0
        self.fn = 0

    def update(self, pred: Iterable[str], gold: Iterable[str]) -> None:
        p, g = Counter(pred), Counter(gold)
        tp = sum((p & g).values())
        self.tp += tp
        self.fp += sum(p.values()) - tp
        self.fn += sum(g.values()) - tp

    def scores(self) -> tuple[float, float, float]:
        precision = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        recall = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return precision, recall, f1


# ---------------------------------------------------------------------------
# BLEC: keyword coverage of a formal expression in its NL rendering


_NUMBER_WORDS = {
    "0": "zero", "1": "one", "2": "two", "3": "three", "4": "four",
    "5": "five", "6": "six", "7": "seven", "8": "eight", "9": "nine",
    "10": "ten", "11": "eleven", "12": "twelve", "13": "thirteen",
    "14": "fourteen", "15": "fifteen", "16": "sixteen", "17": "seventeen",
    "18": "eighteen", "19": "nineteen", "20": "twenty",
}

SUPERLATIVE_CUES = frozenset(
    {
        "most", "least", "highest", "lowest", "largest", "smallest",
        "biggest", "best", "worst", "top", "first", "last", "maximum",
        "minimum", "max", "min", "latest", "earliest", "oldest", "newest",
        "greatest", "fewest", "longest", "shortest", "tallest",
    }
)
COUNT_CUES = ("how many", "number", "count", "total", "amount")

_QUOTED = re.compile(r"'([^']*)'|\"([^\"]*)\"")
_DIGIT_RUN = re.compile(r"\d+(?:\.\d+)?")
_WORD = re.compile(r"\w+")
_COUNT_CALL = re.compile(r"\bcount\s*\(", re.IGNORECASE)
_ORDER_LIMIT_1 = re.compile(r"\border\s+by\b.*\blimit\s+1\b", re.IGNORECASE | re.DOTALL)
_LIMIT_CLAUSE = re.compile(r"\blimit\s+\d+\b", re.IGNORECASE)
_LOGIC_VERDICT = re.compile(r"\s*=\s*(true|false)\s*$", re.IGNORECASE)


def _balanced_braces(text: str) -> bool:
    depth = 0
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def _number_covered(number: str, tokens: set[str]) -> bool:
    if number in tokens:
        return True
    word = _NUMBER_WORDS.get(number)
    return word is not None and word in tokens


def blec(formal: str, language: str, nl_pred: str) -> int:
    """Binary keyword coverage of a formal expression in natural language.

    Keywords (rule set version BLEC_RULES_VERSION):
      * numeric literals, matched as tokens against digits or their English
        number words through twenty;
      * quoted string literals, matched as case-insensitive substrings;
      * for SQL only, cue-set checks: ``count(`` requires a counting cue
        ("how many", "number", ...) and ``order by ... limit 1`` requires a
        superlative cue ("highest", "most", ...).

    ``language`` is "sql" or "logic" (brace-structured logic expressions; a
    trailing "= true"/"= false" verdict is ignored). Raises ValueError when
    the formal input fails its validity check.
    """
    pred_lower = nl_pred.lower()
    pred_tokens = set(_WORD.findall(pred_lower))
    if language == "sql":
        report = check_sql_validity(formal)
        if not report.valid:
            raise ValueError(f"invalid SQL input: {report.message} at {report.position}")
        body = formal
    elif language == "logic":
        body = _LOGIC_VERDICT.sub("", formal)
        if not body.strip() or not _balanced_braces(body):
            raise ValueError("invalid logic expression: unbalanced braces or empty")
    else:
        raise ValueError(f"unknown blec language {language!r}")

    quoted = [a or b for a, b in _QUOTED.findall(body)]
    without_strings = _QUOTED.sub(" ", body)
    number_source = without_strings
    if language == "sql":
        # LIMIT counts are structural (the order-by-limit-1 cue covers them),
        # not content literals the text must restate.
        number_source = _LIMIT_CLAUSE.sub(" ", number_source)
    numbers = _DIGIT_RUN.findall(number_source)

    for literal in quoted:
        if literal.lower() not in pred_lower:
            return 0
    for number in numbers:
        if not _number_covered(number, pred_tokens):
            return 0
    if language == "sql":
        if _COUNT_CALL.search(without_strings) and not any(
            cue in pred_lower for cue in COUNT_CUES
        ):
            return 0
        if _ORDER_LIMIT_1.search(without_strings) and not (
            pred_tokens & SUPERLATIVE_CUES
        ):
            return 0
    return 1


# ---------------------------------------------------------------------------
# Corpus BLEU


def tokenize_13a(line: str) -> list[str]:
    """Minimal WMT-style tokenisation: unescape entities, split out
    punctuation (periods and commas only when not digit-adjacent), collapse
    whitespace."""
    norm = line
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")
    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    return norm.split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(predictions: Sequence[str], references: Sequence[str]) -> float:
    """Corpus-level BLEU-4 in [0, 100].

    Lowercased, single reference, 13a-style tokenisation, exponential
    smoothing of zero n-gram matches, and the standard corpus brevity
    penalty. When the corpus has no n-grams at some order (everything
    shorter than 4 tokens) the score is 0, matching the strict corpus
    formulation. Raises ValueError on length mismatch or empty input.
    """
    if not predictions or not references:
        raise ValueError("prediction and reference corpora must be non-empty")
    if len(predictions) != len(references):
        raise ValueError(
            f"corpus length mismatch: {len(predictions)} predictions"
            f" vs {len(references)} references"
        )
    correct = [0, 0, 0, 0]
    total = [0, 0, 0, 0]
    sys_len = 0
    ref_len = 0
    for pred, ref in zip(predictions, references):
        pred_tokens = tokenize_13a(pred.lower())
        ref_tokens = tokenize_13a(ref.lower())
        sys_len += len(pred_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, 5):
            pred_counts = _ngrams(pred_tokens, n)
            ref_counts = _ngrams(ref_tokens, n)
            total[n - 1] += sum(pred_counts.values())
            correct[n - 1] += sum((pred_counts & ref_counts).values())
    precisions = []
    smooth = 1.0
    for n in range(4):
        if total[n] == 0:
            return 0.0
        if correct[n] == 0:
            smooth *= 2.0
            precisions.append(1.0 / (smooth * total[n]))
        else:
            precisions.append(correct[n] / total[n])
    if sys_len == 0:
        return 0.0
    bp = 1.0 if sys_len >= ref_len else math.exp(1.0 - ref_len / sys_len)
    return 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)


# ---------------------------------------------------------------------------
# Corpus evaluation


# Tasks whose free-text outputs are additionally scored with keyword
# coverage against the formal expression carried in the request field.
DEFAULT_BLEC_TASKS: Mapping[str, str] = {"sql2text": "sql", "logic2text": "logic"}


@dataclass
class EvalReport:
    """Per-record scores plus corpus aggregates and taxonomy counts.

    The taxonomy counts partition the formal-output records:
    correct + invalid_output + valid_but_wrong == num_formal.
    """

    num_records: int
    per_record: dict[str, dict[str, Any]]
    mean_accuracy: float
    corpus_bleu: float | None
    micro_f1: dict[str, float] | None
    joint_accuracy: float | None
    mean_blec: float | None
    taxonomy: dict[str, int]
    num_formal: int

    def to_json(self) -> dict[str, Any]:
        return {
            "num_records": self.num_records,
            "aggregates": {
                "mean_accuracy": self.mean_accuracy,
                "corpus_bleu": self.corpus_bleu,
                "micro_f1": self.micro_f1,
                "joint_accuracy": self.joint_accuracy,
                "mean_blec": self.mean_blec,
            },
            "error_taxonomy": dict(self.taxonomy, num_formal=self.num_formal),
            "per_record": self.per_record,
        }


def _record_ontology(record: Record) -> Ontology:
    if not isinstance(record.knowledge, Ontology):
        raise ValueError(
            f"record {record.id!r} has dialogue-state output but no ontology knowledge"
        )
    return record.knowledge


def evaluate_corpus(
    records: Sequence[Record],
    predictions: Mapping[str, str] | Iterable[tuple[str, str]],
    norm: NormalizationConfig | None = None,
    blec_tasks: Mapping[str, str] = DEFAULT_BLEC_TASKS,
    task_norm: Mapping[str, NormalizationConfig] | None = None,
) -> EvalReport:
    """Score a prediction set against its records.

    ``predictions`` maps record id to prediction text; duplicate or missing
    ids raise ValueError. ``norm`` overrides the per-kind normalisation
    defaults for every record; ``task_norm`` overrides them per task tag.
    """
    pred_by_id = _collect_predictions(predictions)
    missing = [r.id for r in records if r.id not in pred_by_id]
    if missing:
        raise ValueError(f"missing predictions for record id(s): {', '.join(missing)}")
    seen: set[str] = set()
    for r in records:
        if r.id in seen:
            raise ValueError(f"duplicate record id {r.id!r}")
        seen.add(r.id)

    per_record: dict[str, dict[str, Any]] = {}
    accuracies: list[int] = []
    taxonomy = Counter({cls.value: 0 for cls in ErrorClass})
    num_formal = 0
    free_preds: list[str] = []
    free_refs: list[str] = []
    micro = MicroF1()
    any_answer_set = False
    joint_scores: list[int] = []
    blec_scores: list[int] = []

    for record in records:
        pred = pred_by_id[record.id]
        kind = record.output_kind
        cfg = (task_norm or {}).get(record.task) or norm or KIND_NORMALIZATION[kind]
        scores: dict[str, Any] = {"task": record.task, "output_kind": kind.value}
        em = exact_match(pred, record.target, cfg)
        scores["exact_match"] = em
        accuracy = em

        if kind is OutputKind.ANSWER_SET:
            any_answer_set = True
            accuracy = set_match(pred, record.target, cfg)
            scores["set_match"] = accuracy
            pred_items = [normalize(a, cfg) for a in parse_answers(pred)]
            gold_items = [normalize(a, cfg) for a in parse_answers(record.target)]
            p, r, f1 = set_f1(pred_items, gold_items)
            micro.update(pred_items, gold_items)
            scores["f1"] = f1
        elif kind is OutputKind.BOOLEAN:
            pred_bool = parse_boolean(normalize(pred, cfg))
            gold_bool = parse_boolean(normalize(record.target, cfg))
            accuracy = int(pred_bool is not None and pred_bool == gold_bool)
            scores["boolean_accuracy"] = accuracy
        elif kind is OutputKind.DIALOGUE_STATE:
            ontology = _record_ontology(record)
            pred_state, residue = parse_dialogue_state(ontology, pred)
            gold_state, _ = parse_dialogue_state(ontology, record.target)
            accuracy = joint_accuracy(pred_state, gold_state, cfg)
            scores["joint_accuracy"] = accuracy
            if residue:
                scores["parse_residue"] = residue
            joint_scores.append(accuracy)
        elif kind.is_formal:
            num_formal += 1
            comparator = lambda a, b, _cfg=cfg: bool(exact_match(a, b, _cfg))
            error_class = classify_error(
                pred, record.target, kind.formal_language, comparator
            )
            taxonomy[error_class.value] += 1
            scores["error_class"] = error_class.value
            accuracy = em
        elif kind is OutputKind.FREE_TEXT:
            free_preds.append(pred)
            free_refs.append(record.target)
            language = blec_tasks.get(record.task)
            if language is not None and record.request is not None:
                score = blec(record.request, language, pred)
                scores["blec"] = score
                blec_scores.append(score)

        scores["accuracy"] = accuracy
        accuracies.append(accuracy)
        per_record[record.id] = scores

    p, r, f1 = micro.scores()
    return EvalReport(
        num_records=len(records),
        per_record=per_record,
        mean_accuracy=sum(accuracies) / len(accuracies) if accuracies else 0.0,
        corpus_bleu=bleu(free_preds, free_refs) if free_preds else None,
        micro_f1={"precision": p, "recall": r, "f1": f1} if any_answer_set else None,
        joint_accuracy=sum(joint_scores) / len(joint_scores) if joint_scores else None,
        mean_blec=sum(blec_scores) / len(blec_scores) if blec_scores else None,
        taxonomy=dict(taxonomy),
        num_formal=num_formal,
    )


def _collect_predictions(
    predictions: Mapping[str, str] | Iterable[tuple[str, str]],
) -> dict[str, str]:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    out: dict[str, str] = {}
    for rid, text in predictions:
        if rid in out:
            raise ValueError(f"duplicate prediction id {rid!r}")
        out[rid] = text
    return out
