"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with ``pytest tests/test_acceptance.py -v -s``.

Tolerances are pinned here, not configurable: string fidelity is zero
tolerance, analytic weights to 1e-9, BLEU to 1e-6 against the brute-force
oracle, empirical schedule frequencies to +/-0.01.
"""

import json
import math
import random
import string
import time
from collections import Counter

import pytest

from skgtext.codec import (
    parse_answers,
    parse_boolean,
    parse_dialogue_state,
    serialize_answers,
    serialize_boolean,
    serialize_dialogue_state,
)
from skgtext.corpus import (
    TokenBudget,
    TruncationError,
    count_tokens,
    length_histogram,
    removable_unit_count,
    truncate_knowledge,
)
from skgtext.fewshot import (
    MixtureSpec,
    PromptBudgetError,
    build_prompt,
    sample_schedule,
    select_similar,
    temperature_weights,
)
from skgtext.knowledge import (
    DatabaseSchema,
    DialogueState,
    FormalExpression,
    HighlightedTable,
    Ontology,
    OutputKind,
    Record,
    SchemaTable,
    Table,
    Triple,
    TripleSet,
)
from skgtext.linearize import linearize_knowledge, reverse_knowledge
from skgtext.metrics import KIND_NORMALIZATION, bleu, exact_match
from skgtext.validators import ErrorClass, check_validity, classify_error

from test_corpus import brute_force_max_units
from test_fewshot import brute_force_rank, _corpus, _rec
from test_metrics import oracle_bleu


def report(name: str, detail: str) -> None:
    print(f"PASS {name}: {detail}")


# --- 1. fixture fidelity ------------------------------------------------------


def test_criterion_1_fixture_fidelity(gallery_records, gallery_expected, tmp_path):
    from pathlib import Path

    from skgtext.cli import main

    start = time.perf_counter()
    assert len(gallery_records) == 21
    exact = 0
    for record in gallery_records:
        want = gallery_expected[record.id]
        assert linearize_knowledge(record.knowledge) == want["structured"], record.id
        assert record.target == want["output"], record.id
        exact += 1

    # the same strings must survive the linearize command end to end
    records_path = Path(__file__).parent / "fixtures" / "gallery_records.jsonl"
    out = tmp_path / "pairs.jsonl"
    assert main(["linearize", str(records_path), "--out", str(out)]) == 0
    pairs = {row["id"]: row for row in map(json.loads, out.read_text().splitlines())}
    assert len(pairs) == 21
    for record in gallery_records:
        want = gallery_expected[record.id]
        pair = pairs[record.id]
        assert pair["target_text"] == want["output"], record.id
        if record.knowledge is not None:
            # default ordering places the knowledge last in the input sequence
            assert pair["input_text"].endswith(want["structured"]), record.id

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report("criterion-1", f"fixture fidelity {exact}/21 bit-exact (module + CLI) in {elapsed:.3f}s")


# --- 2. validity partition ----------------------------------------------------


def _golds(gallery_by_id):
    return [
        ("sql", gallery_by_id["spider-0"].target),
        ("sql", gallery_by_id["sparc-0"].target),
        ("sql", gallery_by_id["cosql-0"].target),
        ("sql", gallery_by_id["sql2text-0"].request),
        ("sexpr", gallery_by_id["grailqa-0"].target),
        ("sexpr", gallery_by_id["webqsp-0"].target),
        ("top", gallery_by_id["mtop-0"].target),
    ]


def _valid_mutant(language: str, gold: str) -> str:
    if language == "sql":
        return f"select * from ( {gold} ) as mutant_sub"
    if language == "sexpr":
        return f"(AND mutant.class {gold})"
    return gold.replace("[IN:", "[IN:MUTANT_", 1)


def _mangled(language: str, gold: str) -> str:
    if language == "sql":
        return "select from " + gold
    if language == "sexpr":
        return "(" + gold
    return gold.rstrip()[:-1]  # drop the closing bracket


def test_criterion_2_validity_partition(gallery_by_id):
    start = time.perf_counter()
    golds = _golds(gallery_by_id)
    for language, gold in golds:
        assert check_validity(gold, language).valid, ("false invalid on gold", gold)

    items = []
    for i in range(50):
        language, gold = golds[i % len(golds)]
        shape = i % 3
        if shape == 0:
            items.append((language, gold, gold, ErrorClass.CORRECT))
        elif shape == 1:
            items.append((language, gold, _valid_mutant(language, gold), ErrorClass.VALID_BUT_WRONG))
        else:
            items.append((language, gold, _mangled(language, gold), ErrorClass.INVALID_OUTPUT))

    counts = Counter()
    for language, gold, pred, expected in items:
        norm = KIND_NORMALIZATION[OutputKind.FORMAL_SQL]
        got = classify_error(pred, gold, language, lambda a, b: bool(exact_match(a, b, norm)))
        assert got is expected, (language, pred[:40], got, expected)
        counts[got] += 1

    total = sum(counts.values())
    assert total == 50
    assert counts[ErrorClass.CORRECT] + counts[ErrorClass.INVALID_OUTPUT] + counts[
        ErrorClass.VALID_BUT_WRONG
    ] == 50
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report(
        "criterion-2",
        f"50-item partition correct={counts[ErrorClass.CORRECT]}"
        f" invalid={counts[ErrorClass.INVALID_OUTPUT]}"
        f" valid-but-wrong={counts[ErrorClass.VALID_BUT_WRONG]},"
        f" zero false invalids, {elapsed:.3f}s",
    )


# --- 3. codec round trips -------------------------------------------------------


def _random_token(rng, alphabet=string.ascii_lowercase + "0123456789 '-"):
    text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
    return text.replace(", ", " ").strip() or "x"


def test_criterion_3_codec_round_trips():
    start = time.perf_counter()
    rng = random.Random(2024)

    for _ in range(1000):
        answers = [_random_token(rng) for _ in range(rng.randint(1, 6))]
        assert parse_answers(serialize_answers(answers)) == answers

    for i in range(1000):
        value = bool(i % 2)
        assert parse_boolean(serialize_boolean(value)) is value

    for _ in range(1000):
        n_slots = rng.randint(1, 8)
        names = []
        while len(names) < n_slots:
            candidate = "-".join(
                "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(2, 6)))
                for _ in range(rng.randint(1, 2))
            )
            rendered = candidate.replace("-", " ")
            kept = [n.replace("-", " ") for n in names]
            if any(rendered == k or rendered.startswith(k + " ") or k.startswith(rendered + " ") for k in kept):
                continue
            names.append(candidate)
        slots = tuple(
            (name, ("none", _random_token(rng, string.ascii_lowercase + " ")))
            for name in names
        )
        ontology = Ontology(slots)
        state = DialogueState(
            tuple((name, rng.choice(values)) for name, values in slots)
        )
        text = serialize_dialogue_state(ontology, state)
        back, residue = parse_dialogue_state(ontology, text)
        assert residue == []
        assert sorted(back.pairs) == sorted(state.pairs)

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    report("criterion-3", f"3x1000 round trips (answers, booleans, states) in {elapsed:.2f}s")


# --- 4. reversal involution -------------------------------------------------------


def _random_knowledge_any(rng):
    kind = rng.randrange(6)
    width = rng.randint(1, 5)
    if kind == 0 or kind == 1:
        table = Table(
            header=tuple(_random_token(rng) for _ in range(width)),
            rows=tuple(
                tuple(_random_token(rng) for _ in range(width))
                for _ in range(rng.randint(0, 5))
            ),
            page_title=rng.choice([None, "page"]),
        )
        if kind == 0:
            return table
        rows = max(len(table.rows), 1)
        table = table if table.rows else Table(header=table.header, rows=(tuple("x" * width),))
        cells = [(r, c) for r in range(len(table.rows)) for c in range(width)]
        rng.shuffle(cells)
        return HighlightedTable(
            table=table,
            highlighted=tuple(cells[: rng.randint(0, len(cells))]),
            page_title="p",
            section_title="s",
            row_header_columns=(rng.randrange(width),),
        )
    if kind == 2:
        return TripleSet(
            tuple(
                Triple(_random_token(rng), _random_token(rng), _random_token(rng))
                for _ in range(rng.randint(0, 6))
            )
        )
    if kind == 3:
        names = [f"t{i}" for i in range(rng.randint(1, 4))]
        return DatabaseSchema(
            db_id=_random_token(rng),
            tables=tuple(
                SchemaTable(name, tuple(f"c{j}" for j in range(rng.randint(1, 4))))
                for name in names
            ),
        )
    if kind == 4:
        names = [f"s{i}" for i in range(rng.randint(1, 5))]
        return Ontology(
            tuple(
                (name, tuple(_random_token(rng) for _ in range(rng.randint(1, 4))))
                for name in names
            )
        )
    return FormalExpression(_random_token(rng))


def _multiset(knowledge):
    if knowledge is None:
        return []
    if isinstance(knowledge, Table):
        return sorted(list(knowledge.header) + [c for r in knowledge.rows for c in r])
    if isinstance(knowledge, HighlightedTable):
        return _multiset(knowledge.table) + sorted(
            knowledge.table.rows[r][c] for r, c in knowledge.highlighted
        )
    if isinstance(knowledge, TripleSet):
        return sorted(x for t in knowledge.triples for x in (t.subject, t.relation, t.object))
    if isinstance(knowledge, DatabaseSchema):
        return sorted(
            [knowledge.db_id]
            + [x for t in knowledge.tables for x in (t.name, *t.columns)]
        )
    if isinstance(knowledge, Ontology):
        return sorted(x for n, vs in knowledge.slots for x in (n, *vs))
    return [knowledge.text]


def test_criterion_4_reversal_involution():
    rng = random.Random(41)
    failures = 0
    for _ in range(1000):
        knowledge = _random_knowledge_any(rng)
        twice = reverse_knowledge(reverse_knowledge(knowledge))
        if twice != knowledge or _multiset(reverse_knowledge(knowledge)) != _multiset(knowledge):
            failures += 1
    assert failures == 0
    # value-example alignment stays attached to its column under reversal
    schema = DatabaseSchema(
        db_id="db",
        tables=(SchemaTable("t", ("a", "b"), value_examples=(("1",), None)),),
    )
    rev = reverse_knowledge(schema)
    assert rev.tables[0].columns == ("b", "a")
    assert rev.tables[0].value_examples == (None, ("1",))
    assert reverse_knowledge(rev) == schema
    report("criterion-4", "1000 randomized involution + multiset checks, 0 failures")


# --- 5. temperature mixing ----------------------------------------------------------


def test_criterion_5_temperature_mixing():
    weights_t1 = temperature_weights(MixtureSpec((7000, 1000), temperature=1.0))
    assert weights_t1 == [0.875, 0.125]

    weights_t2 = temperature_weights(MixtureSpec((7000, 1000), temperature=2.0))
    total = math.sqrt(7000) + math.sqrt(1000)
    assert abs(weights_t2[0] - math.sqrt(7000) / total) <= 1e-9
    assert abs(weights_t2[1] - math.sqrt(1000) / total) <= 1e-9

    schedule = sample_schedule(weights_t2, 100_000, seed=2024)
    freq = Counter(schedule)
    for task, weight in enumerate(weights_t2):
        assert abs(freq[task] / 100_000 - weight) <= 0.01
    report(
        "criterion-5",
        f"T=1 exact [0.875, 0.125]; T=2 sqrt-oracle <=1e-9;"
        f" 100k-step frequencies within 0.01 of {', '.join(f'{w:.4f}' for w in weights_t2)}",
    )


# --- 6. BLEU sanity --------------------------------------------------------------------


def test_criterion_6_bleu_sanity():
    identical = [
        "the cat sat on the mat .",
        "a longer sentence with several tokens in it",
        "numbers 1 , 2 and 3",
    ]
    assert bleu(identical, identical) == 100.0

    rng = random.Random(606)
    vocab = ["the", "cat", "dog", "sat", "ran", "on", "mat", "a", "fast", "slow", ",", "2006"]
    worst = 0.0
    for _ in range(20):
        n = rng.randint(1, 6)
        preds = [" ".join(rng.choices(vocab, k=rng.randint(1, 12))) for _ in range(n)]
        refs = [" ".join(rng.choices(vocab, k=rng.randint(1, 12))) for _ in range(n)]
        got = bleu(preds, refs)
        want = oracle_bleu(preds, refs)
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-6
    report("criterion-6", f"identity = 100.0 exactly; 20 corpora within 1e-6 of oracle (max dev {worst:.2e})")


# --- 7. truncation contract ---------------------------------------------------------------


def _truncation_case(rng):
    kind = rng.randrange(4)
    if kind == 0:
        width = rng.randint(1, 4)
        return Table(
            header=tuple(f"h{i}" for i in range(width)),
            rows=tuple(
                tuple(f"cell{r}c{c}" for c in range(width)) for r in range(rng.randint(1, 12))
            ),
        )
    if kind == 1:
        return TripleSet(
            tuple(
                Triple(f"subj{i}", f"rel{i}", f"obj{i}")
                for i in range(rng.randint(1, 10))
            )
        )
    if kind == 2:
        return DatabaseSchema(
            db_id="db",
            tables=tuple(
                SchemaTable(f"t{i}", tuple(f"c{j}" for j in range(rng.randint(1, 4))))
                for i in range(rng.randint(1, 6))
            ),
        )
    width = rng.randint(1, 3)
    table = Table(
        header=tuple(f"h{i}" for i in range(width)),
        rows=tuple(tuple(f"v{r}{c}" for c in range(width)) for r in range(rng.randint(1, 5))),
    )
    cells = [(r, c) for r in range(len(table.rows)) for c in range(width)]
    rng.shuffle(cells)
    return HighlightedTable(
        table=table,
        highlighted=tuple(cells[: rng.randint(1, len(cells))]),
        page_title="p",
        section_title="s",
    )


def test_criterion_7_truncation_contract():
    rng = random.Random(77)
    truncated = errors = 0
    for _ in range(500):
        knowledge = _truncation_case(rng)
        full_tokens = count_tokens(linearize_knowledge(knowledge))
        prefix = rng.randint(0, 12)
        budget = TokenBudget(max_tokens=rng.randint(1, full_tokens + prefix + 8))
        want = brute_force_max_units(knowledge, prefix, budget)
        if want is None:
            with pytest.raises(TruncationError):
                truncate_knowledge(knowledge, prefix, budget)
            errors += 1
            continue
        out = truncate_knowledge(knowledge, prefix, budget)
        truncated += 1
        assert prefix + count_tokens(linearize_knowledge(out)) <= budget.max_tokens
        assert removable_unit_count(out) == want, "retained units must be the brute-force maximum"
        if isinstance(out, Table):
            assert out.header == knowledge.header
            assert out.rows == knowledge.rows[: len(out.rows)]
        assert truncate_knowledge(out, prefix, budget) is out, "idempotence"
    assert truncated + errors == 500
    report(
        "criterion-7",
        f"500 randomized budgets: {truncated} truncations maximal+idempotent,"
        f" {errors} irreducible-core errors, 0 contract failures",
    )


# --- 8. few-shot budget guarantee ------------------------------------------------------------


def test_criterion_8_fewshot_budget_and_ranking():
    rng = random.Random(88)
    built = skipped = 0
    for _ in range(200):
        width = rng.randint(1, 3)
        table = Table(
            header=tuple(f"h{i}" for i in range(width)),
            rows=tuple(
                tuple(f"v{r}{c}" for c in range(width)) for r in range(rng.randint(1, 8))
            ),
        )
        examples = [
            _rec(f"e{i}", request=f"question {i} about things", knowledge=table,
                 target=f"answer number {i}")
            for i in range(rng.randint(1, 4))
        ]
        query = _rec("q", request="what is asked here",
                     knowledge=Table(header=("h",), rows=(("v",),)))
        full = build_prompt(examples, query, TokenBudget(max_tokens=100_000))
        budget = TokenBudget(max_tokens=rng.randint(1, count_tokens(full) + 10))
        try:
            prompt = build_prompt(examples, query, budget)
        except PromptBudgetError:
            skipped += 1
            continue
        built += 1
        assert count_tokens(prompt) <= budget.max_tokens, "prompt must fit its budget"
        assert prompt.count("\n\n") >= 1, "at least one example must remain"
    assert built + skipped == 200
    assert built >= 100

    vocab = ["cup", "team", "goal", "stadium", "singer", "year", "final", "win", "loss"]
    for i in range(50):
        texts = [
            " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
            for _ in range(rng.randint(2, 10))
        ]
        query_text = " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
        k = rng.randint(1, len(texts))
        got = [r.id for r in select_similar(_corpus(texts), _rec("q", request=query_text), k)]
        want = [f"r{j}" for j in brute_force_rank(texts, query_text)[:k]]
        assert got == want, f"ranking mismatch on toy corpus {i}"
    report(
        "criterion-8",
        f"200 prompt builds fit ({built} built, {skipped} infeasible);"
        " 50 toy corpora match exhaustive cosine ranking",
    )


# --- 9. length histogram shape -----------------------------------------------------------------


def test_criterion_9_histogram_shape(tmp_path):
    rng = random.Random(9)
    records = []
    for i in range(40):
        triples = TripleSet(
            tuple(
                Triple(f"Entity {i}", rng.choice(["location", "joined", "leader"]), f"Value {j}")
                for j in range(rng.randint(1, 4))
            )
        )
        records.append(
            Record(
                id=f"d{i}", task="dart", request=None, context=(),
                knowledge=triples, target="A short descriptive sentence.",
                output_kind=OutputKind.FREE_TEXT,
            )
        )
    hist = length_histogram(records)
    for stream in ("structured", "text", "combined"):
        assert getattr(hist, stream).percentages == (100.0, 0.0, 0.0), stream
    assert hist.output.percentages == (100.0, 0.0, 0.0)
    for stream in ("structured", "text", "combined", "output"):
        assert sum(getattr(hist, stream).percentages) == pytest.approx(100.0)

    # same shape through the CLI
    from skgtext.cli import main
    from skgtext.knowledge import record_to_json

    src = tmp_path / "records.jsonl"
    src.write_text("\n".join(json.dumps(record_to_json(r)) for r in records))
    out = tmp_path / "stats.json"
    assert main(["stats", str(src), "--json", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["tasks"]["dart"]["structured"]["percentages"] == [100.0, 0.0, 0.0]
    assert doc["tasks"]["dart"]["combined"]["percentages"] == [100.0, 0.0, 0.0]
    report("criterion-9", "short-triple corpus binned 100% into [0, 512) on every input stream")
