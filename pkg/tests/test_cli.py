import json
from pathlib import Path

import pytest

from skgtext.cli import main
from skgtext.fewshot import MixtureSpec, temperature_weights
from skgtext.linearize import SEPARATORS

FIXTURES = Path(__file__).parent / "fixtures"
RECORDS = str(FIXTURES / "gallery_records.jsonl")


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def test_linearize_gallery(tmp_path, gallery_expected):
    out = tmp_path / "pairs.jsonl"
    errors = tmp_path / "errors.jsonl"
    rc = main(["linearize", RECORDS, "--out", str(out), "--errors", str(errors)])
    assert rc == 0
    assert not errors.exists()
    pairs = read_jsonl(out)
    assert len(pairs) == 21
    by_id = {p["id"]: p for p in pairs}
    spider = by_id["spider-0"]
    assert spider["input_text"] == (
        "How many singers do we have?; " + gallery_expected["spider-0"]["structured"]
    )
    assert spider["target_text"] == "select count(*) from singer"
    # context joins between request and knowledge
    sparc = by_id["sparc-0"]
    assert (
        "What is the country corresponding it?; Of these, which is Jetblue Airways?"
        " | What are all the airlines?; | flight_2 |" in sparc["input_text"]
    )
    assert (out.parent / (out.name + ".manifest.json")).exists()


def test_linearize_preserves_input_order(tmp_path):
    out = tmp_path / "pairs.jsonl"
    main(["linearize", RECORDS, "--out", str(out)])
    got = [p["id"] for p in read_jsonl(out)]
    want = [r["id"] for r in read_jsonl(RECORDS)]
    assert got == want


def test_linearize_deterministic_and_parallel_stable(tmp_path):
    out1, out2, out3 = (tmp_path / f"p{i}.jsonl" for i in range(3))
    main(["linearize", RECORDS, "--out", str(out1)])
    main(["linearize", RECORDS, "--out", str(out2)])
    main(["linearize", RECORDS, "--out", str(out3), "--jobs", "4"])
    assert out1.read_bytes() == out2.read_bytes() == out3.read_bytes()


def test_linearize_empty_input(tmp_path):
    src = tmp_path / "empty.jsonl"
    src.write_text("")
    out = tmp_path / "pairs.jsonl"
    rc = main(["linearize", str(src), "--out", str(out)])
    assert rc == 0
    assert read_jsonl(out) == []


def test_linearize_invalid_record_routed_to_errors(tmp_path):
    bad = {
        "id": "bad-1",
        "task": "demo",
        "request": "q",
        "context": [],
        "knowledge": {"kind": "table", "header": ["a", "b"], "rows": [["only one"]]},
        "target": "t",
        "output_kind": "free_text",
    }
    src = tmp_path / "records.jsonl"
    src.write_text(json.dumps(bad) + "\n")
    out = tmp_path / "pairs.jsonl"
    errors = tmp_path / "errors.jsonl"
    rc = main(["linearize", str(src), "--out", str(out), "--errors", str(errors)])
    assert rc == 1
    assert read_jsonl(out) == []
    errs = read_jsonl(errors)
    assert len(errs) == 1 and errs[0]["id"] == "bad-1"


def test_linearize_reverse(tmp_path):
    out = tmp_path / "pairs.jsonl"
    main(["linearize", RECORDS, "--out", str(out), "--reverse"])
    spider = next(p for p in read_jsonl(out) if p["id"] == "spider-0")
    assert "| singer_in_concert : singer_id , concert_id | concert :" in spider["input_text"]


def test_linearize_truncation_budget(tmp_path):
    out = tmp_path / "pairs.jsonl"
    rc = main(["linearize", RECORDS, "--out", str(out), "--max-tokens", "120",
               "--errors", str(tmp_path / "errors.jsonl")])
    from skgtext.corpus import count_tokens

    pairs = read_jsonl(out)
    assert pairs, "some records should fit a 120-token budget"
    for pair in pairs:
        assert count_tokens(pair["input_text"]) <= 120


def test_linearize_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"ordering": "sr"}))
    out_sr = tmp_path / "sr.jsonl"
    main(["linearize", RECORDS, "--out", str(out_sr), "--config", str(cfg)])
    spider = next(p for p in read_jsonl(out_sr) if p["id"] == "spider-0")
    assert spider["input_text"].startswith("| concert_singer |")
    # flag wins over config
    out_rs = tmp_path / "rs.jsonl"
    main(["linearize", RECORDS, "--out", str(out_rs), "--config", str(cfg),
          "--ordering", "rs_c"])
    spider = next(p for p in read_jsonl(out_rs) if p["id"] == "spider-0")
    assert spider["input_text"].startswith("How many singers do we have?;")


def test_eval_upper_bound(tmp_path):
    preds = tmp_path / "preds.jsonl"
    with open(RECORDS, encoding="utf-8") as f:
        rows = [json.loads(line) for line in f]
    preds.write_text(
        "\n".join(json.dumps({"id": r["id"], "prediction": r["target"]}) for r in rows)
    )
    out = tmp_path / "report.json"
    csv_out = tmp_path / "per_record.csv"
    rc = main(["eval", RECORDS, str(preds), "--out", str(out), "--csv", str(csv_out)])
    assert rc == 0
    report = json.loads(out.read_text())
    agg = report["aggregates"]
    assert agg["mean_accuracy"] == 1.0
    assert agg["corpus_bleu"] == 100.0
    assert agg["joint_accuracy"] == 1.0
    assert agg["micro_f1"]["f1"] == 1.0
    assert agg["mean_blec"] == 1.0
    tax = report["error_taxonomy"]
    assert tax["correct"] == tax["num_formal"] == 6
    assert tax["invalid_output"] == 0 and tax["valid_but_wrong"] == 0
    assert csv_out.exists() and "exact_match" in csv_out.read_text().splitlines()[0]


def test_eval_missing_prediction_is_data_error(tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"id": "spider-0", "prediction": "x"}) + "\n")
    errors = tmp_path / "errors.jsonl"
    rc = main(["eval", RECORDS, str(preds), "--out", str(tmp_path / "r.json"),
               "--errors", str(errors)])
    assert rc == 1
    assert "missing predictions" in errors.read_text()


def test_eval_per_task_lowercase_config(tmp_path):
    record = {
        "id": "x1", "task": "wikitq", "request": "q", "context": [],
        "knowledge": {"kind": "formal", "text": "k"},
        "target": "Cut Bank", "output_kind": "answer_set",
    }
    records = tmp_path / "records.jsonl"
    records.write_text(json.dumps(record) + "\n")
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"id": "x1", "prediction": "cut bank"}) + "\n")

    out = tmp_path / "default.json"
    main(["eval", str(records), str(preds), "--out", str(out)])
    assert json.loads(out.read_text())["aggregates"]["mean_accuracy"] == 1.0

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task_lowercase": {"wikitq": False}}))
    out2 = tmp_path / "strict.json"
    main(["eval", str(records), str(preds), "--out", str(out2), "--config", str(cfg)])
    assert json.loads(out2.read_text())["aggregates"]["mean_accuracy"] == 0.0


def test_validate_formal_targets(tmp_path, gallery_by_id):
    rows = [
        {"id": "sql", "language": "sql", "text": gallery_by_id["spider-0"].target},
        {"id": "sexpr", "language": "sexpr", "text": gallery_by_id["grailqa-0"].target},
        {"id": "top", "language": "top", "text": gallery_by_id["mtop-0"].target},
        {"id": "sql2", "language": "sql", "text": gallery_by_id["sql2text-0"].request},
    ]
    src = tmp_path / "formal.jsonl"
    src.write_text("\n".join(json.dumps(r) for r in rows))
    out = tmp_path / "reports.jsonl"
    rc = main(["validate", str(src), "--out", str(out)])
    assert rc == 0
    reports = read_jsonl(out)
    assert len(reports) == 4
    assert all(r["valid"] for r in reports)
    assert [r["id"] for r in reports] == ["sql", "sexpr", "top", "sql2"]


def test_validate_reports_positions(tmp_path):
    src = tmp_path / "formal.jsonl"
    src.write_text(json.dumps({"id": "x", "language": "sexpr", "text": "(AND (JOIN"}) + "\n")
    out = tmp_path / "reports.jsonl"
    main(["validate", str(src), "--out", str(out)])
    report = read_jsonl(out)[0]
    assert report == {
        "id": "x",
        "language": "sexpr",
        "valid": False,
        "error_kind": "unbalanced_delimiter",
        "position": 10,
    }


def test_stats(tmp_path):
    out = tmp_path / "stats.json"
    table = tmp_path / "stats.txt"
    rc = main(["stats", RECORDS, "--json", str(out), "--table", str(table)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["overall"]["num_records"] == 21
    for stream in ("structured", "text", "combined", "output"):
        assert sum(doc["overall"][stream]["percentages"]) == pytest.approx(100.0, abs=0.1)
    assert "spider" in doc["tasks"]
    text = table.read_text()
    assert "Distribution(%)" in text
    assert "(all)" in text


def test_fewshot_select_mode(tmp_path):
    out = tmp_path / "prompts.jsonl"
    rc = main([
        "fewshot", "--train", RECORDS, "--queries", RECORDS,
        "--k", "2", "--mode", "select", "--out", str(out),
    ])
    assert rc == 0
    prompts = read_jsonl(out)
    assert len(prompts) == 21
    spider = next(p for p in prompts if p["id"] == "spider-0")
    # the query itself is in the train set, so it ranks first among examples
    assert "How many singers do we have?" in spider["prompt"]
    assert spider["prompt"].count("\n\n") == 2


def test_fewshot_random_mode_budget(tmp_path):
    from skgtext.corpus import count_tokens

    out = tmp_path / "prompts.jsonl"
    rc = main([
        "fewshot", "--train", RECORDS, "--queries", RECORDS,
        "--k", "3", "--mode", "random", "--seed", "5",
        "--budget", "900", "--out", str(out),
        "--errors", str(tmp_path / "errors.jsonl"),
    ])
    prompts = read_jsonl(out)
    assert prompts, "at least some prompts fit the budget"
    for p in prompts:
        assert count_tokens(p["prompt"]) <= 900
    if rc == 1:
        assert (tmp_path / "errors.jsonl").exists()


def test_mix_matches_module(tmp_path):
    out = tmp_path / "mix.json"
    rc = main([
        "mix", "--sizes", "7000,1000", "--temperature", "2",
        "--steps", "1000", "--seed", "3", "--out", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["weights"] == temperature_weights(MixtureSpec((7000, 1000), 2.0))
    assert len(doc["schedule"]) == 1000
    assert set(doc["schedule"]) <= {0, 1}


def test_format_spec(tmp_path, capsys):
    rc = main(["format-spec"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["separators"] == dict(SEPARATORS)
    assert doc["separators"]["column_join"] == " | "
    assert doc["separators"]["header_prefix"] == "col : "
    assert doc["separators"]["component_join"] == "; "
    assert "sql_grammar" in doc and "blec_rules" in doc


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["mix"])  # --sizes is required
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["not-a-command"])
    assert err.value.code == 2


def test_missing_file_is_data_error(tmp_path, capsys):
    rc = main(["linearize", str(tmp_path / "nope.jsonl"), "--out", "-"])
    assert rc == 1
