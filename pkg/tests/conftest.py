from __future__ import annotations

import json
from pathlib import Path

import pytest

from skgtext.knowledge import Record, record_from_json

FIXTURES = Path(__file__).parent / "fixtures"


def load_gallery_records() -> list[Record]:
    with open(FIXTURES / "gallery_records.jsonl", encoding="utf-8") as f:
        return [record_from_json(json.loads(line)) for line in f if line.strip()]


def load_gallery_expected() -> dict[str, dict]:
    with open(FIXTURES / "gallery_expected.jsonl", encoding="utf-8") as f:
        rows = [json.loads(line) for line in f if line.strip()]
    return {row["id"]: row for row in rows}


@pytest.fixture(scope="session")
def gallery_records() -> list[Record]:
    return load_gallery_records()


@pytest.fixture(scope="session")
def gallery_expected() -> dict[str, dict]:
    return load_gallery_expected()


@pytest.fixture(scope="session")
def gallery_by_id(gallery_records) -> dict[str, Record]:
    return {r.id: r for r in gallery_records}
