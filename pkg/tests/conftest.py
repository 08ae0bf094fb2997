"""Shared fixtures: the bundled dataset plus one hand-sized world."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from genkbc.kb import (
    Background,
    KnowledgeBase,
    QuantLabel,
    Schema,
    Taxonomy,
    Triple,
    TypeMap,
    load_kb,
)

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "genkbc" / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_kb() -> KnowledgeBase:
    return load_kb(FIXTURES / "kb.tsv")


@pytest.fixture(scope="session")
def fixture_background() -> Background:
    return Background.load(
        FIXTURES / "taxonomy.tsv", FIXTURES / "typemap.tsv", FIXTURES / "schema.tsv"
    )


@pytest.fixture(scope="session")
def fixture_entity() -> str:
    return (FIXTURES / "entity.txt").read_text(encoding="utf-8").strip()


@pytest.fixture(scope="session")
def fixture_truth() -> dict[Triple, QuantLabel]:
    return dict(load_kb(FIXTURES / "truth.tsv").triples)


def _pets_kb() -> KnowledgeBase:
    rows = [
        ("terrier", "chases", "cat", "all"),
        ("spaniel", "chases", "cat", "some"),
        ("dog", "eats", "kibble", "all"),
        ("cat", "eats", "kibble", "some"),
        ("terrier", "fears", "vacuum", "none"),
    ]
    return KnowledgeBase(
        (Triple(s, r, t), QuantLabel.parse(lab)) for s, r, t, lab in rows
    )


def _pets_background() -> Background:
    taxonomy = Taxonomy(
        [
            ("terrier", "dog"),
            ("spaniel", "dog"),
            ("dog", "mammal"),
            ("cat", "mammal"),
        ]
    )
    typemap = TypeMap.from_items(
        [
            ("terrier", "animal"),
            ("spaniel", "animal"),
            ("dog", "animal"),
            ("cat", "animal"),
            ("kibble", "food"),
            ("vacuum", "appliance"),
        ]
    )
    schema = Schema.from_items(
        [
            ("chases", "animal", "animal"),
            ("eats", "animal", "food"),
            ("fears", "animal", "appliance"),
        ]
    )
    return Background(taxonomy, typemap, schema)


@pytest.fixture
def pets() -> tuple[KnowledgeBase, Background]:
    """Five labeled facts about dogs and cats, fully typed and schema'd."""
    return _pets_kb(), _pets_background()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the one-line acceptance verdicts at the end of the run."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    results = getattr(mod, "_RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(results):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:02d}: {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
