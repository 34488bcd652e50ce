from __future__ import annotations

import pytest

from vulnreach.fixtures import CorpusSpec, figure1, generate
from vulnreach.pipeline import Analyzer

SEED0_SPEC = CorpusSpec(seed=0, root_count=200)


@pytest.fixture(scope="session")
def figure1_dir(tmp_path_factory):
    return figure1(tmp_path_factory.mktemp("figure1")).path


@pytest.fixture(scope="session")
def seed0_corpus(tmp_path_factory):
    return generate(SEED0_SPEC, tmp_path_factory.mktemp("seed0"))


@pytest.fixture(scope="session")
def seed0_analyzer(seed0_corpus):
    return Analyzer.load(seed0_corpus.path)


# one pass/fail line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
