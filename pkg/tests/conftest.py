import json
from pathlib import Path

import pytest

from argmine.backend import MockBackend
from argmine.data import CorpusFile, load_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mock_backend() -> MockBackend:
    return MockBackend()


@pytest.fixture
def pipeline_corpus():
    loaded = load_corpus(CorpusFile.at(FIXTURES / "pipeline12.csv"))
    assert not loaded.rejects
    return loaded.instances


@pytest.fixture
def chat_fixture():
    return json.loads((FIXTURES / "chat_completion_pair.json").read_text())


@pytest.fixture
def embeddings_fixture():
    return json.loads((FIXTURES / "embeddings_pair.json").read_text())
