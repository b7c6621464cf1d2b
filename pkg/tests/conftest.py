import pytest

from airtracks.cli import run_e2e
from airtracks.config import load_config
from airtracks.fixture import build_fixture


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """The bundled synthetic corpus, built once per session."""
    root = tmp_path_factory.mktemp("corpus")
    cfg_path = build_fixture(root)
    return root, cfg_path


@pytest.fixture(scope="session")
def e2e_run(fixture_corpus):
    """One full pipeline run over the corpus, shared by read-only tests."""
    root, cfg_path = fixture_corpus
    cfg = load_config(cfg_path)
    rc = run_e2e(cfg)
    assert rc == 0
    return root, cfg
