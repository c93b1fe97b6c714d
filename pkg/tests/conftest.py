import numpy as np
import pytest

from seqtag import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def lexicon_sentences():
    sents, _ = synthetic.lexicon_corpus(20, seed=0)
    return sents


@pytest.fixture(scope="session")
def segment_splits():
    return synthetic.split(synthetic.segment_corpus(60, seed=3))


@pytest.fixture
def seg_task_dir(tmp_path, segment_splits):
    return synthetic.write_task_dir(tmp_path / "seg", segment_splits, "seg", "BIO")


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("tests.test_acceptance")
    if module is not None and module.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in module.VERDICTS:
            terminalreporter.write_line(line)
