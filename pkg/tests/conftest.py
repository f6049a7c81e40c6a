
import pytest
import torch

torch.set_num_threads(1)

# filled by test_acceptance.py; printed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tmp_corpus(tmp_path):
    from csgkit.io import write_corpus
    from csgkit.synth import generate_synthetic_corpus

    corpus = generate_synthetic_corpus(12, seed=3)
    write_corpus(corpus, tmp_path / "corpus")
    return tmp_path / "corpus", corpus


