import numpy as np
import pytest

from gistcompress.model import ModelConfig, init_model
from gistcompress.tokenizer import Vocab


@pytest.fixture(scope="session")
def vocab():
    return Vocab()


@pytest.fixture
def tiny_config(vocab):
    return ModelConfig(vocab_size=len(vocab), d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, d_ff=32, max_seq_len=64, n_gist=3)


@pytest.fixture
def tiny_model(tiny_config):
    return init_model(tiny_config, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
