from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from asmagan import engine as E
from asmagan.config import toy_config
from asmagan.data import ingest
from asmagan.toydata import make_toy_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True, scope="session")
def single_thread():
    # bitwise determinism is only promised at one BLAS thread
    with threadpool_limits(limits=1):
        yield


@pytest.fixture
def f64():
    with E.precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    return make_toy_corpus(tmp_path_factory.mktemp("toy") / "corpus", seed=0)


@pytest.fixture(scope="session")
def toy_dataset(toy_root):
    return ingest(toy_root)


def tiny_config(**overrides):
    """Smallest widths that still exercise every layer; 32x32 phases."""
    raw = dict(
        base_channels=4,
        channel_cap=16,
        n_resblocks=1,
        channels=[4, 8, 8, 16, 16, 16],
        resolution_schedule=[[32, 6]],
        batch_size=2,
        checkpoint_every=0,
    )
    raw.update(overrides)
    return toy_config(**raw)


# acceptance report ---------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """record(n, ok, detail) logs one PASS/FAIL line and returns ok."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
