import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from eqcheck.constraints import Solver  # noqa: E402


@pytest.fixture(scope="session")
def solver():
    s = Solver()
    yield s
    s.close()


@pytest.fixture(scope="session")
def corpus_dir():
    return Path(__file__).resolve().parent.parent / "corpus"
