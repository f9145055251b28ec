import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))

DATA = TESTS_DIR / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


def load_ruleset(name):
    return (DATA / name).read_text()
