import os
from pathlib import Path

import numpy as np
import pytest

from riemridge.hurdat import read_hurdat2

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_DATA = ROOT / "data" / "hurdat2-atl-1980-2024-ibtracs.txt"


def dataset_path():
    env = os.environ.get("RIEMRIDGE_HURDAT2")
    return Path(env) if env else DEFAULT_DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture(scope="session")
def data_path():
    path = dataset_path()
    if not path.exists():
        pytest.skip(f"dataset not found at {path}")
    return path


@pytest.fixture(scope="session")
def records(data_path):
    return read_hurdat2(data_path)


SAMPLE_HURDAT2 = """\
AL012021,               ANA,      4,
20210522, 1800,  , LO, 35.4N,  63.1W,  30, 1006,  -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999,
20210523, 0000,  , SS, 35.1N,  64.0W,  35, 1005,    60,    0,    0,   60, -999, -999, -999, -999, -999, -999, -999, -999,  -999,
20210523, 0300, L, SS, 34.9N,  64.4W,  35, 1005,    60,    0,    0,   60, -999, -999, -999, -999, -999, -999, -999, -999,  -999,
20210523, 0600,  , SS, 34.7N,  64.8W,  35, 1005,    60,    0,    0,   60, -999, -999, -999, -999, -999, -999, -999, -999,  -999,
AL022021,              BILL,      3,
20210614, 0000,  , TD, 34.0N,  75.7W,  30, 1009,  -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999,
20210614, 0600,  , TS, 35.0S,  73.9E,  50, 1006,    60,   60,    0,    0, -999, -999, -999, -999, -999, -999, -999, -999,  -999,
20210614, 1200,  , TS, 36.9N,  71.4W, -99, -999,    60,   60,    0,    0, -999, -999, -999, -999, -999, -999, -999, -999,  -999,
"""


@pytest.fixture
def sample_text():
    return SAMPLE_HURDAT2


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Collector for one verdict line per acceptance criterion."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
