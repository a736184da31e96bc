import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pilotadapt import OfdmNumerology, default_codebook  # noqa: E402

REPO = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def numerology():
    return OfdmNumerology()


@pytest.fixture(scope="session")
def book():
    return default_codebook()


@pytest.fixture(scope="session")
def configs_dir():
    return REPO / "configs"


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one verdict line per criterion; printed in the terminal summary."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(key, title, ok, detail):
        store[key] = f"{key} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(ACCEPTANCE, None)
    if store:
        terminalreporter.section("acceptance criteria")
        for key in sorted(store):
            terminalreporter.write_line(store[key])
