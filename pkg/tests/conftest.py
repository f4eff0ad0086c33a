import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seisgrid.config_io import load_network  # noqa: E402
from seisgrid.simulation import RiskInputs, ScenarioEngine  # noqa: E402


@pytest.fixture(scope="session")
def rts():
    return load_network()


@pytest.fixture(scope="session")
def inputs():
    return RiskInputs.bundled()


@pytest.fixture(scope="session")
def engine(inputs):
    """Shared seed-7 engine; its caches make repeated configurations cheap."""
    return ScenarioEngine(inputs, 7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
