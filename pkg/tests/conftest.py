import pytest
from hypothesis import HealthCheck, settings

from mevlens.registry import load_registry
from mevlens.replay.generator import InjectionSpec, generate_corpus

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A few hundred blocks with every injection kind; shared by the module tests."""
    specs = [
        InjectionSpec("arbitrage_front", 3, shape="simple"),
        InjectionSpec("arbitrage_front", 2, shape="triangle"),
        InjectionSpec("arbitrage_front", 2, shape="flashloan"),
        InjectionSpec("arbitrage_front", 2, shape="wrap"),
        InjectionSpec("arbitrage_back", 3),
        InjectionSpec("sandwich_normal", 3),
        InjectionSpec("sandwich_normal", 2, toxic=True),
        InjectionSpec("sandwich_burger", 3, victims=3),
        InjectionSpec("sandwich_conjoined", 3),
        InjectionSpec("failed_frontrun", 3),
        InjectionSpec("benign", 40),
    ]
    out = tmp_path_factory.mktemp("corpus")
    return generate_corpus(specs, seed=5, n_blocks=200, out_dir=out)


# One line per acceptance criterion, collected by tests/test_acceptance.py and
# echoed at the end of the run so it survives output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
