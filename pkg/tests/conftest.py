import pytest

from mtisim.config import data_path, load_scenario


@pytest.fixture(scope="session")
def scenario():
    return load_scenario()


@pytest.fixture(scope="session")
def profiles(scenario):
    return scenario.profiles


@pytest.fixture(scope="session")
def sparsity_grid_path():
    return data_path("sparsity_grid.csv")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
