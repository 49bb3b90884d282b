import pytest
from hypothesis import settings

from sigbsg.game import running_example

# fixed example streams keep the suite reproducible run to run
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

# acceptance outcomes, filled in by test_acceptance.py and printed at the end
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def market():
    return running_example()


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
