import pytest

from coopcache.config import reference_config
from coopcache.power import build_policy_tables

_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def cfg():
    return reference_config()


@pytest.fixture(scope="session")
def tables_half(cfg):
    return build_policy_tables(0.5, cfg)


@pytest.fixture
def acceptance_log():
    """Record one summary line per acceptance criterion."""

    def log(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
