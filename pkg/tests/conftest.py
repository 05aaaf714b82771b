import sys

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: criterion-level acceptance checks")


@pytest.fixture(scope="session")
def acceptance_log():
    lines = []
    yield lines
    if lines:
        print("\n" + "\n".join(lines), file=sys.stderr)


@pytest.fixture
def record(acceptance_log):
    def _record(criterion: str, passed: bool, detail: str = ""):
        status = "PASS" if passed else "FAIL"
        line = f"ACCEPTANCE {criterion}: {status}" + (f" ({detail})" if detail else "")
        acceptance_log.append(line)
        print(line, file=sys.stderr)
        assert passed, line

    return _record
