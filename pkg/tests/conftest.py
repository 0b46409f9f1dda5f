import re

import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Records one verdict line for an acceptance criterion; a test that
    raises before recording is reported as a failure."""
    num = int(re.match(r"test_c(\d+)_", request.node.name).group(1))

    def record(ok: bool, detail: str):
        ACCEPTANCE[num] = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE[num])
        return ok

    yield record
    ACCEPTANCE.setdefault(num, f"criterion {num:2d}: FAIL  raised before a verdict")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
