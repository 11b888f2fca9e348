import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symflow.system_file import load  # noqa: E402


@pytest.fixture(scope="session")
def example(request):
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load(name)
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
