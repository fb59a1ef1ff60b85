import numpy as np
import pytest

from ttft.scene import bundled_scene

ACCEPTANCE: dict[str, str] = {}


def record(criterion: str, passed: bool, message: str) -> None:
    """Store one acceptance line; printed in the terminal summary and immediately."""
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {message}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def key(k):
        num = "".join(ch for ch in k if ch.isdigit())
        return (int(num) if num else 0, k)

    for k in sorted(ACCEPTANCE, key=key):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def scenes():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = bundled_scene(name)
        return cache[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
