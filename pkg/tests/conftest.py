import itertools

import pytest


def brute_label(task: str, v1, v2) -> int:
    """Reference labels written independently of drnet.data."""
    s1 = "".join(str(int(b)) for b in v1)
    s2 = "".join(str(int(b)) for b in v2)
    if task == "equality":
        return int(s1 == s2)
    if task == "numeric_ge":
        return int(int(s1, 2) >= int(s2, 2))
    if task == "digit_sum_ge3":
        return int((s1 + s2).count("1") >= 3)
    if task == "digit_reversal":
        return int(s2 == s1[::-1])
    raise ValueError(task)


def every_pair(n):
    vs = list(itertools.product((0, 1), repeat=n))
    return [(a, b) for a in vs for b in vs]


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one line per acceptance criterion, printed after the run."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
