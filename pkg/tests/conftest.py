"""Collects one verdict per acceptance criterion and prints them at the end."""

CRITERIA = {
    1: "model ordering (IL-O vs IL-U reward and idle)",
    2: "balking vs non-balking idle time",
    3: "convergence speed (IL-O vs TL)",
    4: "non-stationarity adaptation",
    5: "event-mix sensitivity",
    6: "noise robustness",
    7: "toy oracle equivalence",
    8: "formula examples",
    9: "determinism of reproduce fig5c",
    10: "randomized invariant suites",
}

VERDICTS: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    VERDICTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        passed, detail = VERDICTS.get(n, (False, "not evaluated"))
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {n:>2}: {name}: {detail}")
