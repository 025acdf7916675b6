_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:2d}: {detail}"
    _RESULTS[criterion] = (passed, line)
    print(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains full-size toy models (minutes)")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[k][1])
