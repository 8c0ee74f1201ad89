import pytest

from wgmbench.report import build_fit_report
from wgmbench.scenario import builtin_scenario
from wgmbench.spectra import synthesize_pzt_series

# criterion number -> list of (test name, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {status}")
        for name, ok, detail in checks:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}: {detail}")


class _Pipeline:
    """Synthesized series and fit report for one built-in scenario, built once per session."""

    def __init__(self, name: str):
        self.scenario = builtin_scenario(name)
        self.series = synthesize_pzt_series(self.scenario, jobs=4)
        self.report = build_fit_report(self.series, jobs=4)


_CACHE: dict[str, _Pipeline] = {}


@pytest.fixture(scope="session")
def pipeline():
    def get(name: str) -> _Pipeline:
        if name not in _CACHE:
            _CACHE[name] = _Pipeline(name)
        return _CACHE[name]

    return get
