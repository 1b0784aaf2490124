from __future__ import annotations

import pytest

from netstress.synth import SynthConfig, generate_dataset

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Log one acceptance line; the terminal summary prints them all."""

    def _record(criterion: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((criterion, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {crit}  {detail}")


SMALL = SynthConfig(seed=11, n_stocks=30, n_days=230, n_insiders=24, n_outsiders=60)


@pytest.fixture(scope="session")
def small_corpus():
    """(dataset, truth) for a 30-stock, 230-day synthetic corpus."""
    return generate_dataset(SMALL)
