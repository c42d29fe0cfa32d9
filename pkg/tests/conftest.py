import numpy as np
import pytest

from driftlab.model import SensorSeries

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance_record():
    """Record one acceptance-criterion verdict for the terminal summary."""

    def record(name: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def make_series(n=10, start=1_500_000_000, step=600, sensor_id="s", **channels):
    t = start + step * np.arange(n)
    base = {
        "temperature": np.full(n, 10.0),
        "reference_co2": np.full(n, 420.0),
        "sensor_co2": np.full(n, 420.0),
    }
    base.update(channels)
    return SensorSeries(sensor_id=sensor_id, timestamps=t, cadence=step, **base)


@pytest.fixture
def series_factory():
    return make_series
