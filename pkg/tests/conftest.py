import warnings

import pytest

from ers_sim import engine
from ers_sim.scenario import ScenarioWarning, copy_scenario, load_preset

# lines recorded by test_acceptance.py, echoed once at the end of the session
ACCEPTANCE_LINES: dict = {}


def quiet_preset(name, **updates):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScenarioWarning)
        sc = load_preset(name)
    return copy_scenario(sc, **updates) if updates else sc


def small_corridor(length_m=1000.0, duration_s=120.0, rate=650.0, seed=3, **updates):
    """A short, fast corridor scenario for engine-level tests."""
    sc = quiet_preset("baseline-5km")
    base = {
        "corridor": {"length_m": length_m},
        "traffic": {"arrival_rate_vph": rate},
        "sim": {"duration_s": duration_s, "seed": seed},
    }
    for section, vals in updates.items():
        base.setdefault(section, {}).update(vals)
    return copy_scenario(sc, **base)


@pytest.fixture(scope="session")
def baseline_hour():
    """The 5 km baseline preset, one simulated hour."""
    return engine.run(quiet_preset("baseline-5km"))


@pytest.fixture(scope="session")
def short_run():
    return engine.run(small_corridor(), record_messages=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
