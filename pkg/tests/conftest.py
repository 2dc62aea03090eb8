import numpy as np
import pytest

from teamsteer.env import load_layout, reset, step

ACCEPTANCE_RESULTS = []


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and rep.when == "call":
        detail = getattr(item, "_acceptance_detail", "")
        ACCEPTANCE_RESULTS.append((marker.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


def random_episode(layout_name, n, seed, steps=400):
    """Roll a seeded uniform-random episode; yields (state, actions, next_state, events)."""
    layout = load_layout(layout_name)
    rng = np.random.default_rng(seed)
    state = reset(layout, n, seed)
    for _ in range(steps):
        actions = tuple(int(a) for a in rng.integers(0, 6, size=n))
        nxt, events = step(state, actions)
        yield state, actions, nxt, events
        state = nxt


@pytest.fixture
def cramped2():
    return load_layout("cramped-2")


@pytest.fixture
def pl3():
    return load_layout("pl-3")
