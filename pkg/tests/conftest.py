import itertools

import pytest
from hypothesis import settings

from intermlearn.core import ActionKind, SystemState

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

A = ActionKind


def all_states(max_n, max_id=None):
    """Every state with up to ``max_n`` examples (ids 1..n), every action combination."""
    out = []
    for n in range(max_n + 1):
        for acts in itertools.product(list(A), repeat=n):
            out.append(SystemState.of(list(zip(range(1, n + 1), acts))))
    return out


@pytest.fixture
def small_states():
    return all_states(2)


def ample_cap():
    from intermlearn.energy import Capacitor

    return Capacitor.at(10.0, 3.3, 3.3, 2.0)


def run_prog(prog, store, costs, cap=None, trace=None, **kw):
    from intermlearn.energy import constant_trace
    from intermlearn.runtime import execute_action

    return execute_action(prog, store, cap or ample_cap(), trace or constant_trace(100.0, 1e7), 0.0, costs, **kw)


def pipeline(app, costs, windows, kinds, labels=None):
    """Run ``kinds`` on each window (as example i+1) with ample power; returns the store."""
    store = app.initial_store()
    for i, w in enumerate(windows, start=1):
        for kind in kinds:
            lab = None if labels is None else labels[i - 1]
            prog = app.program(kind, i, window=w, label=lab, t=float(i))
            out, store, _, _ = run_prog(prog, store, costs)
    return store


ACCEPTANCE = {}


class criterion:
    """Context manager recording one acceptance line: PASS unless the body raises."""

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"{verdict} criterion {self.number:>2}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        ACCEPTANCE[self.number] = line
        print(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
