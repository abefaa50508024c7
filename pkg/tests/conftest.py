import numpy as np
import pytest

from loopsim.engine import EntityId, RngStream

VIEWER = EntityId("viewer", 0)

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def noise(seed=0, tick=0, entity=VIEWER):
    return RngStream(seed).noise(entity, tick)


def init(model, seed=0, entity=VIEWER):
    return model.initial_state(RngStream(seed).noise(entity, -1))


def run_steps(model, inputs, seed=0, entity=VIEWER):
    """Step a single model through ``inputs``; returns (outputs, states x_0..x_T)."""
    stream = RngStream(seed)
    x = model.initial_state(stream.noise(entity, -1))
    states, outputs = [x], []
    for t, u in enumerate(inputs):
        y, x = model.step(x, np.asarray(u, dtype=float), stream.noise(entity, t))
        outputs.append(np.asarray(y, dtype=float))
        states.append(x)
    return outputs, states


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
