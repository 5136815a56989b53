import numpy as np
import pytest

from qsentinel.core import AgentState, VEHICLE
from qsentinel.costs import CostContext, CostParams
from qsentinel.predictor import standard_mode
from qsentinel.scenario import Scenario, ScriptedAgent, straight_reference


@pytest.fixture
def params():
    return CostParams()


@pytest.fixture
def straight_ctx():
    """Reference straight down +x at 8 m/s for 8 steps."""
    ego = AgentState(0.0, 0.0, 0.0, 8.0)
    ref = straight_reference(ego, (32.0, 0.0), 8, 0.5)
    return CostContext(
        goal=(32.0, 0.0),
        ego_start=(0.0, 0.0),
        ref_positions=ref.positions(),
        ref_headings=np.array([s.heading for s in ref.states]),
    )


def make_scenario(agents=(), injections=(), duration=8, seed=0, scene_type="test"):
    ego = AgentState(0.0, 0.0, 0.0, 8.0)
    goal = (duration * 0.5 * 8.0, 0.0)
    return Scenario(
        scenario_id="test0",
        scene_type=scene_type,
        duration=duration,
        dt=0.5,
        ego_init=ego,
        goal=goal,
        reference=straight_reference(ego, goal, duration, 0.5),
        agents=tuple(agents),
        injections=tuple(injections),
        seed=seed,
    )


@pytest.fixture
def lead_agent():
    return ScriptedAgent(
        agent_id="lead",
        init=AgentState(12.0, 0.0, 0.0, 7.0, VEHICLE),
        modes=(
            standard_mode("constant_velocity", weight=0.7, accel_std=0.3, turn_std=0.02),
            standard_mode("brake", weight=0.3, accel_std=0.2, turn_std=0.02),
        ),
    )


@pytest.fixture
def scenario_factory():
    return make_scenario


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Repeat the acceptance criterion lines after capture ends."""
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
