import numpy as np
import pytest

from app.schemas.control import FormationGeometry, GainSet
from app.schemas.manipulator import ManipulatorParams
from app.schemas.network import Protocol, TodWeights
from app.schemas.simulation import ScenarioKind
from app.schemas.stability import LmiVariablesTOD
from app.services.scenarios import build_config, build_scenario
from app.services.simulator import TeleoperationSimulator
from app.services.stability import lyapunov_witness


@pytest.fixture
def params():
    return ManipulatorParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def gains3():
    return GainSet.uniform(20.0, 20.0, 3)


@pytest.fixture
def formation3():
    return FormationGeometry.default(3)


def free_motion_run(protocol: Protocol, duration: float = 20.0):
    """Reference free-motion run with a Lyapunov witness at MATI 0.14, MAD 0.1."""
    gains = GainSet.uniform(20.0, 20.0, 3)
    result = lyapunov_witness(3, gains, 0.14, 0.1, protocol)
    assert result is not None and result.feasible
    variables = result.witness
    weights = TodWeights(Q=variables.q) if isinstance(variables, LmiVariablesTOD) else None
    config = build_config(
        protocol=protocol, gains=gains, lyapunov_variables=variables, tod_weights=weights
    )
    simulator = TeleoperationSimulator(config, build_scenario(ScenarioKind.FREE_MOTION, 3, duration))
    return simulator, simulator.run()


@pytest.fixture(scope="session")
def rr_free_run():
    return free_motion_run(Protocol.RR)


@pytest.fixture(scope="session")
def tod_free_run():
    return free_motion_run(Protocol.TOD)
