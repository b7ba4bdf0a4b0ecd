import numpy as np
import pytest

from viateleop.config import RunConfig
from viateleop.impedance import Mode
from viateleop.params import SystemParams
from viateleop.sysid import SweepConfig, measure_response


@pytest.fixture(scope="session")
def system():
    return SystemParams()


@pytest.fixture(scope="session")
def run_config():
    return RunConfig()


@pytest.fixture(scope="session")
def default_sweeps(system):
    """Measured frequency responses for all three settings, shared by the
    sysid tests and the acceptance suite (the sweep is the expensive part)."""
    cfg = SweepConfig()
    return {mode: measure_response(mode, cfg, system)
            for mode in (Mode.HIGH, Mode.LOW, Mode.ADAPTIVE)}
