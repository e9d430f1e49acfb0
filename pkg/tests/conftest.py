from pathlib import Path

import pytest

from nlslab.experiments import ConstructionSetup, run_construction
from nlslab.grid import Grid
from nlslab.groundstate import solve_ground_state
from nlslab.nonlinearity import Nonlinearity
from nlslab.validation import parse_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture(scope="session")
def cubic():
    return Nonlinearity.pure_power(3)


@pytest.fixture(scope="session")
def cubic_ground_state(cubic):
    return solve_ground_state(cubic, 1.0)


@pytest.fixture(scope="session")
def line_grid():
    return Grid((512,), (32.0,))


@pytest.fixture(scope="session")
def construction_setup():
    config = parse_config(CONFIG_DIR / "two_soliton.cfg", "construct")
    return ConstructionSetup.from_experiment(config, threads=3)


@pytest.fixture(scope="session")
def construction_setup_b():
    config = parse_config(CONFIG_DIR / "two_soliton_b.cfg", "construct")
    return ConstructionSetup.from_experiment(config, threads=3)


@pytest.fixture(scope="session")
def construction_report(construction_setup):
    return run_construction(construction_setup)


@pytest.fixture(scope="session")
def construction_report_b(construction_setup_b):
    return run_construction(construction_setup_b)
