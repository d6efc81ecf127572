import logging

import pytest

from src.lattice import AnalysisConstants, Cutoffs, HORIZONTAL_WALL
from src.potentials import PotentialSpec
from src.renewal import TiltVector, build_animal_table, initial_tilt
from src.effwalk import build_step_law

logging.basicConfig(level=logging.DEBUG, format="%(levelname)s : %(asctime)s : %(message)s")


@pytest.fixture
def constants():
    return AnalysisConstants(beta=4.0, chi=2.0)


@pytest.fixture
def wall():
    return HORIZONTAL_WALL


@pytest.fixture
def zero_phi(constants):
    return PotentialSpec.build("ZERO", constants.beta, constants.chi)


@pytest.fixture
def random_phi(constants):
    return PotentialSpec.build("RANDOM_SIGN", constants.beta, constants.chi, seed=7)


@pytest.fixture
def basic_law():
    """Closed-form basic law tilted towards (1, 1/2) at beta = 4."""
    beta = 4.0
    direction = (1.0, 0.5)
    tilt = TiltVector.from_h(initial_tilt(direction, beta), beta, direction=direction)
    return build_step_law("BASIC", tilt)


@pytest.fixture(scope="session")
def zero_table():
    """Irreducible animals up to length 5 with no potential, beta = 4."""
    constants = AnalysisConstants(beta=4.0, chi=2.0, cutoffs=Cutoffs(len_cap=5))
    phi = PotentialSpec.build("ZERO", constants.beta, constants.chi)
    return build_animal_table(phi, constants)
