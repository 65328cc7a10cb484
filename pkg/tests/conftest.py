import numpy as np
import pytest

from vqe_saddle import AnsatzLayout, VQELandscape, bundled_checkpoint, heisenberg_preset

XYZ_COUPLINGS = (1.421, 1.288, 1.0)


@pytest.fixture(scope="session")
def layout():
    return AnsatzLayout(4, 4)


@pytest.fixture(scope="session")
def heisenberg():
    return heisenberg_preset(4)


@pytest.fixture(scope="session")
def landscape(layout, heisenberg):
    return VQELandscape(layout, heisenberg)


@pytest.fixture(scope="session")
def xyz_landscape(layout):
    return VQELandscape(layout, heisenberg_preset(4, *XYZ_COUPLINGS))


@pytest.fixture(scope="session")
def checkpoints():
    return {name: bundled_checkpoint(name)[0] for name in ("saddle", "excited", "ground", "xyz-saddle")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
