import numpy as np
import pytest

from quantcal import basis as bs
from quantcal import design as dg
from quantcal import quantiles as qt
from quantcal import simulator as sim


@pytest.fixture(scope="session")
def space():
    return sim.epidemic_parameter_space()


@pytest.fixture(scope="session")
def small_design(space):
    return dg.generate_lhs(space, 8, seed=11)


@pytest.fixture(scope="session")
def alphas():
    return np.array([0.05, 0.275, 0.5, 0.725, 0.95])


@pytest.fixture(scope="session")
def small_ensemble(small_design, space):
    return sim.run_ensemble(small_design, space, r=12, T=10, seed=5)


@pytest.fixture(scope="session")
def small_quantiles(small_ensemble, small_design, alphas):
    aug = dg.augment_with_quantiles(small_design, alphas)
    return qt.build_quantile_ensemble(small_ensemble, alphas, aug)


@pytest.fixture(scope="session")
def small_basis(small_quantiles):
    return bs.build_basis(small_quantiles, 3)
