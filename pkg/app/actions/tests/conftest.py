import pytest

from app.actions.configurations import MomentsConfig, PlanConfig, VerifyConfig


@pytest.fixture
def plan_config():
    return PlanConfig(d=1024, eps=0.1, delta=1 / 1024)


@pytest.fixture
def verify_config():
    return VerifyConfig(n=256, d=4, m=64, s=4, trials=20, eps=0.9, delta=0.5, seed=3)


@pytest.fixture
def exact_moments_config(diagonal_basis_file):
    return MomentsConfig(basis=diagonal_basis_file, m=2, s=1, q=1, exact=True, normalization="unscaled")
