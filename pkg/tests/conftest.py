import numpy as np
import pytest

from delphos.dataset import ChoiceDataset
from delphos.synthetic import generate, get_case


@pytest.fixture(scope="session")
def s1_case():
    return get_case("S1")


@pytest.fixture(scope="session")
def s3_case():
    return get_case("S3")


@pytest.fixture(scope="session")
def s1_small(s1_case):
    """N=600 S1 draw, large enough for stable estimation in module tests."""
    ds, truth = generate(s1_case, 600, seed=41)
    return ds, truth


@pytest.fixture(scope="session")
def s1_full(s1_case):
    """The N=4000 recovery dataset used by the acceptance suite."""
    ds, truth = generate(s1_case, 4000, seed=7)
    return ds, truth


@pytest.fixture()
def tiny_dataset():
    """Hand-built 4-observation, J=3, K=2 dataset with one covariate."""
    rng = np.random.default_rng(5)
    return ChoiceDataset(
        attrs=rng.uniform(0.5, 4.5, size=(4, 3, 2)),
        covs=np.array([[0], [1], [0], [1]]),
        cov_levels=(2,),
        choice=np.array([0, 2, 1, 0]),
        avail=np.ones((4, 3), dtype=bool),
    )
