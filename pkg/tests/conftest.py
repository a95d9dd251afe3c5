import numpy as np
import pytest

from invfeat.datasets import gen_xperm
from invfeat.groups import block_permutation


@pytest.fixture(scope="session")
def xperm():
    return gen_xperm(0)


@pytest.fixture(scope="session")
def s5():
    return block_permutation(5, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
