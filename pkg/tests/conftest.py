import numpy as np
import pytest

from sparsevid import BinaryMask, LinearSoftmaxVictim, QuerySession, VideoTensor


def philox(*entropy) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@pytest.fixture
def rng():
    return philox(1234)


@pytest.fixture
def small_dims():
    return (4, 4, 4, 1)


@pytest.fixture
def small_video(small_dims):
    return VideoTensor(np.full(small_dims, 90.0))


@pytest.fixture
def threshold_session(small_dims):
    victim = LinearSoftmaxVictim.mean_threshold(small_dims, level=100.0)
    return QuerySession(victim)


def random_video(dims, rng, low=20.0, high=235.0) -> VideoTensor:
    return VideoTensor(rng.uniform(low, high, dims))


def full_mask(dims) -> BinaryMask:
    return BinaryMask.ones(dims)
