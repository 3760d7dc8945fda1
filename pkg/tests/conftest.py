import numpy as np
import pytest

from vbspower.core import Dataset, Sample, Scheduler

FIXTURE_BETA = (20.0, 4.0, 0.05, 0.0, 0.002, 0.05, -0.5, -0.3, -0.02, -2.0, 0.6, 2.0, 0.8)
GAMMA_STAR = (15.0, 10.0, 5.0, 0.2, 0.3)


def make_dataset(a, c, m, p, scheduler=Scheduler.CUSTOM, platform="Test", seed=None) -> Dataset:
    samples = tuple(
        Sample(float(ai), float(ci), int(mi), float(pi), scheduler, platform) for ai, ci, mi, pi in zip(a, c, m, p)
    )
    return Dataset(samples, platform, scheduler, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
