import numpy as np
import pytest

from furstenberg import model, walk

# Reference values for the built-in benchmark measure, frozen from an
# independent long-run oracle (two single-trajectory runs of 2e6 steps with
# numpy's default generator gave 0.551392 and 0.551532; the block estimator
# at n = 1e4, N = 1e3 gives 0.551025 +- 0.00011).
GAMMA_STAR = 0.5514
GAMMA_BAND = 0.0015
A2_STAR = 0.1125
A2_BAND = 0.02


@pytest.fixture(scope="session")
def test_mu():
    return model.test_measure()


@pytest.fixture(scope="session")
def sampler(test_mu):
    return walk.TrajectorySampler(test_mu, seed=7)


@pytest.fixture(scope="session")
def gamma_ref(sampler):
    # one cheap shared estimate for horizon policies in the unit tests
    est = walk.estimate_lyapunov_clt(sampler, 2000, 400)
    return est.gamma_hat


@pytest.fixture(scope="session")
def nu_sample(sampler):
    return walk.empirical_measure(sampler, 200, 100_000)


def rand_sl2(rng) -> np.ndarray:
    a = rng.uniform(0.3, 2.0) * rng.choice([-1.0, 1.0])
    b, c = rng.uniform(-2.0, 2.0, size=2)
    return np.array([[a, b], [c, (1.0 + b * c) / a]])
