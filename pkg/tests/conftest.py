import numpy as np
import pytest

from fieldscatter.flows import TrainConfig, train_flow

TOY_SIGMA = 0.5
TOY_PROBES = (-1.5, -0.7, 0.0, 0.8, 1.6)


def toy_dataset(n=5000, seed=1):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-2, 2, (n, 1))
    return theta, theta + TOY_SIGMA * rng.standard_normal(theta.shape)


def trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def conditional_moments(model, theta, half_width=6 * TOY_SIGMA, n=4001):
    """Normalization, mean and std of a trained 1D flow at one theta."""
    x = np.linspace(theta - half_width, theta + half_width, n)
    q = np.exp(model.log_prob(x[:, None], np.full((n, 1), theta)))
    Z = trapezoid(q, x)
    mean = trapezoid(q * x, x) / Z
    std = np.sqrt(trapezoid(q * (x - mean) ** 2, x) / Z)
    return Z, mean, std


@pytest.fixture(scope="session")
def toy_flow():
    theta, t = toy_dataset()
    return train_flow(theta, t, TrainConfig(seed=3), n_blocks=3)


def pytest_terminal_summary(terminalreporter, config):
    from test_acceptance import RESULTS

    lines = config.stash.get(RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
