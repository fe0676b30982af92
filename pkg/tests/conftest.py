import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from penbierens.model import transform_instruments
from penbierens.optimizer import PsoConfig, make_rng
from penbierens.sim import DgpSpec, McTest, power_curve

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIG1_LAMBDAS = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.0)
FIG1_REPS = 200


def fixture_data(seed: int, n: int = 60, p: int = 2, signal: float = 0.0):
    """Transformed instruments and residuals for a small random problem."""
    rng = make_rng(seed, 4242)
    w = transform_instruments(rng.standard_normal((n, p))).values
    u = rng.standard_normal(n) + signal * w[:, 0]
    return u, w


@pytest.fixture(scope="session")
def figure1_runs():
    """Power curves of the linear IV design at n = 300, shared across test modules.

    Uses the default swarm: the lighter Monte Carlo swarm under-maximizes the
    unpenalized statistic in ten dimensions, which inflates power at lambda = 0.
    """
    test = McTest(alpha=0.1, R=199, seed=2, optimizer=PsoConfig())
    runs = {}
    for p, lams in ((2, (0.0,)), (6, (0.0,)), (10, FIG1_LAMBDAS)):
        spec = DgpSpec(kind="linear_iv", n=300, p=p, relevance=0.9, theta_true=0.0, seed=100 + p)
        runs[p] = power_curve(spec, lams, test, mc_reps=FIG1_REPS)
    return runs
