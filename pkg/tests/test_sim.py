import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penbierens.optimizer import PsoConfig
from penbierens.sim import DgpSpec, McTest, generate, power_curve

FAST = PsoConfig(swarm_size=10, max_iters=60)


def test_null_mds_is_uncorrelated_with_instruments():
    data = generate(DgpSpec(kind="null_mds", n=4000, p=3, seed=5))
    u = data.outcomes[:, 0]
    for j in range(3):
        assert abs(np.corrcoef(u, data.instruments[:, j])[0, 1]) <= 4 / math.sqrt(4000)


def test_zero_relevance_leaves_regressor_independent():
    n = 4000
    data = generate(DgpSpec(kind="linear_iv", n=n, p=2, relevance=0.0, seed=6))
    r = np.corrcoef(data.outcomes[:, 1], data.instruments[:, 0])[0, 1]
    assert abs(math.atanh(r)) * math.sqrt(n - 3) <= 4


def test_linear_iv_moments():
    n = 100_000
    spec = DgpSpec(kind="linear_iv", n=n, p=2, relevance=0.6, theta_true=0.5, intercept=0.2, seed=7)
    data = generate(spec)
    y, x = data.outcomes.T
    z1 = data.instruments[:, 0]
    se = 1 / math.sqrt(n)
    assert abs(np.mean(x * z1) - 0.6) <= 4 * se * math.sqrt(1 + 0.36)
    assert abs(np.var(x) - 1.0) <= 4 * se * math.sqrt(2)
    assert abs(y.mean() - 0.2) <= 4 * se * math.sqrt(1.25)
    resid = y - 0.2 - 0.5 * x
    assert abs(np.mean(resid * z1)) <= 4 * se


@given(st.sampled_from(["null_mds", "linear_iv"]), st.integers(0, 2**32))
@settings(max_examples=15)
def test_generation_is_deterministic(kind, seed):
    spec = DgpSpec(kind=kind, n=30, p=2, seed=seed)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.outcomes, b.outcomes) and np.array_equal(a.instruments, b.instruments)


def test_bad_specs_rejected():
    for kw in ({"kind": "probit"}, {"n": 5}, {"relevance": 1.0}, {"noise_sd": 0.0}):
        with pytest.raises(ValueError):
            DgpSpec(**kw)


@pytest.fixture(scope="module")
def small_null_report():
    test = McTest(alpha=0.1, R=99, seed=4, optimizer=FAST)
    return power_curve(DgpSpec(kind="null_mds", n=80, p=2, seed=21), (1.0, 0.0), test, mc_reps=100)


def test_size_within_three_standard_errors(small_null_report):
    se = math.sqrt(0.1 * 0.9 / 100)
    for lam in (1.0, 0.0):
        assert abs(small_null_report.rate(lam) - 0.1) <= 3 * se


def test_report_outputs(small_null_report):
    lines = small_null_report.to_csv().splitlines()
    assert lines[0] == "lambda,rejection_rate,mc_stderr"
    assert len(lines) == 3
    d = json.loads(small_null_report.to_json())
    assert d["mc_reps"] == 100 and d["lambdas"] == [1.0, 0.0]
    assert small_null_report.p_values.shape == (100, 2)


def test_power_curve_reproducible():
    test = McTest(alpha=0.1, R=50, seed=8, optimizer=FAST)
    spec = DgpSpec(kind="linear_iv", n=40, p=1, seed=3)
    a = power_curve(spec, (0.5,), test, mc_reps=50)
    b = power_curve(spec, (0.5,), test, mc_reps=50, workers=2)
    assert np.array_equal(a.p_values, b.p_values)


def test_too_few_reps_rejected():
    with pytest.raises(ValueError):
        power_curve(DgpSpec(n=20), (1.0,), mc_reps=10)


@pytest.mark.slow
def test_unpenalized_power_falls_with_instrument_count(figure1_runs):
    rates = [figure1_runs[p].rate(0.0) for p in (2, 6, 10)]
    assert rates[0] > rates[1] > rates[2]
