import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from penbierens.errors import DegenerateVariance
from penbierens.kernel import (BatchObjective, GammaBox, PenaltyGrid, Summands, eval_components,
                               penalized_objective, penalized_objective_multi)

from _oracles import ORACLES
from conftest import fixture_data


def test_alternating_residuals_cancel():
    u = np.array([1.0, -1.0, 1.0, -1.0])
    ev = eval_components(u, np.zeros((4, 1)), [2.5])
    assert (ev.m, ev.s2, ev.q) == (0.0, 1.0, 0.0)


def test_constant_residual_gives_q_equal_n():
    ev = eval_components([2.0, 2.0], np.zeros((2, 1)), [0.0])
    assert (ev.m, ev.s2, ev.q) == (2.0, 4.0, 2.0)


def test_two_point_reference_values():
    o = ORACLES["two_point"]
    ev = eval_components([1.0, 2.0], np.array([[0.0], [math.log(2.0)]]), [1.0])
    assert ev.m == pytest.approx(o["m"], rel=1e-14)
    assert ev.s2 == pytest.approx(o["s2"], rel=1e-14)
    assert ev.q == pytest.approx(o["q"], rel=1e-14)
    got = penalized_objective([1.0, 2.0], np.array([[0.0], [math.log(2.0)]]), [1.0], 0.5)
    assert got == pytest.approx(o["objective_half"], rel=1e-14)


def test_origin_and_zero_penalty():
    u, w = fixture_data(1, n=20, p=2)
    at0 = penalized_objective(u, w, [0.0, 0.0], 0.7)
    assert at0 == pytest.approx(math.sqrt(u.size * u.mean() ** 2 / np.mean(u * u)), rel=1e-14)
    g = [0.4, -1.2]
    assert penalized_objective(u, w, g, 0.0) == math.sqrt(eval_components(u, w, g).q)


def test_multi_reductions():
    u, w = fixture_data(2, n=25, p=2)
    g = [0.3, 0.9]
    assert penalized_objective_multi(u[:, None], w, g, 0.4) == penalized_objective(u, w, g, 0.4)
    q1 = eval_components(u, w, g).q
    dup = penalized_objective_multi(np.column_stack([u, u]), w, g, 0.4)
    assert dup == pytest.approx(math.sqrt(2 * q1) - 0.4 * 1.2, rel=1e-14)


def test_multi_matches_componentwise_oracle():
    o = ORACLES["multi"]
    got = penalized_objective_multi(np.array(o["u"]), np.array(o["w"]), o["gamma"], o["lam"])
    assert got == pytest.approx(o["value"], rel=1e-13)


def test_zero_residuals_are_degenerate():
    with pytest.raises(DegenerateVariance):
        eval_components(np.zeros(5), np.ones((5, 1)), [1.0])
    with pytest.raises(DegenerateVariance):
        Summands(np.zeros(5), np.ones((5, 1)))


@given(st.integers(0, 10_000), st.sampled_from([2.0, -3.0, 1e-6, 7.5e3, -0.01]),
       arrays(np.float64, 3, elements=st.floats(-10, 10)))
def test_q_is_scale_invariant(seed, c, gamma):
    u, w = fixture_data(seed, n=30, p=3)
    a = eval_components(u, w, gamma).q
    b = eval_components(c * u, w, gamma).q
    assert abs(a - b) <= 1e-12 * max(a, 1e-300)


@given(st.integers(0, 10_000), arrays(np.float64, 2, elements=st.floats(-10, 10)),
       st.floats(0, 5), st.floats(0, 5))
def test_q_nonnegative_and_origin_free_of_penalty(seed, gamma, lam1, lam2):
    u, w = fixture_data(seed, n=15, p=2)
    assert eval_components(u, w, gamma).q >= 0.0
    assert penalized_objective(u, w, [0.0, 0.0], lam1) == penalized_objective(u, w, [0.0, 0.0], lam2)


@given(st.integers(0, 10_000), arrays(np.float64, 2, elements=st.floats(-10, 10)))
def test_weights_positive_so_variance_positive(seed, gamma):
    u, w = fixture_data(seed, n=10, p=2)
    u[: 9] = 0.0
    ev = eval_components(u, w, gamma)
    assert ev.s2 > 0.0


def test_extreme_gamma_does_not_overflow():
    u, w = fixture_data(3, n=40, p=2)
    w = w * 100.0
    ev = eval_components(u, w, [10.0, -10.0])
    assert np.isfinite(ev.q)


def test_batch_matches_reference_evaluator():
    u, w = fixture_data(4, n=50, p=3)
    gammas = np.random.default_rng(0).uniform(-10, 10, (1, 64, 3))
    got = BatchObjective(Summands(u, w))(gammas, 0.3)[0]
    want = [penalized_objective(u, w, g, 0.3) for g in gammas[0]]
    assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))


def test_batch_values_do_not_depend_on_batch_composition():
    u, w = fixture_data(5, n=40, p=2)
    rng = np.random.default_rng(1)
    eta = rng.standard_normal((6, 40))
    batch = BatchObjective(Summands(u, w), eta=eta)
    pos = rng.uniform(-10, 10, (6, 7, 2))
    full = batch(pos, 0.2)
    for k in range(6):
        assert np.array_equal(batch(pos[k:k + 1], 0.2, [k])[0], full[k])
        assert np.array_equal(batch(pos[k:k + 1, :3], 0.2, [k])[0], full[k, :3])


def test_penalty_grid_and_box_validation():
    assert PenaltyGrid.from_values([0.2, 1.0, 0.2, 0.5]).values == (1.0, 0.5, 0.2)
    with pytest.raises(ValueError):
        PenaltyGrid((0.2, 0.5))
    with pytest.raises(ValueError):
        PenaltyGrid((1.0, -0.1))
    box = GammaBox.symmetric(3)
    assert box.max_l1() == 30.0
    with pytest.raises(ValueError):
        GammaBox([1.0], [1.0])
