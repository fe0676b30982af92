import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from penbierens.bootstrap import (BootstrapConfig, bootstrap_stat, critical_value, demeaned_objective,
                                  draw_multipliers, multiplier_table, p_value, replicate_paths, run_bootstrap,
                                  shift_vector, shifted_bootstrap_stat, subvector_bootstrap_stat,
                                  subvector_shifted_stat)
from penbierens.kernel import BatchObjective, GammaBox, PenaltyGrid, Summands
from penbierens.model import transform_instruments
from penbierens.optimizer import PsoConfig, make_rng, path_from_summands

from _oracles import ORACLES
from conftest import fixture_data

FAST = PsoConfig(swarm_size=12, max_iters=80, seed=3)


def test_multipliers_reproducible_and_distinct():
    cfg = BootstrapConfig(R=3, seed=12)
    a = draw_multipliers(cfg, 1, 50)
    assert np.array_equal(a, draw_multipliers(cfg, 1, 50))
    assert not np.array_equal(a, draw_multipliers(cfg, 2, 50))


def test_pooled_multipliers_are_standard_normal():
    draws = multiplier_table(BootstrapConfig(R=1000, seed=5), 1000).ravel()
    se = 1.0 / math.sqrt(draws.size)
    assert abs(draws.mean()) <= 4 * se
    # var of a sample variance of normals is 2 / N
    assert abs(draws.var() - 1.0) <= 4 * math.sqrt(2.0) * se


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_unit_multipliers_reproduce_the_statistic(sign):
    u, w = fixture_data(21, n=40, p=2, signal=0.3)
    observed = path_from_summands(Summands(u, w), [0.3], GammaBox.symmetric(2), FAST).entries[0].t
    assert bootstrap_stat(u, w, 0.3, None, sign * np.ones(40), FAST) == observed


def test_bootstrap_quantile_matches_gaussian_process_limit():
    o = ORACLES["gp_quantile"]
    rng = np.random.default_rng(o["seed"])
    raw = rng.standard_normal(o["n"])
    u = rng.standard_normal(o["n"])
    w = transform_instruments(raw[:, None]).values
    R = 1000
    cfg = BootstrapConfig(R=R, seed=1, optimizer=PsoConfig(swarm_size=10, seed=1))
    stats = np.sort(replicate_paths(Summands(u, w), [o["lam"]], cfg)[0].stats[:, 0])
    # distribution-free 99.7% band for the 90th percentile from binomial order statistics
    half = 3 * math.sqrt(R * 0.9 * 0.1)
    lo, hi = stats[int(0.9 * R - half) - 1], stats[int(0.9 * R + half)]
    assert lo <= o["q90"] <= hi


def test_shift_at_zero_is_plain_bootstrap():
    u, w = fixture_data(22, n=30, p=2)
    eta = make_rng(1, 1).standard_normal(30)
    g = -np.ones(30)
    assert shifted_bootstrap_stat(u, g, 0.0, w, 0.2, eta, FAST) == bootstrap_stat(u, w, 0.2, None, eta, FAST)


def test_rur_shift_summand():
    # unit Jacobian and B = sd(U): summand (eta U + sd / sqrt(n)) e
    u, w = fixture_data(23, n=30, p=2)
    eta = make_rng(1, 2).standard_normal(30)
    sd = np.std(u, ddof=1)
    shift = shift_vector(np.ones(30), sd, 30)
    assert np.allclose(shift, sd / math.sqrt(30), rtol=1e-15, atol=0)
    batch = BatchObjective(Summands(u, w), eta=eta[None], eta_idx=[0], shift=shift[None], shift_idx=[0])
    gammas = make_rng(1, 3).uniform(-10, 10, (40, 2))
    got = batch(gammas[None], 0.2)[0]
    e = np.exp(gammas @ w.T)
    z = (eta * u + sd / math.sqrt(30)) * e
    want = np.sqrt(30 * z.mean(1) ** 2 / (z * z).mean(1)) - 0.2 * np.abs(gammas).sum(1)
    assert np.max(np.abs(got - want) / np.abs(want)) <= 1e-12


def test_mean_statistic_grows_with_shift():
    u, w = fixture_data(24, n=40, p=1)
    sd = np.std(u, ddof=1)
    cfg = BootstrapConfig(R=200, seed=4, optimizer=PsoConfig(swarm_size=10, seed=4))
    shifts = np.stack([shift_vector(np.ones(40), k * sd, 40) for k in (0, 1, 2)])
    means = [r.stats.mean() for r in replicate_paths(Summands(u, w), [0.2], cfg, shifts=shifts)]
    assert means[0] < means[1] < means[2]


def test_zero_correction_is_plain_bootstrap():
    u, w = fixture_data(25, n=30, p=2)
    eta = make_rng(1, 4).standard_normal(30)
    got = subvector_bootstrap_stat(u, np.zeros((30, 1)), -np.ones((30, 1)), w, 0.2, eta, FAST)
    assert got == bootstrap_stat(u, w, 0.2, None, eta, FAST)


def test_generic_correction_matches_demeaned_specialization():
    u, w = fixture_data(26, n=45, p=2)
    u_hat = u - u.mean()
    gammas = make_rng(2, 0).uniform(-10, 10, (100, 2))
    for r in range(5):
        eta = make_rng(2, 1, r).standard_normal(45)
        batch = BatchObjective(Summands(u_hat, w, u_hat[:, None], -np.ones((45, 1))), eta=eta[None], eta_idx=[0])
        a = batch(gammas[None], 0.3)[0]
        b = demeaned_objective(u_hat, w, eta, 0.3)(gammas)
        assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-12


def test_constant_influence_correction_reference():
    o = ORACLES["constant_correction"]
    n = 3
    s = Summands(np.array(o["u"]), np.array(o["w"]), np.full((n, 1), o["c"]), np.array(o["g2"])[:, None])
    batch = BatchObjective(s, eta=np.array(o["eta"])[None], eta_idx=[0])
    got = batch(np.array(o["gamma"]).reshape(1, 1, 1), o["lam"])[0, 0]
    assert got == pytest.approx(o["value"], rel=1e-12)


def test_shift_only_reference():
    o = ORACLES["shift_only"]
    r = np.array(o["r"])
    w = np.array(o["w"])
    shift = shift_vector(-r, o["b"], 3)
    s = Summands(np.array([1.0, -1.0, 0.5]), w)
    batch = BatchObjective(s, eta=np.zeros((1, 3)), eta_idx=[0], shift=shift[None], shift_idx=[0])
    got = batch(np.array(o["gammas"]).reshape(1, -1, 1), o["lam"])[0]
    assert np.max(np.abs(got - o["values"])) <= 1e-12
    stat = subvector_shifted_stat(np.array([1.0, -1.0, 0.5]), np.zeros((3, 1)), -np.ones((3, 1)), -r, o["b"], w,
                                  o["lam"], np.zeros(3), PsoConfig(seed=0))
    assert stat >= o["grid_max"] - 1e-6
    assert stat - o["grid_max"] <= 1e-5


def test_eis_shifted_formula():
    rng = make_rng(3, 0)
    n = 40
    w = transform_instruments(rng.standard_normal((n, 2))).values
    r = 0.05 * rng.standard_normal(n)
    u_hat = rng.standard_normal(n)
    u_hat -= u_hat.mean()
    eta = rng.standard_normal(n)
    b = 0.2
    shift = shift_vector(-r, b, n)
    s = Summands(u_hat, w, u_hat[:, None], -np.ones((n, 1)))
    batch = BatchObjective(s, eta=eta[None], eta_idx=[0], shift=shift[None], shift_idx=[0])
    gammas = rng.uniform(-10, 10, (50, 2))
    got = batch(gammas[None], 0.1)[0]
    e = np.exp(gammas @ w.T)
    z = eta * u_hat * (e - e.mean(1, keepdims=True)) - (b * r / math.sqrt(n)) * e
    root_q = np.sqrt(n * z.mean(1) ** 2 / (z * z).mean(1))
    got_root_q = got + 0.1 * np.abs(gammas).sum(1)
    assert np.max(np.abs(got_root_q - root_q) / root_q) <= 1e-12
    # B = 0 reduces to the corrected statistic
    assert subvector_shifted_stat(u_hat, u_hat[:, None], -np.ones((n, 1)), -r, 0.0, w, 0.1, eta, FAST) == \
        subvector_bootstrap_stat(u_hat, u_hat[:, None], -np.ones((n, 1)), w, 0.1, eta, FAST)


def test_p_value_and_critical_value():
    assert p_value([1, 2, 3, 4], 2.5) == 0.5
    assert p_value([1, 2, 3, 4], 5) == 0.0
    assert p_value([1, 2, 3, 4], 0) == 1.0
    stats = np.arange(10.0, 0.0, -1.0)
    assert critical_value(stats, 0.1) == 9.0


@given(st.lists(st.floats(-5, 5), min_size=5, max_size=60), st.floats(0.01, 0.5))
def test_rejection_agrees_with_critical_value(stats, alpha):
    # the observed statistic exceeds c* exactly when fewer than alpha R replicates exceed it
    stats = np.array(stats)
    c = critical_value(stats, alpha)
    assert p_value(stats, c) <= alpha + 1e-12


def test_common_draws_and_replicate_monotonicity():
    u, w = fixture_data(27, n=40, p=2, signal=0.2)
    lams = PenaltyGrid((1.0, 0.6, 0.3, 0.0))
    cfg = BootstrapConfig(R=30, seed=8, optimizer=FAST)
    plain = replicate_paths(Summands(u, w), lams, cfg)[0]
    zero_shift = replicate_paths(Summands(u, w), lams, cfg, shifts=np.zeros((2, 40)))
    for rp in zero_shift:
        assert np.array_equal(rp.stats, plain.stats)
    assert np.all(np.diff(plain.stats, axis=1) >= 0)


def test_outcome_is_invariant_to_worker_count():
    u, w = fixture_data(28, n=40, p=2, signal=0.2)
    lams = PenaltyGrid((1.0, 0.3))
    a = run_bootstrap(Summands(u, w), lams, BootstrapConfig(R=20, seed=2, optimizer=FAST, workers=1))
    b = run_bootstrap(Summands(u, w), lams, BootstrapConfig(R=20, seed=2, optimizer=FAST, workers=3))
    for x, y in zip(a, b):
        assert x.to_dict() == y.to_dict()
        assert np.array_equal(x.stats, y.stats)
