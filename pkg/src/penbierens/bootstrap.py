"""Multiplier bootstrap for the penalized maximum statistic.

Replication ``r`` draws standard normal multipliers from the Philox
substream keyed by ``(seed, r)``; the same draws are reused at every
penalty level and every shift, so per-replication statistics are
non-increasing in the penalty and surfaces are compared under common
random numbers.  Each replication maximizes its own objective with an
optimizer seed derived from ``(seed, r)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernel import BatchObjective, GammaBox, PenaltyGrid, Summands
from .optimizer import PsoConfig, derive_seed, make_rng, path_batch, path_from_summands

_MULTIPLIER_STREAM = 0
_OPTIMIZER_STREAM = 1


@dataclass(frozen=True)
class BootstrapConfig:
    R: int = 1000
    seed: int = 0
    optimizer: PsoConfig = field(default_factory=PsoConfig)
    multiplier: str = "normal"
    # process count for replicate batches; results do not depend on it
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if self.multiplier != "normal":
            raise ValueError("only standard normal multipliers are supported")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def replicate_seeds(self) -> list[int]:
        return [derive_seed(self.seed, _OPTIMIZER_STREAM, r) for r in range(self.R)]


@dataclass(frozen=True)
class BootstrapOutcome:
    lam: float
    stats: np.ndarray
    observed: float
    p_value: float
    critical_values: dict[float, float]
    gamma_star: np.ndarray | None = None

    @property
    def R(self) -> int:
        return self.stats.size

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        out = {
            "lambda": self.lam,
            "T_n": self.observed,
            "p_value": self.p_value,
            "R": self.R,
            "critical_values": {repr(a): c for a, c in sorted(self.critical_values.items())},
        }
        if self.gamma_star is not None:
            out["gamma_star"] = [float(g) for g in self.gamma_star]
        return out


def draw_multipliers(cfg: BootstrapConfig, r: int, n: int) -> np.ndarray:
    """Standard normal multipliers for replication ``r``; reproducible per ``(seed, r)``."""
    return make_rng(cfg.seed, _MULTIPLIER_STREAM, r).standard_normal(n)


def multiplier_table(cfg: BootstrapConfig, n: int) -> np.ndarray:
    return np.stack([draw_multipliers(cfg, r, n) for r in range(cfg.R)])


def p_value(stats, observed: float) -> float:
    """Share of replicates strictly above the observed statistic."""
    stats = np.asarray(stats, dtype=float)
    return float(np.count_nonzero(stats > observed)) / stats.size


def critical_value(stats, alpha: float) -> float:
    """The ``ceil((1 - alpha) R)``-th order statistic of the replicates."""
    stats = np.sort(np.asarray(stats, dtype=float))
    R = stats.size
    rank = math.ceil((1.0 - alpha) * R - 1e-9)
    rank = min(max(rank, 1), R)
    return float(stats[rank - 1])


def shift_vector(g, b, n: int) -> np.ndarray:
    """Per-unit local-alternative drift ``G_i' B / sqrt(n)``."""
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if g.shape != (n, b.size):
        raise ValueError(f"Jacobian block must be {n} x {b.size}, got {g.shape}")
    return (g @ b) / math.sqrt(n)


def _single(summands: Summands, lam, eta, shift, cfg: PsoConfig, box) -> float:
    box = box or GammaBox.symmetric(summands.p)
    lambdas = PenaltyGrid.from_values(np.atleast_1d(lam))
    batch = BatchObjective(
        summands,
        eta=np.asarray(eta, dtype=float)[None, :],
        eta_idx=[0],
        shift=None if shift is None else np.asarray(shift, dtype=float)[None, :],
        shift_idx=[-1 if shift is None else 0],
    )
    values, _ = path_batch(batch, lambdas, box, cfg, [cfg.seed])
    return float(values[0, -1])


def bootstrap_stat(u, w, lam: float, box: GammaBox | None, eta, optimizer_cfg: PsoConfig) -> float:
    """One multiplier-bootstrap draw of the penalized maximum statistic."""
    return _single(Summands(u, w), lam, eta, None, optimizer_cfg, box)


def shifted_bootstrap_stat(u, g, b, w, lam: float, eta, optimizer_cfg: PsoConfig,
                           box: GammaBox | None = None) -> float:
    """Bootstrap draw under the local shift ``eta_i u_i + G_i' B / sqrt(n)``."""
    u = np.asarray(u, dtype=float)
    return _single(Summands(u, w), lam, eta, shift_vector(g, b, u.size), optimizer_cfg, box)


def subvector_bootstrap_stat(u_hat, eta_hat, g2_hat, w, lam: float, eta,
                             optimizer_cfg: PsoConfig, box: GammaBox | None = None) -> float:
    """Bootstrap draw with the plug-in correction ``eta_hat_i' mean_j(G2_j e_j)``."""
    return _single(Summands(u_hat, w, eta_hat, g2_hat), lam, eta, None, optimizer_cfg, box)


def subvector_shifted_stat(u_hat, eta_hat, g2_hat, g1_hat, b, w, lam: float, eta,
                           optimizer_cfg: PsoConfig, box: GammaBox | None = None) -> float:
    """Corrected bootstrap draw plus the drift ``B' G1_i / sqrt(n)`` per unit."""
    u_hat = np.asarray(u_hat, dtype=float)
    shift = shift_vector(g1_hat, b, u_hat.size)
    return _single(Summands(u_hat, w, eta_hat, g2_hat), lam, eta, shift, optimizer_cfg, box)


def demeaned_objective(u_hat, w, eta, lam: float):
    """Vectorized objective for the demeaned-weight bootstrap.

    Summand ``eta_t u_t (e_t - mean e)``; this is the corrected bootstrap
    specialised to an intercept nuisance, written out directly.
    """
    u_hat = np.asarray(u_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    eta = np.asarray(eta, dtype=float)
    n = u_hat.size

    def f(gammas):
        gammas = np.atleast_2d(gammas)
        lin = gammas @ w.T
        e = np.exp(lin - lin.max(axis=1, keepdims=True))
        z = eta * u_hat * (e - e.mean(axis=1, keepdims=True))
        m = z.mean(axis=1)
        s2 = (z * z).mean(axis=1)
        q = np.where(s2 > 0, n * m * m / np.where(s2 > 0, s2, 1.0), 0.0)
        return np.sqrt(q) - lam * np.abs(gammas).sum(axis=1)

    return f


@dataclass(frozen=True)
class ReplicatePaths:
    """Replicate statistics for every penalty level, shape ``(R, L)``."""

    lambdas: PenaltyGrid
    stats: np.ndarray
    argmax: np.ndarray


def _paths_slice(summands, eta, eta_idx, shift, shift_idx, lambdas, box, opt, seeds):
    batch = BatchObjective(summands, eta=eta, eta_idx=eta_idx, shift=shift, shift_idx=shift_idx)
    return path_batch(batch, lambdas, box, opt, seeds)


def _chunked_paths(summands, eta, eta_idx, shift, shift_idx, lambdas, box, opt, seeds, workers):
    K = len(seeds)
    if workers <= 1 or K < 2:
        return _paths_slice(summands, eta, eta_idx, shift, shift_idx, lambdas, box, opt, seeds)
    bounds = np.linspace(0, K, min(workers, K) + 1).astype(int)
    jobs = [(summands, eta, eta_idx[a:b], shift, shift_idx[a:b], lambdas, box, opt, seeds[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=len(jobs)) as ex:
        parts = list(ex.map(_paths_slice, *zip(*jobs)))
    return np.concatenate([v for v, _ in parts]), np.concatenate([x for _, x in parts])


def replicate_paths(summands: Summands, lambdas, cfg: BootstrapConfig, box: GammaBox | None = None,
                    shifts: np.ndarray | None = None) -> list[ReplicatePaths]:
    """Bootstrap paths for each shift row (``None`` means no shift).

    Returns one :class:`ReplicatePaths` per shift row, all computed from
    the same multiplier table and replicate optimizer seeds.
    """
    if not isinstance(lambdas, PenaltyGrid):
        lambdas = PenaltyGrid.from_values(np.atleast_1d(lambdas))
    box = box or GammaBox.symmetric(summands.p)
    eta = multiplier_table(cfg, summands.n)
    seeds = cfg.replicate_seeds()
    R = cfg.R
    if shifts is None:
        nshift = 1
        shift_idx = np.full(R, -1)
        shift_arr = None
    else:
        shift_arr = np.atleast_2d(np.asarray(shifts, dtype=float))
        nshift = shift_arr.shape[0]
        shift_idx = np.repeat(np.arange(nshift), R)
    eta_idx = np.tile(np.arange(R), nshift)
    values, argmax = _chunked_paths(summands, eta, eta_idx, shift_arr, shift_idx, lambdas, box,
                                    cfg.optimizer, seeds * nshift, cfg.workers)
    return [
        ReplicatePaths(lambdas, values[b * R:(b + 1) * R], argmax[b * R:(b + 1) * R])
        for b in range(nshift)
    ]


def run_bootstrap(summands: Summands, lambdas, cfg: BootstrapConfig, alphas: Sequence[float] = (0.05, 0.1),
                  box: GammaBox | None = None) -> list[BootstrapOutcome]:
    """Observed statistic, replicate statistics, p-value and critical values per penalty.

    The observed path uses ``cfg.optimizer.seed``; replicate ``r`` uses
    multipliers and an optimizer seed derived from ``(cfg.seed, r)``.
    """
    if not isinstance(lambdas, PenaltyGrid):
        lambdas = PenaltyGrid.from_values(np.atleast_1d(lambdas))
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
    box = box or GammaBox.symmetric(summands.p)
    observed = path_from_summands(summands, lambdas, box, cfg.optimizer)
    reps = replicate_paths(summands, lambdas, cfg, box)[0]
    out = []
    for l, entry in enumerate(observed.entries):
        stats = reps.stats[:, l].copy()
        out.append(BootstrapOutcome(
            lam=entry.lam,
            stats=stats,
            observed=entry.t,
            p_value=p_value(stats, entry.t),
            critical_values={float(a): critical_value(stats, a) for a in alphas},
            gamma_star=entry.gamma_star,
        ))
    return out
