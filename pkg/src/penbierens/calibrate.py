"""Penalty calibration by the max-min rule.

For each penalty the critical value is the bootstrap quantile of the
unshifted replicates; the rejection probability under a local shift ``B``
is the share of shifted replicates above it.  The chosen penalty maximizes
the smallest rejection probability over the shift set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bootstrap import BootstrapConfig, critical_value, replicate_paths, shift_vector
from .kernel import GammaBox, PenaltyGrid, Summands

DEFAULT_LAMBDAS = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2)
DEFAULT_SUBVECTOR_LAMBDAS = (1.0, 0.8, 0.6, 0.4, 0.2, 0.0)
DEFAULT_CALIBRATION_R = 100
EIS_DEFAULT_B = 0.2


class UninformativeWarning(UserWarning):
    """No penalty reaches power above the nominal level."""


@dataclass(frozen=True)
class PowerSurface:
    lambdas: np.ndarray
    b_set: tuple[np.ndarray, ...]
    alpha: float
    reject_prob: np.ndarray
    critical_values: np.ndarray
    R: int
    size: np.ndarray | None = None

    def __post_init__(self):
        rp = np.asarray(self.reject_prob, dtype=float)
        if rp.shape != (len(self.lambdas), len(self.b_set)):
            raise ValueError("reject_prob must be |lambdas| x |B|")
        if np.any(rp < 0) or np.any(rp > 1):
            raise ValueError("rejection probabilities must lie in [0, 1]")

    def rows(self):
        """``(lambda, b_index, B, reject_prob, critical_value)`` tuples."""
        for l, lam in enumerate(self.lambdas):
            for b, bvec in enumerate(self.b_set):
                yield float(lam), b, bvec, float(self.reject_prob[l, b]), float(self.critical_values[l])


@dataclass(frozen=True)
class LambdaChoice:
    lambda_hat: float
    minpower_by_lambda: np.ndarray
    argmin_b_by_lambda: np.ndarray
    informative: bool = True

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "minpower_by_lambda": [float(v) for v in self.minpower_by_lambda],
            "argmin_b_by_lambda": [int(v) for v in self.argmin_b_by_lambda],
            "informative": self.informative,
        }


def power_surface(summands: Summands, g, b_set: Sequence, lambdas, alpha: float,
                  cfg: BootstrapConfig, box: GammaBox | None = None) -> PowerSurface:
    """Bootstrap rejection probabilities over penalties and shifts.

    ``g`` is the ``n x d`` Jacobian block that carries the shift (``G`` for
    full-vector inference, ``G1`` for subvector inference).  All penalty
    levels and shifts share one multiplier table.
    """
    if not isinstance(lambdas, PenaltyGrid):
        lambdas = PenaltyGrid.from_values(np.atleast_1d(lambdas))
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if cfg.R * min(alpha, 1.0 - alpha) < 5:
        raise ValueError("R * min(alpha, 1 - alpha) must be at least 5")
    bvecs = tuple(np.atleast_1d(np.asarray(b, dtype=float)) for b in b_set)
    if not bvecs:
        raise ValueError("shift set is empty")
    n = summands.n
    shifts = np.stack([np.zeros(n)] + [shift_vector(g, b, n) for b in bvecs])
    reps = replicate_paths(summands, lambdas, cfg, box, shifts)
    null = reps[0].stats
    crit = np.array([critical_value(null[:, l], alpha) for l in range(len(lambdas))])
    rp = np.empty((len(lambdas), len(bvecs)))
    for b in range(len(bvecs)):
        rp[:, b] = np.mean(reps[b + 1].stats > crit[None, :], axis=0)
    size = np.mean(null > crit[None, :], axis=0)
    return PowerSurface(np.array(lambdas.values), bvecs, float(alpha), rp, crit, cfg.R, size)


def _choose(lambdas: np.ndarray, reject: np.ndarray, alpha: float) -> LambdaChoice:
    lambdas = np.asarray(lambdas, dtype=float)
    argmin_b = np.argmin(reject, axis=1)
    minpower = reject[np.arange(lambdas.size), argmin_b]
    best = minpower.max()
    # ties go to the largest penalty
    lam_hat = float(lambdas[minpower == best].max())
    informative = bool(best > alpha)
    if not informative:
        warnings.warn(f"max-min power {best:.3f} does not exceed alpha={alpha}", UninformativeWarning,
                      stacklevel=3)
    return LambdaChoice(lam_hat, minpower, argmin_b, informative)


def maxmin_lambda(surface: PowerSurface) -> LambdaChoice:
    """Penalty maximizing the least-favourable rejection probability."""
    return _choose(surface.lambdas, surface.reject_prob, surface.alpha)


def common_maxmin_lambda(surfaces: Sequence[PowerSurface]) -> LambdaChoice:
    """One penalty for a family of surfaces sharing a penalty grid.

    Each hypothesized value contributes its shift columns and the minimum
    is taken over all of them.
    """
    if not surfaces:
        raise ValueError("no surfaces given")
    lam = surfaces[0].lambdas
    for s in surfaces[1:]:
        if not np.array_equal(s.lambdas, lam):
            raise ValueError("surfaces must share the penalty grid")
    reject = np.concatenate([s.reject_prob for s in surfaces], axis=1)
    return _choose(lam, reject, surfaces[0].alpha)


def reduce_b_set(kind: str, u=None, b_set: Sequence | None = None, monotone: bool = True) -> list:
    """Shift set actually evaluated.

    When power is monotone in ``|B|`` (scalar shift, symmetric multipliers)
    only the smallest ``|B|`` matters.  Defaults: the sample standard
    deviation of ``u`` for the mean-zero model and ``0.2`` for the
    Euler-equation model.
    """
    if b_set is not None:
        b_list = [np.atleast_1d(np.asarray(b, dtype=float)) for b in b_set]
        if not monotone or not b_list:
            return [b if b.size > 1 else float(b[0]) for b in b_list]
        if any(b.size > 1 for b in b_list):
            return b_list
        return [float(min(b_list, key=lambda b: abs(b[0]))[0])]
    if kind == "rur":
        if u is None:
            raise ValueError("residuals are required for the default shift")
        return [float(np.std(np.asarray(u, dtype=float), ddof=1))]
    if kind == "eis":
        return [EIS_DEFAULT_B]
    raise ValueError(f"no default shift set for model {kind!r}; supply b_set")
