"""Confidence sets by inverting pointwise bootstrap tests over a grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bootstrap import BootstrapConfig
from .errors import BadGrid
from .kernel import GammaBox
from .model import Dataset, MomentModel
from .subvector import SubvectorProblem, subvector_test


@dataclass(frozen=True)
class ThetaGrid:
    points: np.ndarray
    step: float


@dataclass(frozen=True)
class CiResult:
    grid: np.ndarray
    p_values: np.ndarray
    alpha: float
    accepted: np.ndarray
    interval: tuple[float, float] | None
    convex: bool

    @property
    def empty(self) -> bool:
        return self.interval is None

    def covers(self, value: float, tol: float = 1e-9) -> bool:
        if self.interval is None:
            return False
        return self.interval[0] - tol <= value <= self.interval[1] + tol

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "interval": None if self.interval is None else list(self.interval),
            "convex": self.convex,
            "empty": self.empty,
            "grid": [float(g) for g in self.grid],
            "p_values": [float(p) for p in self.p_values],
            "accepted": [bool(a) for a in self.accepted],
        }


def theta_grid(lo: float, hi: float, step: float) -> ThetaGrid:
    """Inclusive grid from ``lo`` to ``hi`` built from a point count.

    The count is ``ceil((hi - lo) / step) + 1`` so both endpoints are hit
    exactly; the realized spacing is returned alongside.
    """
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise BadGrid("grid bounds and step must be finite")
    if not lo < hi or not step > 0:
        raise BadGrid(f"need lo < hi and step > 0, got ({lo}, {hi}, {step})")
    intervals = math.ceil((hi - lo) / step - 1e-9)
    pts = np.linspace(lo, hi, intervals + 1)
    return ThetaGrid(pts, (hi - lo) / intervals)


def invert_ci(test: Callable[[float], float] | Sequence[float], grid, alpha: float) -> CiResult:
    """Accept every grid value whose p-value is at least ``alpha``.

    ``test`` is either a callable returning the p-value at a hypothesized
    value or a precomputed sequence of p-values aligned with ``grid``.
    The interval is the hull of the accepted points; ``convex`` is false
    when the accepted points do not form one contiguous run.
    """
    grid = np.asarray(getattr(grid, "points", grid), dtype=float)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise BadGrid("grid must be strictly increasing with at least two points")
    if callable(test):
        pv = np.array([float(test(g)) for g in grid])
    else:
        pv = np.asarray(test, dtype=float)
        if pv.shape != grid.shape:
            raise ValueError("p-values must align with the grid")
    accepted = pv >= alpha
    idx = np.flatnonzero(accepted)
    if idx.size == 0:
        return CiResult(grid, pv, alpha, accepted, None, True)
    convex = bool(idx[-1] - idx[0] + 1 == idx.size)
    return CiResult(grid, pv, alpha, accepted, (float(grid[idx[0]]), float(grid[idx[-1]])), convex)


def subvector_pvalues(model: MomentModel, data: Dataset, w, grid, lam: float, cfg: BootstrapConfig,
                      box: GammaBox | None = None) -> tuple[np.ndarray, list]:
    """p-values of the corrected test at each grid value of the tested scalar.

    Every grid point reuses the same multiplier draws.
    """
    grid = np.asarray(getattr(grid, "points", grid), dtype=float)
    pvals = np.empty(grid.size)
    outcomes = []
    for i, t in enumerate(grid):
        res = subvector_test(SubvectorProblem(np.array([t]), model), data, w, [lam], cfg, box=box)[0]
        pvals[i] = res.p_value
        outcomes.append(res)
    return pvals, outcomes


def subvector_ci(model: MomentModel, data: Dataset, w, grid, lam: float, cfg: BootstrapConfig,
                 alpha: float = 0.05, box: GammaBox | None = None) -> CiResult:
    pvals, _ = subvector_pvalues(model, data, w, grid, lam, cfg, box)
    return invert_ci(pvals, grid, alpha)
