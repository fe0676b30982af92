"""Inference on the tested block of parameters with the nuisance block
profiled out by a plug-in estimator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bootstrap import BootstrapConfig, BootstrapOutcome, run_bootstrap
from .calibrate import PowerSurface, power_surface
from .errors import PluginFailure
from .kernel import GammaBox, Summands
from .model import Dataset, MomentModel, plugin_estimate, residuals


@dataclass(frozen=True)
class SubvectorProblem:
    theta1: np.ndarray
    model: MomentModel

    def __post_init__(self):
        t1 = np.atleast_1d(np.asarray(self.theta1, dtype=float))
        if t1.size != self.model.d1:
            raise ValueError(f"theta1 must have {self.model.d1} entries")
        if self.model.d2 > 0 and self.model.plugin is None:
            raise ValueError("model has nuisance parameters but no plug-in estimator")
        object.__setattr__(self, "theta1", t1)


@dataclass(frozen=True)
class CorrectedInputs:
    u_hat: np.ndarray
    eta_hat: np.ndarray
    g1_hat: np.ndarray
    g2_hat: np.ndarray
    theta2_hat: np.ndarray

    def summands(self, w) -> Summands:
        if self.eta_hat.shape[1] == 0:
            return Summands(self.u_hat, w)
        return Summands(self.u_hat, w, self.eta_hat, self.g2_hat)


def corrected_inputs(problem: SubvectorProblem, data: Dataset) -> CorrectedInputs:
    """Residuals at ``(theta1, theta2_hat(theta1))`` with influence values and Jacobian blocks."""
    model = problem.model
    theta1 = problem.theta1
    theta2 = plugin_estimate(model, data, theta1)
    theta = np.concatenate([theta1, theta2])
    u_hat = residuals(model, data, theta)
    jac = np.asarray(model.jacobian(data, theta), dtype=float).reshape(data.n, model.d)
    if model.d2 > 0:
        try:
            eta_hat = np.asarray(model.plugin.influence(data, theta1), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise PluginFailure(f"{model.plugin.name} influence failed: {exc}") from exc
        eta_hat = eta_hat.reshape(data.n, model.d2)
        if not np.isfinite(eta_hat).all():
            raise PluginFailure("influence values are not finite")
    else:
        eta_hat = np.zeros((data.n, 0))
    return CorrectedInputs(u_hat, eta_hat, jac[:, :model.d1], jac[:, model.d1:], theta2)


def subvector_test(problem: SubvectorProblem, data: Dataset, w, lambdas, cfg: BootstrapConfig,
                   alphas: Sequence[float] = (0.05, 0.1), box: GammaBox | None = None
                   ) -> list[BootstrapOutcome]:
    """Corrected multiplier-bootstrap test of ``theta1`` at each penalty."""
    ci = corrected_inputs(problem, data)
    return run_bootstrap(ci.summands(w), lambdas, cfg, alphas, box)


def subvector_power_surface(problem: SubvectorProblem, data: Dataset, w, b_set, lambdas,
                            alpha: float, cfg: BootstrapConfig, box: GammaBox | None = None,
                            shift_block: np.ndarray | None = None) -> PowerSurface:
    """Power surface for the corrected statistic with drift ``B' G1_i / sqrt(n)``.

    ``shift_block`` replaces ``G1`` when it depends on the unknown true
    value; pass a column of ones to restrict the drift to a constant.
    """
    ci = corrected_inputs(problem, data)
    g1 = ci.g1_hat if shift_block is None else np.asarray(shift_block, dtype=float).reshape(data.n, -1)
    return power_surface(ci.summands(w), g1, b_set, lambdas, alpha, cfg, box)
