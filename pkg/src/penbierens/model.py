"""Data container, moment models and the instrument transform.

A moment model maps a dataset and a parameter vector to the residual
vector ``u_i = g(x_i, theta)`` together with its Jacobian.  Residuals are
computed on the whole dataset at once; every built-in model is row-local.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteInput, NonFiniteResidual, PluginFailure, ZeroVarianceColumn

#: degrees of freedom used for the studentizing standard deviation
STUDENTIZE_DDOF = 1


@dataclass(frozen=True)
class Dataset:
    """Row-aligned instrument and outcome matrices."""

    instruments: np.ndarray
    outcomes: np.ndarray
    column_names: tuple[str, ...] = ()
    dropped: int = 0

    def __post_init__(self):
        w = np.array(self.instruments, dtype=float, copy=True)
        y = np.array(self.outcomes, dtype=float, copy=True)
        if w.ndim == 1:
            w = w[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if w.ndim != 2 or y.ndim != 2:
            raise ValueError("instruments and outcomes must be 2-d")
        if w.shape[0] != y.shape[0]:
            raise ValueError(f"row mismatch: {w.shape[0]} instruments vs {y.shape[0]} outcomes")
        if w.shape[0] < 2 or w.shape[1] < 1 or y.shape[1] < 1:
            raise ValueError("need n >= 2, p >= 1 and k >= 1")
        if not (np.isfinite(w).all() and np.isfinite(y).all()):
            raise NonFiniteInput("dataset contains non-finite entries")
        w.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "instruments", w)
        object.__setattr__(self, "outcomes", y)
        names = tuple(self.column_names)
        if not names:
            names = tuple(f"w{j}" for j in range(w.shape[1])) + tuple(
                f"y{j}" for j in range(y.shape[1])
            )
        if len(names) != w.shape[1] + y.shape[1]:
            raise ValueError("column_names must list p + k labels")
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.instruments.shape[0]

    @property
    def p(self) -> int:
        return self.instruments.shape[1]

    @property
    def k(self) -> int:
        return self.outcomes.shape[1]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.instruments[rows], self.outcomes[rows], self.column_names)

    def with_outcomes(self, outcomes: np.ndarray) -> "Dataset":
        return Dataset(self.instruments, outcomes, self.column_names, self.dropped)


@dataclass(frozen=True)
class TransformedInstruments:
    """Studentized and arctan-bounded instruments."""

    values: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    ddof: int = STUDENTIZE_DDOF

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Transform new rows with the recorded center and scale."""
        raw = np.asarray(raw, dtype=float)
        return np.arctan((raw - self.center) / self.scale)


def transform_instruments(raw: np.ndarray, ddof: int = STUDENTIZE_DDOF) -> TransformedInstruments:
    """Studentize each column and map it through ``arctan``.

    Every entry of the result lies strictly inside ``(-pi/2, pi/2)``.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.isfinite(x).all():
        raise NonFiniteInput("instrument matrix contains NaN or infinite entries")
    if x.shape[0] < 2:
        raise ValueError("need at least two rows to studentize")
    center = x.mean(axis=0)
    scale = x.std(axis=0, ddof=ddof)
    for j, s in enumerate(scale):
        if not s > 0.0:
            raise ZeroVarianceColumn(j)
    values = np.arctan((x - center) / scale)
    return TransformedInstruments(values=values, center=center, scale=scale, ddof=ddof)


@dataclass(frozen=True)
class PluginEstimator:
    """Prior estimator of the nuisance block given the tested block.

    ``estimate(data, theta1)`` returns the nuisance vector and
    ``influence(data, theta1)`` returns the ``n x d2`` matrix of estimated
    influence-function values, one row per observation.
    """

    estimate: Callable[[Dataset, np.ndarray], np.ndarray]
    influence: Callable[[Dataset, np.ndarray], np.ndarray]
    name: str = "plugin"


class MomentModel:
    """Residual map with analytic Jacobian.

    Subclasses implement :meth:`residual` and :meth:`jacobian` on the whole
    dataset.  ``d1`` is the size of the tested block; the remaining
    ``d - d1`` coordinates are nuisance parameters profiled out by
    ``plugin``.
    """

    name = "moment"
    d: int = 1
    d1: int = 1
    plugin: PluginEstimator | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @property
    def d2(self) -> int:
        return self.d - self.d1

    def residual(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def split(self, theta) -> tuple[np.ndarray, np.ndarray]:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return theta[: self.d1], theta[self.d1 :]

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.d,):
            raise ValueError(f"{self.name}: expected theta of length {self.d}, got {theta.shape}")
        if self.lower is not None and np.any(theta < self.lower):
            raise ValueError(f"{self.name}: theta below parameter box")
        if self.upper is not None and np.any(theta > self.upper):
            raise ValueError(f"{self.name}: theta above parameter box")
        return theta


class RurModel(MomentModel):
    """Mean-zero residual model ``g = u - theta``.

    With two outcome columns the raw residual is their difference, as in a
    test of unbiased reporting ``E[A - D | W] = 0``.  The Jacobian is
    ``-1`` for every row.
    """

    name = "rur"
    d = 1
    d1 = 1

    def raw(self, data: Dataset) -> np.ndarray:
        y = data.outcomes
        if y.shape[1] == 1:
            return y[:, 0]
        return y[:, 0] - y[:, 1]

    def residual(self, data, theta):
        theta = self.check_theta(theta)
        return self.raw(data) - theta[0]

    def jacobian(self, data, theta):
        self.check_theta(theta)
        return -np.ones((data.n, 1))


def _eis_estimate(data: Dataset, theta1: np.ndarray) -> np.ndarray:
    dc = data.outcomes[:, 0]
    r = data.outcomes[:, 1]
    return np.array([dc.mean() - theta1[0] * r.mean()])


def _eis_influence(data: Dataset, theta1: np.ndarray) -> np.ndarray:
    return demeaned_residual(data, theta1[0])[:, None]


def demeaned_residual(data: Dataset, theta1: float) -> np.ndarray:
    """``(dc - mean dc) - theta1 * (r - mean r)`` for the EIS layout."""
    dc = data.outcomes[:, 0]
    r = data.outcomes[:, 1]
    return (dc - dc.mean()) - theta1 * (r - r.mean())


DEMEANING_PLUGIN = PluginEstimator(_eis_estimate, _eis_influence, name="demeaning")


class EisModel(MomentModel):
    """Euler-equation residual ``dc - theta2 - theta1 * r``.

    Outcome columns are ``(dc, r)``.  ``theta1`` is the tested slope and the
    intercept ``theta2`` is profiled out by demeaning.
    """

    name = "eis"
    d = 2
    d1 = 1
    plugin = DEMEANING_PLUGIN

    def residual(self, data, theta):
        theta = self.check_theta(theta)
        dc = data.outcomes[:, 0]
        r = data.outcomes[:, 1]
        return dc - theta[1] - theta[0] * r

    def jacobian(self, data, theta):
        self.check_theta(theta)
        r = data.outcomes[:, 1]
        return np.column_stack([-r, -np.ones(data.n)])


class LinearModel(MomentModel):
    """Linear residual ``y - X theta`` built from outcome columns.

    ``outcome`` indexes ``y`` among the outcome columns and ``regressors``
    index the columns of ``X``.  With ``intercept=True`` a constant is
    appended as the last parameter and, when ``d1`` leaves only that
    constant as nuisance, it is profiled out by demeaning.
    """

    name = "linear"

    def __init__(self, outcome: int = 0, regressors: Sequence[int] = (1,), intercept: bool = False,
                 d1: int | None = None):
        self.outcome = int(outcome)
        self.regressors = tuple(int(j) for j in regressors)
        self.intercept = bool(intercept)
        self.d = len(self.regressors) + int(self.intercept)
        if self.d < 1:
            raise ValueError("linear model needs at least one parameter")
        self.d1 = self.d if d1 is None else int(d1)
        if not 1 <= self.d1 <= self.d:
            raise ValueError("d1 must lie in [1, d]")
        if self.d1 < self.d:
            if not (self.intercept and self.d1 == self.d - 1):
                raise ValueError("only the intercept can be profiled out of a linear model")
            self.plugin = PluginEstimator(self._estimate, self._influence, name="intercept")

    def design(self, data: Dataset) -> np.ndarray:
        x = data.outcomes[:, list(self.regressors)]
        if self.intercept:
            x = np.column_stack([x, np.ones(data.n)])
        return x

    def residual(self, data, theta):
        theta = self.check_theta(theta)
        return data.outcomes[:, self.outcome] - self.design(data) @ theta

    def jacobian(self, data, theta):
        self.check_theta(theta)
        return -self.design(data)

    def _estimate(self, data, theta1):
        x = data.outcomes[:, list(self.regressors)]
        return np.array([np.mean(data.outcomes[:, self.outcome] - x @ theta1)])

    def _influence(self, data, theta1):
        x = data.outcomes[:, list(self.regressors)]
        g1 = data.outcomes[:, self.outcome] - x @ theta1
        return (g1 - g1.mean())[:, None]


MODELS = {"rur": RurModel, "eis": EisModel, "linear": LinearModel}


def make_model(spec: dict | str) -> MomentModel:
    """Build a model from its config entry, e.g. ``{"id": "linear", ...}``."""
    if isinstance(spec, str):
        spec = {"id": spec}
    spec = dict(spec)
    kind = spec.pop("id")
    for key in ("theta", "theta1", "theta_grid", "calibration_points"):
        spec.pop(key, None)
    if kind not in MODELS:
        raise ValueError(f"unknown model {kind!r}; choose from {sorted(MODELS)}")
    return MODELS[kind](**spec)


def residuals(model: MomentModel, data: Dataset, theta) -> np.ndarray:
    """Residual vector ``g(x_i, theta)``; raises on any non-finite entry."""
    u = np.asarray(model.residual(data, theta), dtype=float)
    bad = np.flatnonzero(~np.isfinite(u.reshape(u.shape[0], -1)).all(axis=1))
    if bad.size:
        raise NonFiniteResidual(int(bad[0]))
    return u


def gradient_check(model: MomentModel, data: Dataset, theta) -> float:
    """Largest relative gap between the analytic and central-difference Jacobian."""
    theta = model.check_theta(theta)
    analytic = np.asarray(model.jacobian(data, theta), dtype=float).reshape(data.n, -1)
    worst = 0.0
    for j in range(theta.size):
        h = 1e-6 * (1.0 + abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        fd = (model.residual(data, up) - model.residual(data, dn)) / (2.0 * h)
        err = np.abs(analytic[:, j] - fd) / (1.0 + np.abs(analytic[:, j]))
        worst = max(worst, float(err.max()))
    return worst


def plugin_estimate(model: MomentModel, data: Dataset, theta1) -> np.ndarray:
    if model.plugin is None:
        return np.zeros(0)
    try:
        est = np.atleast_1d(np.asarray(model.plugin.estimate(data, np.atleast_1d(theta1)), dtype=float))
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise PluginFailure(f"{model.plugin.name} estimate failed: {exc}") from exc
    if est.shape != (model.d2,) or not np.isfinite(est).all():
        raise PluginFailure(f"{model.plugin.name} returned {est!r}, expected {model.d2} finite values")
    return est
