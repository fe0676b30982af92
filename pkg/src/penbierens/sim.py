"""Synthetic designs and Monte Carlo drivers for size, power and coverage.

``linear_iv`` draws ``Z ~ N(0, I_p)``, ``v, e ~ N(0, 1)`` independently and
sets ``x = rho * Z_1 + sqrt(1 - rho**2) * v`` and
``y = intercept + theta_true * x + noise_sd * e``.  Only the first
instrument is relevant.  ``null_mds`` draws ``u ~ N(0, noise_sd**2)``
independent of the instruments.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .bootstrap import BootstrapConfig, run_bootstrap
from .calibrate import DEFAULT_SUBVECTOR_LAMBDAS, common_maxmin_lambda
from .infer import invert_ci, subvector_pvalues, theta_grid
from .kernel import GammaBox, PenaltyGrid, Summands
from .model import Dataset, EisModel, transform_instruments
from .optimizer import PsoConfig, derive_seed, make_rng
from .subvector import SubvectorProblem, subvector_power_surface

DGP_KINDS = ("null_mds", "linear_iv")
#: lighter swarm for Monte Carlo loops, where thousands of paths are solved
DESK_OPTIMIZER = PsoConfig(swarm_size=20)
#: distance between the true and the hypothesized slope in power runs
DEFAULT_POWER_OFFSET = 0.1


@dataclass(frozen=True)
class DgpSpec:
    kind: str = "linear_iv"
    n: int = 1000
    p: int = 2
    relevance: float = 0.9
    theta_true: float = 0.0
    noise_sd: float = 1.0
    seed: int = 0
    intercept: float = 0.0

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise ValueError(f"kind must be one of {DGP_KINDS}")
        if self.n < 10 or self.p < 1:
            raise ValueError("need n >= 10 and p >= 1")
        if not abs(self.relevance) < 1:
            raise ValueError("relevance must lie in (-1, 1)")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")


def generate(spec: DgpSpec) -> Dataset:
    rng = make_rng(spec.seed, 7)
    z = rng.standard_normal((spec.n, spec.p))
    names = tuple(f"z{j + 1}" for j in range(spec.p))
    if spec.kind == "null_mds":
        u = spec.noise_sd * rng.standard_normal(spec.n)
        return Dataset(z, u[:, None], names + ("u",))
    v = rng.standard_normal(spec.n)
    e = rng.standard_normal(spec.n)
    rho = spec.relevance
    x = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * v
    y = spec.intercept + spec.theta_true * x + spec.noise_sd * e
    return Dataset(z, np.column_stack([y, x]), names + ("y", "x"))


@dataclass(frozen=True)
class McTest:
    """Bootstrap test settings used inside a Monte Carlo run."""

    lambdas: tuple[float, ...] = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.0)
    alpha: float = 0.1
    R: int = 199
    seed: int = 0
    optimizer: PsoConfig = field(default_factory=PsoConfig)
    theta0: float | None = None
    gamma_bound: float = 10.0

    def hypothesized(self, spec: DgpSpec) -> float:
        if self.theta0 is not None:
            return self.theta0
        if spec.kind == "linear_iv":
            return spec.theta_true - DEFAULT_POWER_OFFSET
        return 0.0


@dataclass(frozen=True)
class McReport:
    spec: DgpSpec
    lambdas: tuple[float, ...]
    rejection_rate: np.ndarray
    mc_reps: int
    mc_stderr: np.ndarray
    alpha: float
    p_values: np.ndarray

    def rate(self, lam: float) -> float:
        return float(self.rejection_rate[self.lambdas.index(lam)])

    def stderr(self, lam: float) -> float:
        return float(self.mc_stderr[self.lambdas.index(lam)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["lambda", "rejection_rate", "mc_stderr"])
        for lam, r, s in zip(self.lambdas, self.rejection_rate, self.mc_stderr):
            wr.writerow([repr(float(lam)), repr(float(r)), repr(float(s))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "alpha": self.alpha,
            "mc_reps": self.mc_reps,
            "lambdas": list(self.lambdas),
            "rejection_rate": [float(r) for r in self.rejection_rate],
            "mc_stderr": [float(s) for s in self.mc_stderr],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _residual_for(spec: DgpSpec, data: Dataset, theta0: float) -> np.ndarray:
    if spec.kind == "null_mds":
        return data.outcomes[:, 0] - theta0
    return data.outcomes[:, 0] - spec.intercept - theta0 * data.outcomes[:, 1]


def _rep_pvalues(spec: DgpSpec, test: McTest, rep: int) -> np.ndarray:
    data = generate(replace(spec, seed=derive_seed(spec.seed, rep)))
    w = transform_instruments(data.instruments).values
    u = _residual_for(spec, data, test.hypothesized(spec))
    seed = derive_seed(test.seed, rep)
    cfg = BootstrapConfig(R=test.R, seed=seed, optimizer=test.optimizer.with_seed(derive_seed(seed, 99)))
    grid = PenaltyGrid.from_values(test.lambdas)
    res = run_bootstrap(Summands(u, w), grid, cfg, (test.alpha,), GammaBox.symmetric(spec.p, test.gamma_bound))
    by_lam = {o.lam: o.p_value for o in res}
    return np.array([by_lam[float(lam)] for lam in test.lambdas])


def _map(fn, args: list, workers: int):
    if workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))


def power_curve(spec: DgpSpec, lambdas: Sequence[float], test: McTest | None = None,
                mc_reps: int = 200, workers: int = 1) -> McReport:
    """Monte Carlo rejection rate of the bootstrap test at each penalty.

    Every replication draws a fresh sample and runs the full bootstrap
    test, sharing its multiplier draws across penalties.
    """
    if mc_reps < 50:
        raise ValueError("mc_reps must be at least 50")
    test = replace(test or McTest(), lambdas=tuple(float(l) for l in lambdas))
    pv = np.stack(_map(_rep_pvalues, [(spec, test, m) for m in range(mc_reps)], workers))
    rate = np.mean(pv < test.alpha, axis=0)
    se = np.sqrt(rate * (1.0 - rate) / mc_reps)
    return McReport(spec, test.lambdas, rate, mc_reps, se, test.alpha, pv)


@dataclass(frozen=True)
class CoverageSpec:
    """Settings for the calibrated subvector confidence-interval experiment."""

    half_width: float = 0.5
    step: float = 0.1
    alpha: float = 0.05
    R: int = 199
    calib_alpha: float = 0.1
    calib_R: int = 100
    calib_b: float = 0.2
    calib_lambdas: tuple[float, ...] = DEFAULT_SUBVECTOR_LAMBDAS
    calib_points: tuple[float, ...] = (-0.2, 0.0, 0.2)
    seed: int = 0
    optimizer: PsoConfig = field(default_factory=PsoConfig)


def coverage_run(spec: DgpSpec, cov: CoverageSpec, rep: int) -> dict:
    """One sample: calibrate a common penalty, then invert the corrected test.

    Calibration points are offsets from the grid centre; the grid is
    centred on the true slope so the truth is always a grid point.
    """
    data = generate(replace(spec, seed=derive_seed(spec.seed, rep)))
    w = transform_instruments(data.instruments).values
    model = EisModel()
    seed = derive_seed(cov.seed, rep)
    opt = cov.optimizer.with_seed(derive_seed(seed, 99))
    center = spec.theta_true
    cal_cfg = BootstrapConfig(R=cov.calib_R, seed=derive_seed(seed, 1), optimizer=opt)
    surfaces = [
        subvector_power_surface(SubvectorProblem(np.array([center + off]), model), data, w,
                                [cov.calib_b], cov.calib_lambdas, cov.calib_alpha, cal_cfg)
        for off in cov.calib_points
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        choice = common_maxmin_lambda(surfaces)
    grid = theta_grid(center - cov.half_width, center + cov.half_width, cov.step)
    cfg = BootstrapConfig(R=cov.R, seed=derive_seed(seed, 2), optimizer=opt)
    pvals, _ = subvector_pvalues(model, data, w, grid, choice.lambda_hat, cfg)
    ci = invert_ci(pvals, grid, cov.alpha)
    return {"rep": rep, "lambda_hat": choice.lambda_hat, "interval": ci.interval,
            "convex": ci.convex, "covers": ci.covers(spec.theta_true)}


def ci_coverage(spec: DgpSpec, cov: CoverageSpec, runs: int = 100, workers: int = 1) -> list[dict]:
    return _map(coverage_run, [(spec, cov, m) for m in range(runs)], workers)
