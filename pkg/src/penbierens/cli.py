"""Command-line front end.

Usage::

    penbierens --config run.json [--command test] [--data file.csv] [--lambda 1,0.5]
               [--alpha 0.1] [--reps 199] [--seed 7] [--workers 2] [--out results/]

Flags override values from the JSON config.  Every artifact carries the
config hash, the package version and the seeds used, and reruns of the
same config write byte-identical files whatever the worker count.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig
from .calibrate import DEFAULT_CALIBRATION_R, DEFAULT_LAMBDAS, common_maxmin_lambda, reduce_b_set
from .errors import ConfigError, EmptyAfterFiltering, MissingColumn, NonNumericCell, PenBierensError
from .infer import invert_ci, subvector_pvalues, theta_grid
from .kernel import GammaBox, PenaltyGrid
from .model import Dataset, MomentModel, make_model, transform_instruments
from .optimizer import PsoConfig, path_from_summands, support_of
from .sim import DgpSpec, McTest, generate, power_curve
from .subvector import SubvectorProblem, corrected_inputs, subvector_power_surface, subvector_test

COMMANDS = ("test", "path", "calibrate", "ci", "power-sim")
MISSING_TOKENS = ("", "NA")
DEFAULT_INFERENCE_R = 1000
DEFAULT_GAMMA_BOUND = 10.0
# level for calibration and tests, and for reported intervals
DEFAULT_TEST_ALPHA = 0.1
DEFAULT_CI_ALPHA = 0.05
EXIT_ERROR = 2


def ingest_csv(path, roles: dict) -> Dataset:
    """Read a header-first numeric CSV into a :class:`Dataset`.

    ``roles`` maps ``"instruments"`` and ``"outcomes"`` to column name
    lists.  Rows with an empty or ``NA`` cell in any role column are
    dropped and counted in ``Dataset.dropped``.
    """
    inst = list(roles.get("instruments", ()))
    outc = list(roles.get("outcomes", ()))
    if not inst or not outc:
        raise ConfigError("roles need at least one instrument and one outcome column")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyAfterFiltering(f"{path} has no header") from None
        index = {}
        for name in inst + outc:
            if name not in header:
                raise MissingColumn(name)
            index[name] = header.index(name)
        rows = []
        dropped = 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            cells = [rec[index[name]].strip() if index[name] < len(rec) else "" for name in inst + outc]
            if any(c in MISSING_TOKENS for c in cells):
                dropped += 1
                continue
            vals = []
            for name, c in zip(inst + outc, cells):
                try:
                    v = float(c)
                except ValueError:
                    raise NonNumericCell(lineno, name, c) from None
                if not math.isfinite(v):
                    raise NonNumericCell(lineno, name, c)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise EmptyAfterFiltering(f"no complete rows left in {path} ({dropped} dropped)")
    arr = np.array(rows, dtype=float)
    p = len(inst)
    return Dataset(arr[:, :p], arr[:, p:], tuple(inst + outc), dropped)


@dataclass(frozen=True)
class RunConfig:
    command: str
    data_path: str | None = None
    instruments: tuple[str, ...] = ()
    outcomes: tuple[str, ...] = ()
    model: dict = field(default_factory=lambda: {"id": "rur"})
    lambdas: tuple[float, ...] | None = None
    gamma_bound: float = DEFAULT_GAMMA_BOUND
    alpha: float | None = None
    R: int | None = None
    seed: int = 0
    b_set: tuple | None = None
    theta_grid: dict | None = None
    optimizer: dict = field(default_factory=dict)
    dgp: dict | None = None
    mc_reps: int = 200
    workers: int = 1
    output_dir: str = "."

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {self.command!r}")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.lambdas is not None:
            lams = tuple(float(l) for l in self.lambdas)
            if not lams or any(not math.isfinite(l) or l < 0 for l in lams):
                raise ConfigError("lambdas must be finite and non-negative")
            object.__setattr__(self, "lambdas", lams)
        if self.R is not None and self.R < 1:
            raise ConfigError("R must be positive")
        if not self.gamma_bound > 0:
            raise ConfigError("gamma_bound must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if "id" not in self.model:
            raise ConfigError("model needs an 'id'")
        object.__setattr__(self, "instruments", tuple(self.instruments))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        try:
            PsoConfig(**self.optimizer)
        except TypeError as exc:
            raise ConfigError(f"bad optimizer settings: {exc}") from None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "command" not in raw:
            raise ConfigError("config needs a command")
        return cls(**raw)

    # values that do not change results are left out of the hash
    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        d.pop("output_dir")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return DEFAULT_CI_ALPHA if self.command == "ci" else DEFAULT_TEST_ALPHA

    def resolved_R(self) -> int:
        if self.R is not None:
            return self.R
        return DEFAULT_CALIBRATION_R if self.command == "calibrate" else DEFAULT_INFERENCE_R

    def resolved_lambdas(self) -> tuple[float, ...]:
        return self.lambdas if self.lambdas is not None else DEFAULT_LAMBDAS

    def pso(self) -> PsoConfig:
        opt = dict(self.optimizer)
        opt.setdefault("seed", self.seed)
        return PsoConfig(**opt)

    def bootstrap(self) -> BootstrapConfig:
        return BootstrapConfig(R=self.resolved_R(), seed=self.seed, optimizer=self.pso(),
                               workers=self.workers)


def _meta(cfg: RunConfig) -> dict:
    return {
        "config_hash": cfg.digest(),
        "version": __version__,
        "seeds": {"bootstrap": cfg.seed, "optimizer": cfg.pso().seed},
        "config": cfg.canonical(),
    }


def _csv_text(cfg: RunConfig, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    meta = _meta(cfg)
    buf.write(f"# config_hash={meta['config_hash']} version={meta['version']} "
              f"bootstrap_seed={cfg.seed} optimizer_seed={meta['seeds']['optimizer']}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json_text(cfg: RunConfig, body: dict) -> str:
    return json.dumps({"meta": _meta(cfg), **body}, indent=2, sort_keys=True) + "\n"


def load_data(cfg: RunConfig) -> Dataset:
    if cfg.dgp is not None:
        try:
            return generate(DgpSpec(**cfg.dgp))
        except TypeError as exc:
            raise ConfigError(f"bad dgp settings: {exc}") from None
    if cfg.data_path is None:
        raise ConfigError(f"command {cfg.command!r} needs data_path or dgp")
    return ingest_csv(cfg.data_path, {"instruments": cfg.instruments, "outcomes": cfg.outcomes})


def _model_and_theta(cfg: RunConfig) -> tuple[MomentModel, np.ndarray | None]:
    try:
        model = make_model(cfg.model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    key = "theta" if model.d2 == 0 else "theta1"
    raw = cfg.model.get(key, cfg.model.get("theta"))
    if raw is None:
        return model, None
    return model, np.atleast_1d(np.asarray(raw, dtype=float))


def _tested(cfg: RunConfig, data: Dataset):
    """Tested problem and transformed instruments.

    Without nuisance parameters the corrected inputs reduce to the plain
    residuals, so one code path serves every model.
    """
    model, theta = _model_and_theta(cfg)
    if theta is None:
        raise ConfigError(f"command {cfg.command!r} needs model.theta or model.theta1")
    if theta.size < model.d1:
        raise ConfigError(f"model {model.name} tests {model.d1} parameter values")
    w = transform_instruments(data.instruments).values
    return SubvectorProblem(theta[:model.d1], model), w


def _box(cfg: RunConfig, p: int) -> GammaBox:
    return GammaBox.symmetric(p, cfg.gamma_bound)


def cmd_test(cfg: RunConfig, data: Dataset) -> dict[str, str]:
    problem, w = _tested(cfg, data)
    alpha = cfg.resolved_alpha()
    alphas = tuple(sorted({alpha, 0.05, 0.1}))
    res = subvector_test(problem, data, w, cfg.resolved_lambdas(), cfg.bootstrap(), alphas,
                         _box(cfg, data.p))
    rows = []
    for o in res:
        rows.append({
            "lambda": o.lam,
            "T_n": o.observed,
            "gamma_star": [float(g) for g in o.gamma_star],
            "support": list(support_of(o.gamma_star)),
            "p_value": o.p_value,
            "rejects": o.rejects(alpha),
            "critical_values": {repr(a): c for a, c in sorted(o.critical_values.items())},
            "R": o.R,
            "seed": cfg.seed,
        })
    body = {"command": "test", "n": data.n, "dropped": data.dropped, "alpha": alpha, "results": rows}
    return {"test.json": _json_text(cfg, body)}


def cmd_path(cfg: RunConfig, data: Dataset) -> dict[str, str]:
    problem, w = _tested(cfg, data)
    summands = corrected_inputs(problem, data).summands(w)
    path = path_from_summands(summands, PenaltyGrid.from_values(cfg.resolved_lambdas()),
                              _box(cfg, data.p), cfg.pso())
    header = ["lambda", "T_n", "support"] + [f"gamma_{j + 1}" for j in range(data.p)]
    rows = [[e.lam, e.t, " ".join(str(j) for j in e.support)] + list(e.gamma_star) for e in path.entries]
    return {"path.csv": _csv_text(cfg, header, rows)}


def _calibration_points(cfg: RunConfig, model: MomentModel) -> list[np.ndarray]:
    pts = cfg.model.get("calibration_points")
    if pts is None:
        _, theta = _model_and_theta(cfg)
        if theta is None:
            raise ConfigError("calibrate needs model.theta/theta1 or model.calibration_points")
        return [theta[:model.d1]]
    return [np.atleast_1d(np.asarray(t, dtype=float)) for t in pts]


def cmd_calibrate(cfg: RunConfig, data: Dataset) -> dict[str, str]:
    model, _ = _model_and_theta(cfg)
    w = transform_instruments(data.instruments).values
    alpha = cfg.resolved_alpha()
    bcfg = cfg.bootstrap()
    surfaces = []
    rows = []
    for t in _calibration_points(cfg, model):
        problem = SubvectorProblem(t, model)
        if cfg.b_set is not None:
            b_set = reduce_b_set(model.name, b_set=cfg.b_set)
        else:
            b_set = reduce_b_set(model.name, u=corrected_inputs(problem, data).u_hat)
        surf = subvector_power_surface(problem, data, w, b_set, cfg.resolved_lambdas(), alpha, bcfg,
                                       _box(cfg, data.p))
        surfaces.append(surf)
        for lam, b, bvec, rp, crit in surf.rows():
            rows.append([" ".join(repr(float(x)) for x in t), lam, b,
                         " ".join(repr(float(x)) for x in np.atleast_1d(bvec)), rp, crit])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        choice = common_maxmin_lambda(surfaces)
    body = {"command": "calibrate", "alpha": alpha, "R": bcfg.R, "n": data.n, "dropped": data.dropped,
            "choice": choice.to_dict(), "warnings": [str(c.message) for c in caught],
            "size_by_lambda": [[float(v) for v in s.size] for s in surfaces]}
    header = ["theta", "lambda", "b_index", "B", "reject_prob", "critical_value"]
    return {"surface.csv": _csv_text(cfg, header, rows), "choice.json": _json_text(cfg, body)}


def cmd_ci(cfg: RunConfig, data: Dataset) -> dict[str, str]:
    model, _ = _model_and_theta(cfg)
    if model.d1 != 1:
        raise ConfigError("confidence intervals need a scalar tested parameter")
    if not cfg.theta_grid:
        raise ConfigError("ci needs theta_grid {lo, hi, step}")
    try:
        grid = theta_grid(float(cfg.theta_grid["lo"]), float(cfg.theta_grid["hi"]),
                          float(cfg.theta_grid["step"]))
    except KeyError as exc:
        raise ConfigError(f"theta_grid is missing {exc}") from None
    lams = cfg.resolved_lambdas()
    if len(lams) != 1:
        raise ConfigError("ci takes exactly one lambda (run calibrate first)")
    alpha = cfg.resolved_alpha()
    w = transform_instruments(data.instruments).values
    pvals, _ = subvector_pvalues(model, data, w, grid, lams[0], cfg.bootstrap(), _box(cfg, data.p))
    ci = invert_ci(pvals, grid, alpha)
    body = {"command": "ci", "lambda": lams[0], "R": cfg.resolved_R(), "n": data.n,
            "dropped": data.dropped, "grid_step": grid.step, **ci.to_dict()}
    rows = [[t, pv, bool(a)] for t, pv, a in zip(ci.grid, ci.p_values, ci.accepted)]
    return {"ci.json": _json_text(cfg, body),
            "ci_pvalues.csv": _csv_text(cfg, ["theta", "p_value", "accepted"], rows)}


def cmd_power_sim(cfg: RunConfig, data: Dataset | None = None) -> dict[str, str]:
    if cfg.dgp is None:
        raise ConfigError("power-sim needs a dgp section")
    spec = DgpSpec(**cfg.dgp)
    theta0 = cfg.model.get("theta")
    test = McTest(lambdas=tuple(cfg.resolved_lambdas()), alpha=cfg.resolved_alpha(), R=cfg.resolved_R(),
                  seed=cfg.seed, optimizer=cfg.pso(), gamma_bound=cfg.gamma_bound,
                  theta0=None if theta0 is None else float(np.atleast_1d(theta0)[0]))
    report = power_curve(spec, test.lambdas, test, cfg.mc_reps, cfg.workers)
    header = ["lambda", "rejection_rate", "mc_stderr"]
    rows = list(zip(report.lambdas, report.rejection_rate, report.mc_stderr))
    return {"power.csv": _csv_text(cfg, header, rows),
            "power.json": _json_text(cfg, {"command": "power-sim", **report.to_dict()})}


HANDLERS = {"test": cmd_test, "path": cmd_path, "calibrate": cmd_calibrate, "ci": cmd_ci,
            "power-sim": cmd_power_sim}


def run_command(cfg: RunConfig) -> dict[str, Path]:
    """Run one command and write its artifacts; returns name -> path."""
    data = None if cfg.command == "power-sim" else load_data(cfg)
    texts = HANDLERS[cfg.command](cfg, data)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, text in texts.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written[name] = path
    return written


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="penbierens",
                                 description="Penalized Bierens-type specification tests and inference.")
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--data", help="CSV data file")
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--lambda", dest="lambdas", type=_float_list, help="comma-separated penalties")
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--reps", type=int, help="bootstrap replications R")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", help="output directory")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {"data_path": args.data, "command": args.command, "lambdas": args.lambdas,
                 "alpha": args.alpha, "R": args.reps, "seed": args.seed, "workers": args.workers,
                 "output_dir": args.out}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(raw)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out or ".")
    try:
        cfg = config_from_args(args)
        out_dir = Path(cfg.output_dir)
        written = run_command(cfg)
    except (PenBierensError, ValueError, OSError) as exc:
        if isinstance(exc, PenBierensError):
            err = exc.to_dict()
        else:
            err = {"error": type(exc).__name__, "message": str(exc)}
        text = json.dumps(err, sort_keys=True)
        print(text, file=sys.stderr)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
        return EXIT_ERROR
    for name in sorted(written):
        print(written[name])
    return 0


if __name__ == "__main__":
    sys.exit(main())
