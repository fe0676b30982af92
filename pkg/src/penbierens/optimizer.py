"""Particle swarm maximization over a box, a brute-force grid oracle, and
the warm-started solution path over a decreasing penalty grid.

The swarm runs many independent problems side by side.  Each problem owns
its random stream and stopping state, so its result is the same whether it
is solved alone or inside a batch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import GridTooLarge, NonFiniteObjective, PathMonotonicityFailure
from .kernel import BatchObjective, GammaBox, PenaltyGrid, Summands

SUPPORT_THRESHOLD = 0.01
# rounding allowance for comparing objective values computed in different orders
_FP_SLACK = 1e-12


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit child seed for the substream keyed by ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the substream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PsoConfig:
    """Swarm settings; ``None`` sizes are filled in from the dimension."""

    swarm_size: int | None = None
    max_iters: int | None = None
    inertia: float = 0.729
    cognitive_coeff: float = 1.49445
    social_coeff: float = 1.49445
    stall_iters: int = 20
    tol: float = 1e-6
    seed: int = 0
    restarts: int = 2
    velocity_clamp: float = 0.2
    # opt-in compass-search refinement of the swarm's best point
    polish: bool = False
    polish_step: float = 0.01
    polish_tol: float = 1e-9
    polish_iters: int = 200

    def __post_init__(self):
        if not 0.0 < self.inertia <= 1.0:
            raise ValueError("inertia must lie in (0, 1]")
        if self.cognitive_coeff <= 0 or self.social_coeff <= 0:
            raise ValueError("acceleration coefficients must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.stall_iters < 1 or self.restarts < 0:
            raise ValueError("stall_iters >= 1 and restarts >= 0 required")
        if not 0.0 < self.polish_tol < self.polish_step or self.polish_iters < 0:
            raise ValueError("need 0 < polish_tol < polish_step and polish_iters >= 0")
        for name in ("swarm_size", "max_iters"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")

    def resolved(self, p: int) -> "PsoConfig":
        return replace(
            self,
            swarm_size=self.swarm_size or min(100, 10 * p),
            max_iters=self.max_iters or 200 * p,
        )

    def with_seed(self, seed: int) -> "PsoConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class PathEntry:
    lam: float
    t: float
    gamma_star: np.ndarray
    support: tuple[int, ...]


@dataclass(frozen=True)
class PathResult:
    entries: tuple[PathEntry, ...]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    @property
    def values(self) -> np.ndarray:
        return np.array([e.t for e in self.entries])

    def at(self, lam: float) -> PathEntry:
        for e in self.entries:
            if e.lam == lam:
                return e
        raise KeyError(lam)


def support_of(gamma: np.ndarray, threshold: float = SUPPORT_THRESHOLD) -> tuple[int, ...]:
    return tuple(int(j) for j in np.flatnonzero(np.abs(gamma) >= threshold))


def _init_swarm(rng, box: GammaBox, S: int, warm):
    p = box.p
    x = box.lower + rng.random((S, p)) * box.width
    x[0] = box.clip(np.zeros(p))
    if warm is not None and S > 1:
        x[1] = box.clip(warm)
    return x


def pso_batch(evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray], rngs: Sequence,
              box: GammaBox, cfg: PsoConfig, warm: np.ndarray | None = None):
    """Maximize ``K = len(rngs)`` objectives at once.

    ``evaluate(pos, problems)`` receives positions of shape
    ``(len(problems), S, p)`` and returns values of shape
    ``(len(problems), S)``.  Returns ``(values, argmax)`` of shapes ``(K,)``
    and ``(K, p)``.
    """
    cfg = cfg.resolved(box.p)
    K, S, p = len(rngs), cfg.swarm_size, box.p
    vmax = cfg.velocity_clamp * box.width
    x = np.empty((K, S, p))
    v = np.empty((K, S, p))
    for k, rng in enumerate(rngs):
        x[k] = _init_swarm(rng, box, S, None if warm is None else warm[k])
        v[k] = (2.0 * rng.random((S, p)) - 1.0) * vmax
    everyone = np.arange(K)
    f = evaluate(x, everyone)
    if not np.isfinite(f).all():
        raise NonFiniteObjective("objective returned a non-finite value at initialization")
    pbest_x = x.copy()
    pbest_f = f.copy()
    gi = np.argmax(pbest_f, axis=1)
    gbest_f = pbest_f[everyone, gi]
    gbest_x = pbest_x[everyone, gi].copy()
    hist = np.empty((K, cfg.max_iters + 1))
    hist[:, 0] = gbest_f
    active = np.ones(K, dtype=bool)
    lo, hi = box.lower, box.upper
    for t in range(1, cfg.max_iters + 1):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        r = np.stack([rngs[k].random((2, S, p)) for k in act])
        xa = x[act]
        va = (cfg.inertia * v[act]
              + cfg.cognitive_coeff * r[:, 0] * (pbest_x[act] - xa)
              + cfg.social_coeff * r[:, 1] * (gbest_x[act][:, None, :] - xa))
        va = np.clip(va, -vmax, vmax)
        xa = np.clip(xa + va, lo, hi)
        v[act] = va
        x[act] = xa
        fa = evaluate(xa, act)
        if not np.isfinite(fa).all():
            raise NonFiniteObjective("objective returned a non-finite value during the search")
        better = fa > pbest_f[act]
        pf = np.where(better, fa, pbest_f[act])
        px = np.where(better[..., None], xa, pbest_x[act])
        pbest_f[act] = pf
        pbest_x[act] = px
        gi = np.argmax(pf, axis=1)
        gf = pf[np.arange(act.size), gi]
        up = gf > gbest_f[act]
        gbest_f[act] = np.where(up, gf, gbest_f[act])
        gbest_x[act] = np.where(up[:, None], px[np.arange(act.size), gi], gbest_x[act])
        hist[act, t] = gbest_f[act]
        if t >= cfg.stall_iters:
            now = hist[act, t]
            gain = now - hist[act, t - cfg.stall_iters]
            done = gain <= cfg.tol * np.maximum(1.0, np.abs(now))
            active[act[done]] = False
    if cfg.polish:
        _polish(evaluate, gbest_f, gbest_x, box, cfg)
    return gbest_f, gbest_x


def _polish(evaluate, best_f, best_x, box: GammaBox, cfg: PsoConfig):
    """Compass search from each problem's best point, in place.

    Candidates are ``x +/- h e_j`` and ``x`` with coordinate ``j`` set to
    zero, which reaches the kinks of an l1 penalty exactly.  The step halves
    after every unsuccessful round.
    """
    K, p = best_x.shape
    h = np.full(K, cfg.polish_step)
    active = np.ones(K, dtype=bool)
    eye = np.eye(p)
    for _ in range(cfg.polish_iters):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        x = best_x[act]
        step = h[act][:, None, None] * box.width[None, None, :] * eye[None]
        zeroed = np.repeat(x[:, None, :], p, axis=1)
        zeroed[:, np.arange(p), np.arange(p)] = 0.0
        cand = np.clip(np.concatenate([x[:, None] + step, x[:, None] - step, zeroed], axis=1),
                       box.lower, box.upper)
        f = evaluate(cand, act)
        if not np.isfinite(f).all():
            raise NonFiniteObjective("objective returned a non-finite value while polishing")
        c = np.argmax(f, axis=1)
        fc = f[np.arange(act.size), c]
        up = fc > best_f[act]
        best_f[act[up]] = fc[up]
        best_x[act[up]] = cand[np.flatnonzero(up), c[up]]
        h[act[~up]] *= 0.5
        active[act[~up & (h[act] < cfg.polish_tol)]] = False


def pso_maximize(objective: Callable, box: GammaBox, cfg: PsoConfig,
                 warm_start=None, vectorized: bool = False) -> tuple[float, np.ndarray]:
    """Maximize ``objective`` over ``box``; deterministic given ``cfg.seed``.

    The origin (clipped into the box) and ``warm_start`` are seeded into the
    initial swarm.  With ``vectorized=True`` the objective maps an
    ``(S, p)`` array to ``S`` values.
    """
    if vectorized:
        def evaluate(pos, problems):
            return np.asarray(objective(pos[0]), dtype=float).reshape(1, -1)
    else:
        def evaluate(pos, problems):
            return np.array([[float(objective(xi)) for xi in pos[0]]])
    warm = None if warm_start is None else np.atleast_2d(np.asarray(warm_start, dtype=float))
    vals, xs = pso_batch(evaluate, [make_rng(cfg.seed)], box, cfg, warm)
    return float(vals[0]), xs[0]


def grid_maximize(objective: Callable, box: GammaBox, points_per_dim: int,
                  vectorized: bool = False, chunk: int = 1 << 16) -> tuple[float, np.ndarray]:
    """Exact maximum over a tensor grid (corners included, plus 0 when interior).

    Ties go to the lexicographically smallest grid index.
    """
    if points_per_dim < 2:
        raise ValueError("points_per_dim must be at least 2")
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        ax = np.linspace(lo, hi, points_per_dim)
        if lo < 0.0 < hi and not np.any(ax == 0.0):
            ax = np.sort(np.append(ax, 0.0))
        axes.append(ax)
    total = int(np.prod([ax.size for ax in axes], dtype=float))
    if total > 10**7:
        raise GridTooLarge(f"{total} grid points exceed the 1e7 limit")
    best_val = -np.inf
    best_x = None
    if vectorized:
        shape = [ax.size for ax in axes]
        for start in range(0, total, chunk):
            idx = np.arange(start, min(total, start + chunk))
            sub = np.unravel_index(idx, shape)
            pts = np.column_stack([axes[j][sub[j]] for j in range(box.p)])
            vals = np.asarray(objective(pts), dtype=float)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val, best_x = float(vals[i]), pts[i].copy()
    else:
        for pt in itertools.product(*axes):
            val = float(objective(np.array(pt)))
            if val > best_val:
                best_val, best_x = val, np.array(pt)
    return best_val, best_x


def path_batch(batch: BatchObjective, lambdas: PenaltyGrid, box: GammaBox, cfg: PsoConfig,
               seeds: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Solution paths for every problem in ``batch``.

    Penalties are visited from largest to smallest and each solve is warm
    started at the previous maximizer.  Afterwards every level takes the
    best value over all maximizers found on the path, which makes each path
    non-increasing and Lipschitz in the penalty.  Returns values ``(K, L)``
    and maximizers ``(K, L, p)``.
    """
    lams = np.array(lambdas.values)
    K, L, p = batch.size, lams.size, box.p
    if len(seeds) != K:
        raise ValueError("need one seed per problem")
    rngs = [make_rng(s) for s in seeds]
    values = np.empty((K, L))
    argmax = np.empty((K, L, p))
    warm = None
    for l, lam in enumerate(lams):
        vals, xs = pso_batch(lambda pos, idx: batch(pos, lam, idx), rngs, box, cfg, warm)
        if l > 0:
            bad = np.flatnonzero(vals < values[:, l - 1])
            for k in bad:
                vals[k], xs[k] = _resolve(batch, int(k), lam, box, cfg, seeds[k], l,
                                          xs[k], vals[k], values[k, l - 1])
        values[:, l] = vals
        argmax[:, l] = xs
        warm = xs
    if L > 1:
        for l, lam in enumerate(lams):
            cand = batch(argmax, lam)
            c = np.argmax(cand, axis=1)
            best = cand[np.arange(K), c]
            up = best > values[:, l]
            values[up, l] = best[up]
            argmax[up, l] = argmax[up, c[up]]
    return values, argmax


def _resolve(batch, k, lam, box, cfg, seed, level, x0, v0, floor):
    best_v, best_x = v0, x0
    for rr in range(cfg.restarts + 1):
        rng = make_rng(seed, 1, level, rr)
        vals, xs = pso_batch(lambda pos, idx: batch(pos, lam, np.full(len(idx), k)),
                             [rng], box, cfg, best_x[None, :])
        if vals[0] > best_v:
            best_v, best_x = vals[0], xs[0]
    if best_v < floor - _FP_SLACK:
        raise PathMonotonicityFailure(
            f"T({lam}) = {best_v:.6g} fell below the previous level {floor:.6g} after restarts"
        )
    return max(best_v, floor), best_x


def solution_path(u, w, lambdas, box: GammaBox | None = None, cfg: PsoConfig | None = None,
                  support_threshold: float = SUPPORT_THRESHOLD) -> PathResult:
    """``lam -> (T_n(lam), gamma*, support)`` over a decreasing penalty grid."""
    summands = u if isinstance(u, Summands) else Summands(u, w)
    return path_from_summands(summands, lambdas, box, cfg, support_threshold)


def path_from_summands(summands: Summands, lambdas, box: GammaBox | None = None,
                       cfg: PsoConfig | None = None,
                       support_threshold: float = SUPPORT_THRESHOLD) -> PathResult:
    if not isinstance(lambdas, PenaltyGrid):
        lambdas = PenaltyGrid.from_values(np.atleast_1d(lambdas))
    box = box or GammaBox.symmetric(summands.p)
    cfg = cfg or PsoConfig()
    batch = BatchObjective(summands)
    values, argmax = path_batch(batch, lambdas, box, cfg, [cfg.seed])
    entries = tuple(
        PathEntry(lam, float(values[0, l]), argmax[0, l].copy(),
                  support_of(argmax[0, l], support_threshold))
        for l, lam in enumerate(lambdas.values)
    )
    return PathResult(entries)
