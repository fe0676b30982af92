"""Studentized Bierens moments and the penalized objective.

For residuals ``u`` and bounded instruments ``W`` the weighted moment at
``gamma`` is ``m = mean(u * exp(W @ gamma))`` with second moment
``s2 = mean((u * exp(W @ gamma))**2)`` and ``q = n * m**2 / s2``.  The
penalized objective is ``sqrt(q) - lam * ||gamma||_1``.

``q`` does not change when all weights are multiplied by a positive
constant, so the batch evaluator shifts the log-weights by their maximum
before exponentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DegenerateVariance, NonFiniteInput


@dataclass(frozen=True)
class StatEval:
    gamma: np.ndarray
    m: float
    s2: float
    q: float
    objective: float | None = None


@dataclass(frozen=True)
class PenaltyGrid:
    """Strictly decreasing penalty levels."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("penalty grid is empty")
        if not all(np.isfinite(v) and v >= 0.0 for v in vals):
            raise ValueError("penalty levels must be finite and >= 0")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("penalty grid must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values) -> "PenaltyGrid":
        """Sort descending and drop duplicates."""
        return cls(tuple(sorted({float(v) for v in values}, reverse=True)))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class GammaBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()) or np.any(lo >= hi):
            raise ValueError("box needs finite bounds with lower < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, p: int, bound: float = 10.0) -> "GammaBox":
        return cls(np.full(p, -float(bound)), np.full(p, float(bound)))

    @property
    def p(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def max_l1(self) -> float:
        return float(np.maximum(np.abs(self.lower), np.abs(self.upper)).sum())

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


def _check(u: np.ndarray, w: np.ndarray, gamma: np.ndarray):
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if u.shape[0] != w.shape[0] or w.shape[1] != gamma.size:
        raise ValueError(f"shape mismatch: u {u.shape}, W {w.shape}, gamma {gamma.shape}")
    if not (np.isfinite(u).all() and np.isfinite(w).all() and np.isfinite(gamma).all()):
        raise NonFiniteInput("kernel inputs must be finite")
    return u, w, gamma


def _q_stable(z_scaled: np.ndarray) -> tuple[float, float]:
    # q is computed on z / max|z| so tiny residuals cannot underflow s2
    n = z_scaled.shape[0]
    top = np.abs(z_scaled).max()
    zn = z_scaled / top
    m = zn.mean()
    s2 = np.mean(zn * zn)
    return n * m * m / s2, s2 * top * top


def eval_components(u, w, gamma) -> StatEval:
    """Weighted moment ``m``, second moment ``s2`` and ``q`` at ``gamma``."""
    u, w, gamma = _check(u, w, gamma)
    lin = w @ gamma
    shift = lin.max()
    weights = np.exp(lin - shift)
    z = u * weights
    if not np.any(z != 0.0):
        raise DegenerateVariance("all weighted residuals vanish; s2 is zero")
    q, s2_scaled = _q_stable(z)
    # m and s2 are reported on the original scale and may overflow; q never does
    with np.errstate(over="ignore"):
        scale = np.exp(shift)
    return StatEval(gamma=gamma, m=float(z.mean() * scale), s2=float(s2_scaled * scale * scale),
                    q=float(q))


def penalized_objective(u, w, gamma, lam: float) -> float:
    """``sqrt(q) - lam * ||gamma||_1``."""
    ev = eval_components(u, w, gamma)
    return float(np.sqrt(ev.q) - lam * np.abs(ev.gamma).sum())


def penalized_objective_multi(umat, w, gamma, lam: float) -> float:
    """Aggregate over ``J`` residual columns: ``sqrt(sum_j q_j) - lam * ||gamma||_1``."""
    umat = np.asarray(umat, dtype=float)
    if umat.ndim == 1:
        umat = umat[:, None]
    if umat.shape[1] == 1:
        return penalized_objective(umat[:, 0], w, gamma, lam)
    total = 0.0
    for j in range(umat.shape[1]):
        try:
            total += eval_components(umat[:, j], w, gamma).q
        except DegenerateVariance as exc:
            raise DegenerateVariance(f"restriction {j}: {exc}") from exc
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    return float(np.sqrt(total) - lam * np.abs(gamma).sum())


@dataclass(frozen=True)
class Summands:
    """Per-observation ingredients of a (possibly corrected) statistic.

    The summand for unit ``i`` at weight vector ``e`` is::

        eta_i * (u_i * e_i + etahat_i' A) + shift_i * e_i,
        A = mean_j(g2_j * e_j)

    ``etahat``/``g2`` are absent for full-vector inference and ``shift`` is
    absent outside power calibration.  The correction term only enters
    multiplier replicates; the observed summand is always ``u_i * e_i``.
    """

    u: np.ndarray
    w: np.ndarray
    etahat: np.ndarray | None = None
    g2: np.ndarray | None = None

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=float)
        w = np.ascontiguousarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if u.ndim != 1 or u.shape[0] != w.shape[0]:
            raise ValueError("u must be a vector aligned with the rows of W")
        if not (np.isfinite(u).all() and np.isfinite(w).all()):
            raise NonFiniteInput("summand inputs must be finite")
        if not np.any(u != 0.0):
            raise DegenerateVariance("residuals are identically zero")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)
        if (self.etahat is None) != (self.g2 is None):
            raise ValueError("etahat and g2 must be given together")
        if self.etahat is not None:
            eh = np.ascontiguousarray(self.etahat, dtype=float)
            g2 = np.ascontiguousarray(self.g2, dtype=float)
            if eh.ndim == 1:
                eh = eh[:, None]
            if g2.ndim == 1:
                g2 = g2[:, None]
            if eh.shape != g2.shape or eh.shape[0] != u.shape[0]:
                raise ValueError("etahat and g2 must both be n x d2")
            object.__setattr__(self, "etahat", eh)
            object.__setattr__(self, "g2", g2)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def p(self) -> int:
        return self.w.shape[1]

    def corrected(self) -> bool:
        return self.etahat is not None and self.etahat.shape[1] > 0

    def kernel_args(self):
        if self.corrected():
            return self.etahat, self.g2
        return np.zeros((self.n, 0)), np.zeros((self.n, 0))


@numba.njit(cache=True, fastmath=True)
def _log_weights(pos, wt, lin):
    # lin[k, s, :] = W @ pos[k, s] shifted so that its maximum is zero;
    # every row goes through the same code, so values do not depend on K or S
    K, S, p = pos.shape
    n = wt.shape[1]
    buf = np.empty(n)
    for k in range(K):
        for s in range(S):
            for i in range(n):
                buf[i] = 0.0
            for j in range(p):
                g = pos[k, s, j]
                for i in range(n):
                    buf[i] += wt[j, i] * g
            mx = buf[0]
            for i in range(1, n):
                mx = max(mx, buf[i])
            for i in range(n):
                lin[k, s, i] = buf[i] - mx


@numba.njit(cache=True)
def _sum4(x):
    # fixed-order four-lane sum
    n = x.shape[0]
    a0 = 0.0
    a1 = 0.0
    a2 = 0.0
    a3 = 0.0
    i = 0
    while i + 4 <= n:
        a0 += x[i]
        a1 += x[i + 1]
        a2 += x[i + 2]
        a3 += x[i + 3]
        i += 4
    while i < n:
        a0 += x[i]
        i += 1
    return (a0 + a1) + (a2 + a3)


@numba.njit(cache=True)
def _reduce(e, pos, u, eta, eta_idx, etahat, g2, shift, shift_idx, lam, out):
    K, S, n = e.shape
    p = pos.shape[2]
    d2 = etahat.shape[1]
    a = np.empty(d2)
    z = np.empty(n)
    zz = np.empty(n)
    for k in range(K):
        ei = eta_idx[k]
        si = shift_idx[k]
        for s in range(S):
            ek = e[k, s]
            for i in range(n):
                z[i] = u[i] * ek[i]
            # the plug-in correction enters bootstrap replicates only; the
            # observed statistic is studentized with the plain residuals
            if d2 > 0 and ei >= 0:
                for l in range(d2):
                    a[l] = 0.0
                for i in range(n):
                    for l in range(d2):
                        a[l] += g2[i, l] * ek[i]
                for l in range(d2):
                    a[l] /= n
                for i in range(n):
                    corr = 0.0
                    for l in range(d2):
                        corr += etahat[i, l] * a[l]
                    z[i] = z[i] + corr
            if ei >= 0:
                for i in range(n):
                    z[i] = eta[ei, i] * z[i]
            if si >= 0:
                for i in range(n):
                    z[i] = z[i] + shift[si, i] * ek[i]
            for i in range(n):
                zz[i] = z[i] * z[i]
            m = _sum4(z) / n
            s2 = _sum4(zz) / n
            if s2 > 0.0:
                q = n * m * m / s2
            else:
                q = 0.0
            l1 = 0.0
            for j in range(p):
                l1 += abs(pos[k, s, j])
            out[k, s] = np.sqrt(q) - lam * l1


def weights_batch(pos: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """Max-normalized Bierens weights ``exp(W @ gamma - max)`` for each position."""
    lin = np.empty(pos.shape[:2] + (wt.shape[1],))
    _log_weights(pos, wt, lin)
    np.exp(lin, out=lin)
    return lin


class BatchObjective:
    """Evaluates many penalized objectives that share data but differ in draws.

    Problem ``k`` uses multiplier row ``eta_idx[k]`` (``-1`` for the
    observed statistic) and shift row ``shift_idx[k]`` (``-1`` for none).
    Each problem's values depend only on its own inputs, so results do not
    change with batch composition.
    """

    def __init__(self, summands: Summands, eta=None, eta_idx=None, shift=None, shift_idx=None):
        self.summands = summands
        n = summands.n
        self.eta = np.zeros((0, n)) if eta is None else np.ascontiguousarray(eta, dtype=float)
        self.shift = np.zeros((0, n)) if shift is None else np.ascontiguousarray(shift, dtype=float)
        if eta_idx is None:
            eta_idx = np.arange(self.eta.shape[0]) if eta is not None else np.array([-1])
        self.eta_idx = np.asarray(eta_idx, dtype=np.int64)
        if shift_idx is None:
            shift_idx = np.full(self.eta_idx.size, -1)
        self.shift_idx = np.asarray(shift_idx, dtype=np.int64)
        if self.shift_idx.size != self.eta_idx.size:
            raise ValueError("eta_idx and shift_idx must have equal length")
        if self.eta.ndim != 2 or (self.eta.size and self.eta.shape[1] != n):
            raise ValueError("eta must be R x n")
        if self.shift.ndim != 2 or (self.shift.size and self.shift.shape[1] != n):
            raise ValueError("shift must be B x n")
        self._eh, self._g2 = summands.kernel_args()
        self._wt = np.ascontiguousarray(summands.w.T)

    @property
    def size(self) -> int:
        return self.eta_idx.size

    @property
    def p(self) -> int:
        return self.summands.p

    def __call__(self, pos: np.ndarray, lam: float, problems=None) -> np.ndarray:
        """Values for positions ``pos`` of shape ``(len(problems), S, p)``."""
        pos = np.ascontiguousarray(pos, dtype=float)
        if problems is None:
            problems = np.arange(self.size)
        problems = np.asarray(problems, dtype=np.int64)
        out = np.empty(pos.shape[:2])
        e = weights_batch(pos, self._wt)
        _reduce(e, pos, self.summands.u, self.eta, self.eta_idx[problems], self._eh, self._g2,
                self.shift, self.shift_idx[problems], float(lam), out)
        return out

    def single(self, k: int):
        """Callable ``gamma -> value`` for one problem at a given penalty."""
        def f(gamma, lam):
            g = np.asarray(gamma, dtype=float).reshape(1, 1, -1)
            return float(self(g, lam, [k])[0, 0])
        return f
