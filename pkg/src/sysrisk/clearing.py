"""Interbank contagion clearing with costly capital injection.

The clearing condition for liability reductions y given post-shock
equity x and injections b is the fixed point

    y = max(min(Pi^T y - x - b, L), 0),

with 0 <= y <= L (limited liability).  We always return the LEAST
fixed point, obtained by monotone iteration from y = 0: both shipped
objectives are antitone in y, so the maximization over fixed points is
attained there.  The greatest fixed point (iteration from y = L) is
exposed behind a flag for sensitivity analysis.

Two aggregate objectives are supported:

    cm1:  sum_i -(x_i + b_i - (Pi^T y)_i)^-  - gamma * b_i
    cm2:  sum_i -y_i                         - gamma * b_i

maximized over injections b >= 0 at per-unit cost gamma > 1.  The
value of the cm1 (cm2) optimum is the aggregate systemic figure for x.

The outer maximization is piecewise linear in b.  The default solver
is coordinate ascent with an exact line search per coordinate: along
one injection coordinate every clipping argument a_j = (Pi^T y - x - b)_j
is nonincreasing, so each bank passes through at most the regime
sequence capped -> free -> zero and the whole line has at most 2d
linear stages, which we enumerate exactly.  Restarts from b = 0 and
b = x^-.  A brute-force grid oracle (d <= 3) verifies the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionTooLarge, InvalidParams, NonConvergence

#: absolute residual above which an exhausted iteration is reported as failed
RESIDUAL_LIMIT = 1e-10


@dataclass(frozen=True)
class ClearingProblem:
    """Equity x, relative liability matrix Pi, liability caps L, injection cost gamma."""

    x: np.ndarray
    Pi: np.ndarray
    L: np.ndarray
    gamma: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        Pi = np.asarray(self.Pi, dtype=float)
        L = np.asarray(self.L, dtype=float)
        d = x.size
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise InvalidParams("x must be a finite vector")
        if Pi.shape != (d, d) or not np.all(np.isfinite(Pi)):
            raise InvalidParams("Pi must be a finite d x d matrix")
        if np.any(Pi < 0):
            raise InvalidParams("Pi must be nonnegative")
        if np.any(np.abs(np.diag(Pi)) > 0):
            raise InvalidParams("Pi must have zero diagonal")
        if np.any(Pi.sum(axis=1) > 1.0 + 1e-12):
            raise InvalidParams("Pi row sums must not exceed 1")
        if L.shape != (d,) or np.any(L < 0) or not np.all(np.isfinite(L)):
            raise InvalidParams("L must be a nonnegative vector")
        zero_rows = L == 0.0
        if np.any(Pi[zero_rows].sum(axis=1) > 0):
            raise InvalidParams("institutions with L_i = 0 must have all-zero Pi rows")
        if not self.gamma > 1.0:
            raise InvalidParams("gamma must exceed 1")
        for name, arr in (("x", x), ("Pi", Pi), ("L", L)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def d(self) -> int:
        return self.x.size

    def to_json(self) -> dict:
        g = self.gamma
        return {
            "x": self.x.tolist(),
            "Pi": self.Pi.tolist(),
            "L": self.L.tolist(),
            "gamma": "inf" if math.isinf(g) else g,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ClearingProblem":
        g = doc["gamma"]
        gamma = math.inf if isinstance(g, str) and g.lower() in ("inf", "infinity") else float(g)
        return cls(
            x=np.asarray(doc["x"], dtype=float),
            Pi=np.asarray(doc["Pi"], dtype=float),
            L=np.asarray(doc["L"], dtype=float),
            gamma=gamma,
        )


@dataclass(frozen=True)
class ClearingSolution:
    """Solved (y, b, value) triple for one clearing problem."""

    y: np.ndarray
    b: np.ndarray
    value: float

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "value", float(self.value))

    def to_json(self) -> dict:
        return {"y": self.y.tolist(), "b": self.b.tolist(), "value": self.value}


def _iteration_cap(d: int, L_inf: float) -> int:
    return int(10 * d * (1 + math.log2(1 + L_inf / 1e-10))) + 16


def _regime_polish(PiT, L, c, y):
    """Solve the linear system of y's current clipping regime; None if it fails."""
    a = PiT @ y - c
    free = (a > 0.0) & (a < L)
    capped = a >= L
    cand = np.where(capped, L, 0.0)
    F = np.flatnonzero(free)
    if F.size:
        M = np.eye(F.size) - PiT[np.ix_(F, F)]
        rhs = PiT[np.ix_(F, np.flatnonzero(capped))] @ L[capped] - c[F]
        try:
            yF = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            return None
        if np.any(yF < -1e-9) or np.any(yF > L[F] + 1e-9):
            return None
        cand[F] = np.clip(yF, 0.0, L[F])
    resid = float(np.abs(np.clip(PiT @ cand - c, 0.0, L) - cand).max(initial=0.0))
    if resid > 1e-11 * max(1.0, float(np.abs(cand).max(initial=0.0))):
        return None
    return cand


def clear_fixed_point(problem: ClearingProblem, b, greatest: bool = False) -> np.ndarray:
    """Least (default) or greatest fixed point of the clearing map for injections b."""
    b = np.asarray(b, dtype=float)
    if b.shape != (problem.d,) or np.any(b < 0) or not np.all(np.isfinite(b)):
        raise InvalidParams("b must be a nonnegative vector of length d")
    return _fixed_point(problem.Pi.T.copy(), problem.L, problem.x + b, greatest=greatest)


def _fixed_point(PiT, L, c, greatest: bool = False) -> np.ndarray:
    """Monotone Picard iteration with an exact regime polish near convergence."""
    d = L.size
    L_inf = float(L.max(initial=0.0))
    y = L.copy() if greatest else np.zeros(d)
    scale = max(1.0, L_inf, float(np.abs(c).max(initial=0.0)))
    cap = _iteration_cap(d, L_inf)
    for k in range(cap):
        z = np.clip(PiT @ y - c, 0.0, L)
        delta = float(np.abs(z - y).max(initial=0.0))
        y = z
        if delta == 0.0:
            return y
        if delta < 1e-6 * scale:
            polished = _regime_polish(PiT, L, c, y)
            if polished is not None and np.abs(polished - y).max() < 1e-4 * scale:
                return polished
            if delta <= 1e-15 * scale:
                break
    resid = float(np.abs(np.clip(PiT @ y - c, 0.0, L) - y).max(initial=0.0))
    if resid > RESIDUAL_LIMIT:
        raise NonConvergence(f"clearing iteration residual {resid:.3e} after cap")
    return y


def _fixed_point_batch(Pi, L, C) -> np.ndarray:
    """Least fixed points for many equity rows at once (row k solves with c = C[k])."""
    m, d = C.shape
    Y = np.zeros((m, d))
    L_inf = float(L.max(initial=0.0))
    scale = max(1.0, L_inf, float(np.abs(C).max(initial=0.0)))
    cap = _iteration_cap(d, L_inf)
    PiT = Pi.T.copy()
    for _ in range(cap):
        Z = np.clip(Y @ Pi - C, 0.0, L)
        delta = np.abs(Z - Y).max(axis=1, initial=0.0)
        Y = Z
        if float(delta.max(initial=0.0)) <= 1e-14 * scale:
            return Y
    # slow rows (near-critical cycles) get the polishing single-row solver
    resids = np.abs(np.clip(Y @ Pi - C, 0.0, L) - Y).max(axis=1, initial=0.0)
    for k in np.flatnonzero(resids > 1e-14 * scale):
        Y[k] = _fixed_point(PiT, L, C[k])
    return Y


def _objective(PiT, L, x, gamma, b, y, objective: str) -> float:
    a = PiT @ y - x - b
    cost = 0.0 if not b.any() else gamma * float(b.sum())
    if objective == "cm1":
        return -float(np.maximum(a, 0.0).sum()) - cost
    return -float(y.sum()) - cost


def injection_box(x, Pi, L) -> np.ndarray:
    """Upper bounds b_i <= x_i^- + (Pi^T L)_i; larger injections are pure cost."""
    return np.maximum(-np.asarray(x, dtype=float), 0.0) + np.asarray(Pi, dtype=float).T @ L


class _FreeSetInverses:
    """Per-problem cache of (I - PiT[F, F])^-1 keyed by the free-set mask.

    Within one clearing problem the same small free sets recur across
    line searches; the stage velocity for coordinate i is a column of
    the cached inverse.  Sets whose system is singular, or whose
    inverse is not elementwise nonnegative (a supercritical cycle, so
    the monotone stage calculus does not apply), cache as None.
    """

    _MISSING = object()

    def __init__(self, PiT):
        self.PiT = PiT
        self.d = PiT.shape[0]
        self.cache: dict[bytes, tuple | None] = {}

    def entry(self, free):
        key = free.tobytes()
        ent = self.cache.get(key, self._MISSING)
        if ent is self._MISSING:
            F = np.flatnonzero(free)
            M = np.eye(F.size) - self.PiT[np.ix_(F, F)]
            try:
                inv = np.linalg.inv(M)
            except np.linalg.LinAlgError:
                inv = None
            if inv is not None and float(inv.min(initial=0.0)) < -1e-9:
                inv = None
            if inv is None:
                ent = None
            else:
                posmap = np.full(self.d, -1)
                posmap[F] = np.arange(F.size)
                ent = (F, inv, posmap)
            self.cache[key] = ent
        return ent

    def velocity(self, free, i):
        """dy/dt restricted to the free set for a unit rise in b_i; None if degenerate."""
        ent = self.entry(free)
        if ent is None:
            return None
        F, inv, posmap = ent
        v = np.zeros(free.size)
        v[F] = -inv[:, posmap[i]]
        return v


def _line_search(PiT, L, x, gamma, b, y0, i, t_max, objective, direction, V0, inverses, a0=None):
    """Exact maximization of V(b + direction * t * e_i) over t in [0, t_max].

    Traces the piecewise-linear path of the least fixed point: within a
    stage dy/dt is a cached inverse column on the free set, and every
    clipping argument moves monotonically (down when injecting, up when
    withdrawing), so at most 2d regime stages occur.  Returns
    (t*, V(t*), y(t*)), or None on a degenerate (singular) stage.
    """
    d = L.size
    y = y0
    t = 0.0
    a = (PiT @ y - x - b) if a0 is None else a0
    V = V0
    best_t, best_V, best_y = 0.0, V0, y0
    old_err = np.seterr(divide="ignore", invalid="ignore")
    try:
        for _ in range(2 * d + 4):
            # regime boundaries belong to the side the argument is moving
            # into: injecting (direction > 0) makes every argument fall,
            # withdrawing makes every argument rise
            if direction > 0:
                free = (a > 1e-12) & (a <= L + 1e-12)
                shortfall = a > 1e-12
            else:
                free = (a >= -1e-12) & (a < L - 1e-12)
                shortfall = a > -1e-12
            if direction > 0 and not (free[i] or a[i] > L[i] + 1e-12):
                break  # i's argument is below zero: slope is -gamma from here on
            if free[i]:
                v = inverses.velocity(free, i)
                if v is None:
                    return None
                if direction < 0:
                    v = -v
                da = PiT @ v
            else:
                v = None
                da = np.zeros(d)
            da[i] -= direction
            if objective == "cm1":
                slope = -float(da[shortfall].sum()) - direction * gamma
            else:
                slope = (0.0 if v is None else -float(v.sum())) - direction * gamma
            # next regime boundary: every argument moves monotonically, so
            # the stage ends at the first positive crossing of 0 or a cap
            to_zero = -a / da
            to_cap = (L - a) / da
            dt_arr = np.minimum(
                np.where(to_zero > 1e-13, to_zero, np.inf),
                np.where(to_cap > 1e-13, to_cap, np.inf),
            )
            dt = max(min(float(dt_arr.min()), t_max - t), 0.0)
            t = min(t + dt, t_max)
            if v is not None:
                y = y + v * dt
            a = a + da * dt
            V = V + slope * dt
            if V > best_V + 1e-12 * max(1.0, abs(best_V)):
                best_t, best_V, best_y = t, V, y.copy()
            if t >= t_max - 1e-15:
                break
    finally:
        np.seterr(**old_err)
    return best_t, best_V, best_y


def _ascend(PiT, L, x, gamma, b0, box, objective, inverses, y0=None):
    """Bidirectional coordinate-ascent sweeps from b0; (b, y, V) at the local optimum.

    Gauss-Seidel style: coordinates are swept in order and an improving
    exact line search is applied immediately; both directions are tried
    (injecting more, or withdrawing an earlier injection), so greedy
    early moves can be walked back in later sweeps.  Upward candidates
    need a positive clipping argument (anything else earns a flat
    -gamma slope forever); downward candidates need b_i > 0.
    """
    d = L.size
    b = b0.copy()
    y = _fixed_point(PiT, L, x + b) if y0 is None else y0.copy()
    V = _objective(PiT, L, x, gamma, b, y, objective)
    moves = 0
    for _ in range(16 * d):
        improved = False
        a = PiT @ y - x - b
        for i in range(d):
            for direction in (1.0, -1.0):
                room = box[i] - b[i] if direction > 0 else b[i]
                if room <= 1e-12:
                    continue
                if direction > 0 and a[i] <= 1e-12:
                    continue
                res = _line_search(
                    PiT, L, x, gamma, b, y, i, room, objective, direction, V,
                    inverses, a0=a.copy(),
                )
                if res is None:
                    continue
                t_star, V_star, y_star = res
                if t_star <= 0.0 or V_star <= V + 1e-11 * max(1.0, abs(V)):
                    continue
                b_new = b.copy()
                b_new[i] = min(max(b[i] + direction * t_star, 0.0), box[i])
                # the traced y is exact in exact arithmetic; re-solve on drift
                resid = np.abs(np.clip(PiT @ y_star - x - b_new, 0.0, L) - y_star).max()
                y_new = y_star if resid <= 1e-10 else _fixed_point(PiT, L, x + b_new)
                V_new = _objective(PiT, L, x, gamma, b_new, y_new, objective)
                if V_new <= V + 1e-12 * max(1.0, abs(V)):
                    continue  # the traced improvement did not survive re-evaluation
                b, y, V = b_new, y_new, V_new
                a = PiT @ y - x - b
                improved = True
                moves += 1
        if not improved or moves > 16 * d:
            break
    return b, y, V


def _optimize_injections(PiT, L, x, gamma, box, objective, y_base=None, inverses=None):
    """Best coordinate-ascent result over the two prescribed restarts."""
    d = L.size
    if inverses is None:
        inverses = _FreeSetInverses(PiT)
    starts = [(np.zeros(d), y_base)]
    bailout = np.minimum(np.maximum(-x, 0.0), box)
    if bailout.any():
        starts.append((bailout, None))
    best = None
    for b0, y0 in starts:
        b, y, V = _ascend(PiT, L, x, gamma, b0, box, objective, inverses, y0=y0)
        key = (V, -float(b.sum()), tuple(-b))
        if best is None or key > best[0]:
            best = (key, b, y, V)
    _, b, y, V = best
    return b, y, V


def _solve(problem: ClearingProblem, objective: str) -> ClearingSolution:
    PiT = problem.Pi.T.copy()
    L, x, gamma = problem.L, problem.x, problem.gamma
    if math.isinf(gamma):
        y = _fixed_point(PiT, L, x)
        b = np.zeros(problem.d)
        return ClearingSolution(y, b, _objective(PiT, L, x, gamma, b, y, objective))
    box = injection_box(x, problem.Pi, L)
    b, y, V = _optimize_injections(PiT, L, x, gamma, box, objective)
    return ClearingSolution(y, b, V)


def solve_cm1(problem: ClearingProblem) -> ClearingSolution:
    """Maximize total negative shortfall net of injection cost (aggregate value of x)."""
    return _solve(problem, "cm1")


def solve_cm2(problem: ClearingProblem) -> ClearingSolution:
    """Maximize total negative liability reduction net of injection cost."""
    return _solve(problem, "cm2")


def solve_many(
    Pi, L, gamma, X, objective: str = "cm1",
    zero_injections: bool = False, threads: int = 1,
):
    """Solve one clearing problem per row of X; returns (values, B, Y).

    Rows without any shortfall at b = 0 are screened out in one batched
    fixed-point pass; only genuinely distressed rows enter the
    per-scenario injection optimization.  ``zero_injections`` forces
    b = 0 everywhere (the non-intervening regulator).  ``threads``
    parallelizes the per-row optimization only; every row's result is
    computed identically regardless of the thread count.
    """
    X = np.asarray(X, dtype=float)
    m, d = X.shape
    Pi = np.asarray(Pi, dtype=float)
    PiT = Pi.T.copy()
    L = np.asarray(L, dtype=float)
    Y = _fixed_point_batch(Pi, L, X.copy())
    S = np.maximum(Y @ Pi - X, 0.0)
    B = np.zeros((m, d))
    if objective == "cm1":
        values = -S.sum(axis=1)
    else:
        values = -Y.sum(axis=1)
    if zero_injections or math.isinf(gamma):
        return values, B, Y
    box_base = Pi.T @ L
    distressed = np.flatnonzero(S.max(axis=1, initial=0.0) > 0.0)
    inverses = _FreeSetInverses(PiT)  # free-set systems recur across scenarios

    def solve_row(k: int):
        x = X[k]
        box = np.maximum(-x, 0.0) + box_base
        return k, _optimize_injections(
            PiT, L, x, gamma, box, objective, y_base=Y[k], inverses=inverses
        )

    if threads > 1 and distressed.size > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_row, distressed))
    else:
        results = [solve_row(k) for k in distressed]
    for k, (b, y, V) in results:
        values[k], B[k], Y[k] = V, b, y
    return values, B, Y


def brute_force_oracle(
    problem: ClearingProblem, grid_step: float, objective: str = "cm1"
) -> ClearingSolution:
    """Exhaustive grid search over injections for d <= 3; the verification oracle.

    The grid covers [0, b_max] per coordinate with b_max = x^- + Pi^T L;
    the inner fixed point is solved for every grid point (batched), and
    the best grid point is returned (earliest in C order on exact ties).
    """
    if problem.d > 3:
        raise DimensionTooLarge("brute force supports d <= 3 only")
    if not grid_step > 0:
        raise InvalidParams("grid_step must be positive")
    Pi, L, x, gamma = problem.Pi, problem.L, problem.x, problem.gamma
    d = problem.d
    if math.isinf(gamma):
        axes = [np.zeros(1)] * d
    else:
        box = injection_box(x, Pi, L)
        axes = [np.arange(int(math.floor(bi / grid_step + 1e-9)) + 1) * grid_step for bi in box]
    best_val = -math.inf
    best_b = best_y = None
    chunk = 1 << 18
    grids = np.meshgrid(*axes, indexing="ij")
    Ball = np.stack([g.ravel() for g in grids], axis=1)
    for lo in range(0, Ball.shape[0], chunk):
        B = Ball[lo : lo + chunk]
        Y = _fixed_point_batch(Pi, L, x + B)
        cost = gamma * B.sum(axis=1)
        cost[B.sum(axis=1) == 0.0] = 0.0
        if objective == "cm1":
            vals = -np.maximum(Y @ Pi - x - B, 0.0).sum(axis=1) - cost
        else:
            vals = -Y.sum(axis=1) - cost
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_b = B[k].copy()
            best_y = Y[k].copy()
    return ClearingSolution(best_y, best_b, best_val)
