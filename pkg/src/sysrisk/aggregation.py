"""Deterministic and conditional aggregation functions.

An aggregation collapses a d-vector of institution profits/losses into
one systemic figure, per state.  ``value_at(x, atom)`` evaluates the
aggregate of a deterministic vector in one state; ``extend`` applies it
atom-wise to a random vector.  Deterministic variants ignore the atom.

Shipped variants:

* sum              - plain netting
* loss             - only losses count (no subsidization by profits)
* exp              - losses beyond a threshold are penalized exponentially
* bc               - losses weighted by relative liability size, profits
                     above firm thresholds weighted by beta
* countercyclical  - real-economy losses carry a relaxed weight alpha
                     on designated distress states
* discounted       - any inner aggregation times a positive,
                     state-dependent discount factor
* cm1 / cm2        - the contagion clearing aggregates (see clearing.py)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import clearing
from .errors import InvalidParams
from .report import PropertyCheck, PropertyReport


class AggregationSpec:
    """Base class; subclasses are immutable and evaluate purely."""

    kind: str = ""

    def value_at(self, x, atom: int) -> float:
        """Aggregate of the deterministic vector x in state ``atom``."""
        raise NotImplementedError

    def extend(self, X) -> np.ndarray:
        """Atom-wise aggregate of a random vector: row w of X evaluated in state w."""
        X = np.asarray(X, dtype=float)
        return np.array([self.value_at(X[w], w) for w in range(X.shape[0])])

    def batch_constants(self, xs, n_atoms: int) -> np.ndarray:
        """Aggregate each deterministic row of xs in every state: (m, n_atoms)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.column_stack(
            [[self.value_at(x, w) for x in xs] for w in range(n_atoms)]
        )

    def to_json(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_json(doc: dict) -> "AggregationSpec":
        kind = doc.get("kind")
        if kind == "sum":
            return SumAgg()
        if kind == "loss":
            return LossAgg()
        if kind == "exp":
            return ExpAgg(
                theta=np.asarray(doc["theta"], dtype=float),
                gamma=np.asarray(doc["gamma"], dtype=float),
            )
        if kind == "bc":
            return BCAgg(
                alpha=np.asarray(doc["alpha"], dtype=float),
                beta=np.asarray(doc["beta"], dtype=float),
                theta=np.asarray(doc["theta"], dtype=float),
            )
        if kind == "countercyclical":
            return CountercyclicalAgg(
                alpha=float(doc["alpha"]),
                distress_event=tuple(doc["distress_event"]),
                real_coords=tuple(doc["real_coords"]),
            )
        if kind == "discounted":
            return DiscountedAgg(
                inner=AggregationSpec.from_json(doc["inner"]),
                discount=np.asarray(doc["discount"], dtype=float),
            )
        if kind in ("cm1", "cm2"):
            g = doc["gamma"]
            gamma = (
                math.inf
                if isinstance(g, str) and g.lower() in ("inf", "infinity")
                else float(g)
            )
            cls = CM1Agg if kind == "cm1" else CM2Agg
            return cls(
                Pi=np.asarray(doc["Pi"], dtype=float),
                L=np.asarray(doc["L"], dtype=float),
                gamma=gamma,
            )
        raise InvalidParams(f"unknown aggregation kind {kind!r}")


def aggregate_at(spec: AggregationSpec, x, atom: int) -> float:
    """Module-level alias for spec.value_at."""
    return spec.value_at(np.asarray(x, dtype=float), atom)


def extend(spec: AggregationSpec, X) -> np.ndarray:
    """Module-level alias for spec.extend."""
    return spec.extend(X)


@dataclass(frozen=True)
class SumAgg(AggregationSpec):
    """Net total profit/loss."""

    kind = "sum"

    def value_at(self, x, atom):
        return float(np.sum(x))

    def extend(self, X):
        return np.asarray(X, dtype=float).sum(axis=1)

    def batch_constants(self, xs, n_atoms):
        vals = np.atleast_2d(np.asarray(xs, dtype=float)).sum(axis=1)
        return np.repeat(vals[:, None], n_atoms, axis=1)

    def to_json(self):
        return {"kind": "sum"}


@dataclass(frozen=True)
class LossAgg(AggregationSpec):
    """Total of losses only; profits never offset another institution's loss."""

    kind = "loss"

    def value_at(self, x, atom):
        return float(np.minimum(x, 0.0).sum())

    def extend(self, X):
        return np.minimum(np.asarray(X, dtype=float), 0.0).sum(axis=1)

    def batch_constants(self, xs, n_atoms):
        vals = np.minimum(np.atleast_2d(np.asarray(xs, dtype=float)), 0.0).sum(axis=1)
        return np.repeat(vals[:, None], n_atoms, axis=1)

    def to_json(self):
        return {"kind": "loss"}


@dataclass(frozen=True)
class ExpAgg(AggregationSpec):
    """Losses below firm thresholds theta_i <= 0 are accounted for exponentially.

    Per institution the contribution is min(x_i, 0) while x_i > theta_i and

        (1 - exp(gamma_i (theta_i - x_i))) / gamma_i + theta_i

    once x_i <= theta_i; gamma_i > 0 steers how fast deep losses blow up.
    Concave but not positively homogeneous.
    """

    theta: np.ndarray
    gamma: np.ndarray
    kind = "exp"

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if theta.shape != gamma.shape:
            raise InvalidParams("theta and gamma must have equal length")
        if np.any(theta > 0):
            raise InvalidParams("theta must be <= 0")
        if np.any(gamma <= 0):
            raise InvalidParams("gamma must be > 0")
        theta.flags.writeable = False
        gamma.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gamma", gamma)

    def _terms(self, xs):
        deep = xs <= self.theta
        expo = np.where(deep, self.gamma * (self.theta - xs), 0.0)
        return np.where(
            deep,
            (1.0 - np.exp(expo)) / self.gamma + self.theta,
            np.minimum(xs, 0.0),
        )

    def value_at(self, x, atom):
        return float(self._terms(np.asarray(x, dtype=float)).sum())

    def extend(self, X):
        return self._terms(np.asarray(X, dtype=float)).sum(axis=1)

    def batch_constants(self, xs, n_atoms):
        vals = self._terms(np.atleast_2d(np.asarray(xs, dtype=float))).sum(axis=1)
        return np.repeat(vals[:, None], n_atoms, axis=1)

    def to_json(self):
        return {"kind": "exp", "theta": self.theta.tolist(), "gamma": self.gamma.tolist()}


@dataclass(frozen=True)
class BCAgg(AggregationSpec):
    """Losses weighted by relative liability size; profits above thresholds by beta.

    ``alpha`` is an (atoms, d) row-stochastic weight matrix (the relative
    size of each institution's interbank liabilities, possibly state
    dependent); ``beta, theta >= 0`` are per-institution.  Neither
    quasiconvex nor positively homogeneous when thresholds are positive.
    """

    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    kind = "bc"

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        d = alpha.shape[1]
        if beta.shape != (d,) or theta.shape != (d,):
            raise InvalidParams("beta and theta must have length d")
        if np.any(alpha < 0):
            raise InvalidParams("alpha weights must be nonnegative")
        if np.any(np.abs(alpha.sum(axis=1) - 1.0) > 1e-9):
            raise InvalidParams("alpha rows must sum to 1 on every atom")
        if np.any(beta < 0) or np.any(theta < 0):
            raise InvalidParams("beta and theta must be >= 0")
        for name, arr in (("alpha", alpha), ("beta", beta), ("theta", theta)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_atoms(self) -> int:
        return self.alpha.shape[0]

    def value_at(self, x, atom):
        x = np.asarray(x, dtype=float)
        losses = np.maximum(-x, 0.0)
        profits = np.maximum(x - self.theta, 0.0)
        return float(-self.alpha[atom] @ losses + self.beta @ profits)

    def extend(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.n_atoms:
            raise InvalidParams("X and alpha disagree on the number of atoms")
        losses = np.maximum(-X, 0.0)
        profits = np.maximum(X - self.theta, 0.0)
        return -(self.alpha * losses).sum(axis=1) + profits @ self.beta

    def batch_constants(self, xs, n_atoms):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if n_atoms != self.n_atoms:
            raise InvalidParams("n_atoms must match the alpha matrix")
        losses = np.maximum(-xs, 0.0)
        profits = np.maximum(xs - self.theta, 0.0) @ self.beta
        return -(losses @ self.alpha.T) + profits[:, None]

    def to_json(self):
        return {
            "kind": "bc",
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "theta": self.theta.tolist(),
        }


def relative_liability_weights(L) -> np.ndarray:
    """Normalize total interbank liabilities into aggregation weights L_i / sum_j L_j."""
    L = np.asarray(L, dtype=float)
    total = float(L.sum())
    if np.any(L < 0) or total <= 0:
        raise InvalidParams("liabilities must be nonnegative with positive total")
    return L / total


@dataclass(frozen=True)
class CountercyclicalAgg(AggregationSpec):
    """Loss aggregation with relaxed real-economy weight on distress states.

    Coordinates listed in ``real_coords`` are exposures to the real
    economy; their losses carry weight ``alpha`` < 1 on atoms inside the
    distress event and full weight elsewhere.  All other coordinates
    always carry full weight.
    """

    alpha: float
    distress_event: tuple
    real_coords: tuple
    kind = "countercyclical"

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidParams("alpha must lie in [0, 1)")
        object.__setattr__(
            self, "distress_event", tuple(sorted(set(int(i) for i in self.distress_event)))
        )
        object.__setattr__(
            self, "real_coords", tuple(sorted(set(int(i) for i in self.real_coords)))
        )

    def _weight(self, atom: int) -> float:
        return self.alpha if atom in self.distress_event else 1.0

    def value_at(self, x, atom):
        x = np.asarray(x, dtype=float)
        real = np.zeros(x.size, dtype=bool)
        real[list(self.real_coords)] = True
        losses = np.maximum(-x, 0.0)
        return float(-(self._weight(atom) * losses[real].sum() + losses[~real].sum()))

    def extend(self, X):
        X = np.asarray(X, dtype=float)
        n, dim = X.shape
        real = np.zeros(dim, dtype=bool)
        real[list(self.real_coords)] = True
        w = np.ones(n)
        w[list(self.distress_event)] = self.alpha
        losses = np.maximum(-X, 0.0)
        return -(w * losses[:, real].sum(axis=1) + losses[:, ~real].sum(axis=1))

    def batch_constants(self, xs, n_atoms):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        real = np.zeros(xs.shape[1], dtype=bool)
        real[list(self.real_coords)] = True
        losses = np.maximum(-xs, 0.0)
        lr = losses[:, real].sum(axis=1)
        lo = losses[:, ~real].sum(axis=1)
        w = np.ones(n_atoms)
        w[[i for i in self.distress_event if i < n_atoms]] = self.alpha
        return -(lr[:, None] * w[None, :] + lo[:, None])

    def to_json(self):
        return {
            "kind": "countercyclical",
            "alpha": self.alpha,
            "distress_event": list(self.distress_event),
            "real_coords": list(self.real_coords),
        }


@dataclass(frozen=True)
class DiscountedAgg(AggregationSpec):
    """An inner aggregation scaled by a positive state-dependent discount factor."""

    inner: AggregationSpec
    discount: np.ndarray
    kind = "discounted"

    def __post_init__(self):
        D = np.atleast_1d(np.asarray(self.discount, dtype=float))
        if np.any(D <= 0) or not np.all(np.isfinite(D)):
            raise InvalidParams("discount must be strictly positive and finite")
        D.flags.writeable = False
        object.__setattr__(self, "discount", D)

    def value_at(self, x, atom):
        return self.inner.value_at(x, atom) * float(self.discount[atom])

    def extend(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.discount.size:
            raise InvalidParams("X and discount disagree on the number of atoms")
        return self.inner.extend(X) * self.discount

    def batch_constants(self, xs, n_atoms):
        if n_atoms != self.discount.size:
            raise InvalidParams("n_atoms must match the discount factor")
        return self.inner.batch_constants(xs, n_atoms) * self.discount[None, :]

    def to_json(self):
        return {
            "kind": "discounted",
            "inner": self.inner.to_json(),
            "discount": self.discount.tolist(),
        }


@dataclass(frozen=True)
class _ClearingAgg(AggregationSpec):
    """Shared plumbing for the two contagion clearing aggregates."""

    Pi: np.ndarray
    L: np.ndarray
    gamma: float
    objective: str = field(init=False, default="")

    def __post_init__(self):
        # validate via a throwaway problem with zero equity
        probe = clearing.ClearingProblem(
            x=np.zeros(np.asarray(self.L, dtype=float).size),
            Pi=np.asarray(self.Pi, dtype=float),
            L=np.asarray(self.L, dtype=float),
            gamma=self.gamma,
        )
        object.__setattr__(self, "Pi", probe.Pi)
        object.__setattr__(self, "L", probe.L)
        object.__setattr__(self, "gamma", probe.gamma)

    def _problem(self, x) -> clearing.ClearingProblem:
        return clearing.ClearingProblem(x=x, Pi=self.Pi, L=self.L, gamma=self.gamma)

    def solve(self, x) -> clearing.ClearingSolution:
        prob = self._problem(np.asarray(x, dtype=float))
        return clearing.solve_cm1(prob) if self.objective == "cm1" else clearing.solve_cm2(prob)

    def value_at(self, x, atom):
        return self.solve(x).value

    def extend(self, X):
        values, _, _ = clearing.solve_many(
            self.Pi, self.L, self.gamma, np.asarray(X, dtype=float), objective=self.objective
        )
        return values

    def batch_constants(self, xs, n_atoms):
        vals = self.extend(np.atleast_2d(np.asarray(xs, dtype=float)))
        return np.repeat(vals[:, None], n_atoms, axis=1)

    def to_json(self):
        g = self.gamma
        return {
            "kind": self.objective,
            "Pi": self.Pi.tolist(),
            "L": self.L.tolist(),
            "gamma": "inf" if math.isinf(g) else g,
        }


@dataclass(frozen=True)
class CM1Agg(_ClearingAgg):
    """Contagion clearing aggregate counting all shortfalls net of injection cost."""

    kind = "cm1"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "objective", "cm1")


@dataclass(frozen=True)
class CM2Agg(_ClearingAgg):
    """Contagion clearing aggregate counting only losses transmitted into the system."""

    kind = "cm2"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "objective", "cm2")


def _vec_geq(a, b) -> bool:
    return bool(np.all(np.asarray(a) >= np.asarray(b)))


def check_daf_properties(
    spec: AggregationSpec,
    trials: int,
    rng_seed: int,
    dim: int | None = None,
    n_atoms: int | None = None,
    box: float = 5.0,
) -> PropertyReport:
    """Randomized isotonicity / concavity / positive-homogeneity check per atom.

    Each trial draws fresh points in [-box, box]^d; comparisons use a
    1e-9 relative tolerance.  The first counterexample found is recorded
    in the report.
    """
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    if dim is None:
        dim = _infer_dim(spec)
    if n_atoms is None:
        n_atoms = _infer_atoms(spec)
    rng = np.random.default_rng(rng_seed)
    tol = 1e-9

    iso = PropertyCheck("isotone", True, trials)
    conc = PropertyCheck("concave", True, trials)
    ph = PropertyCheck("positively_homogeneous", True, trials)
    for _ in range(trials):
        atom = int(rng.integers(n_atoms))
        y = rng.uniform(-box, box, size=dim)
        x = y + rng.uniform(0.0, box, size=dim)
        lam = float(rng.uniform())
        scale = float(rng.uniform(0.0, 2.0))
        fx = spec.value_at(x, atom)
        fy = spec.value_at(y, atom)
        if iso.passed and fx < fy - tol * max(1.0, abs(fx), abs(fy)):
            iso.passed = False
            iso.counterexample = {"x": x, "y": y, "atom": atom, "fx": fx, "fy": fy}
        z = lam * x + (1.0 - lam) * y
        fz = spec.value_at(z, atom)
        mix = lam * fx + (1.0 - lam) * fy
        if conc.passed and fz < mix - tol * max(1.0, abs(fz), abs(mix)):
            conc.passed = False
            conc.counterexample = {
                "x": x, "y": y, "lambda": lam, "atom": atom, "f_mix": fz, "mix_f": mix,
            }
        fs = spec.value_at(scale * y, atom)
        if ph.passed and abs(fs - scale * fy) > tol * max(1.0, abs(fs), abs(scale * fy)):
            ph.passed = False
            ph.counterexample = {
                "x": y, "scale": scale, "atom": atom, "f_scaled": fs, "scaled_f": scale * fy,
            }
    return PropertyReport([iso, conc, ph])


def _infer_dim(spec: AggregationSpec) -> int:
    if isinstance(spec, ExpAgg):
        return spec.theta.size
    if isinstance(spec, BCAgg):
        return spec.beta.size
    if isinstance(spec, _ClearingAgg):
        return spec.L.size
    if isinstance(spec, CountercyclicalAgg):
        return (max(spec.real_coords) + 1) if spec.real_coords else 2
    if isinstance(spec, DiscountedAgg):
        return _infer_dim(spec.inner)
    return 3  # sum/loss work in any dimension


def _infer_atoms(spec: AggregationSpec) -> int:
    if isinstance(spec, BCAgg):
        return spec.n_atoms
    if isinstance(spec, DiscountedAgg):
        return spec.discount.size
    if isinstance(spec, CountercyclicalAgg):
        return (max(spec.distress_event) + 2) if spec.distress_event else 1
    return 1
