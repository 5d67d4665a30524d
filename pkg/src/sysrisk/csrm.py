"""Composition and decomposition of conditional systemic risk measures.

A systemic risk measure here is the composition of a conditional base
risk measure (eta) with a conditional aggregation (lambda):

    rho(X) = eta( lambda(X) | G ),

evaluated on a finite space.  The composition is the easy direction;
the constructive converse extracts the aggregation from rho's values
on constant vectors,

    lambda_hat(x, w) = -rho(x)(w),

and the base measure from probes, eta_hat(lambda(X)) := rho(X), with
well-definedness enforced by checking that probes with equal state-wise
aggregates receive equal risk.

``check_axiom`` runs randomized tests of the risk-consistent axioms,
the properties on constants, and the plain properties on random
vectors.  Hypothesis inputs are CONSTRUCTED, not rejection-sampled:
state-wise mixture targets are hit exactly by bisecting the continuous
aggregation along segments (for mixtures) or along the diagonal (for
scalings), so every trial genuinely exercises the axiom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationSpec
from .errors import InconsistentRho, InvalidParams, UnknownAxiom
from .prob_space import FiniteProbSpace, Partition, is_measurable
from .report import PropertyCheck, PropertyReport
from .risk_measures import RiskMeasureSpec

#: absolute tolerance for axiom verdicts
VERDICT_TOL = 1e-9

RISK_CONSISTENT_AXIOMS = (
    "risk_antitonicity",
    "risk_convexity",
    "risk_quasiconvexity",
    "risk_positive_homogeneity",
    "risk_regularity",
)
CONSTANT_AXIOMS = (
    "antitone_on_constants",
    "convexity_on_constants",
    "positive_homogeneity_on_constants",
)
PLAIN_AXIOMS = ("antitone", "convex", "quasiconvex", "positively_homogeneous")
ALL_AXIOMS = RISK_CONSISTENT_AXIOMS + CONSTANT_AXIOMS + PLAIN_AXIOMS


@dataclass(frozen=True)
class RiskMap:
    """A raw conditional risk map given by a callable X (n, d) -> values (n,).

    ``constant_probe``, if provided, vectorizes evaluation on constant
    vectors: xs (m, d) -> (m, n_atoms).  Used for custom maps that are
    not compositions of shipped components.
    """

    space: FiniteProbSpace
    partition: Partition
    d: int
    fn: object
    constant_probe: object = None

    def evaluate(self, X) -> np.ndarray:
        X = _check_vector(self.space, self.d, X)
        return np.asarray(self.fn(X), dtype=float)


@dataclass(frozen=True)
class CSRM:
    """eta composed with lambda on a finite space, conditioned on a partition."""

    space: FiniteProbSpace
    partition: Partition
    eta: RiskMeasureSpec
    lam: AggregationSpec
    d: int
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.partition.n_atoms != self.space.n_atoms:
            raise InvalidParams("partition and space disagree on the atom count")
        if self.validate:
            self._validate_constancy()

    def _validate_constancy(self):
        """eta must be constant on lambda and lambda's constants G-measurable."""
        n, d = self.space.n_atoms, self.d
        rng = np.random.default_rng(0xC0FFEE)
        xs = np.vstack(
            [np.zeros(d), np.ones(d), -np.ones(d), rng.uniform(-3, 3, size=(5, d))]
        )
        for x in xs:
            F = self.lam.extend(np.tile(x, (n, 1)))
            if not is_measurable(F, self.partition, atol=1e-9):
                raise InvalidParams(
                    "aggregation of constants is not measurable wrt the partition"
                )
            got = self.eta.evaluate(self.space, F, self.partition)
            if np.abs(got + F).max() > 1e-10:
                raise InvalidParams("eta is not constant on the aggregation")

    def evaluate(self, X) -> np.ndarray:
        X = _check_vector(self.space, self.d, X)
        return self.eta.evaluate(self.space, self.lam.extend(X), self.partition)

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "partition": self.partition.to_json(),
            "eta": self.eta.to_json(),
            "lambda": self.lam.to_json(),
            "d": self.d,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CSRM":
        space = FiniteProbSpace.from_json(doc["space"])
        return cls(
            space=space,
            partition=Partition.from_json(doc["partition"], space.n_atoms),
            eta=RiskMeasureSpec.from_json(doc["eta"]),
            lam=AggregationSpec.from_json(doc["lambda"]),
            d=int(doc["d"]),
        )


def _check_vector(space, d, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (space.n_atoms, d):
        raise InvalidParams(f"X must have shape ({space.n_atoms}, {d})")
    return X


def evaluate(rho, X) -> np.ndarray:
    """rho applied to a random vector; G-measurable values, one per atom."""
    return rho.evaluate(X)


# ---------------------------------------------------------------------------
# state-wise probing: lambda_hat(x, w) = -rho(constant x)(w)
# ---------------------------------------------------------------------------


def _probe_constants(rho, xs) -> np.ndarray:
    """lambda_hat on a batch of deterministic vectors: (m, n_atoms)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = rho.space.n_atoms
    if isinstance(rho, CSRM):
        return rho.lam.batch_constants(xs, n)
    if getattr(rho, "constant_probe", None) is not None:
        # constant_probe returns the risk of constants; the aggregate is its negative
        return -np.asarray(rho.constant_probe(xs), dtype=float)
    return np.vstack([-rho.evaluate(np.tile(x, (n, 1))) for x in xs])


def _probe_diagonal(rho, X) -> np.ndarray:
    """lambda_hat(X(w), w) per atom w, i.e. the state-wise aggregate of X."""
    X = np.asarray(X, dtype=float)
    n = rho.space.n_atoms
    if isinstance(rho, CSRM):
        return rho.lam.extend(X)
    if getattr(rho, "constant_probe", None) is not None:
        vals = -np.asarray(rho.constant_probe(X), dtype=float)
        return vals[np.arange(n), np.arange(n)]
    return np.array([-rho.evaluate(np.tile(X[w], (n, 1)))[w] for w in range(n)])


def default_probe_grid(d: int, n_random: int = 32, seed: int = 0) -> np.ndarray:
    """Integer lattice {-2..2}^d plus uniform random points in [-5, 5]^d."""
    axes = [np.arange(-2.0, 3.0)] * d
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    rng = np.random.default_rng(seed)
    return np.vstack([lattice, rng.uniform(-5.0, 5.0, size=(n_random, d))])


@dataclass(frozen=True)
class ExtractedAggregation:
    """The state-wise aggregation recovered from a risk map on constants."""

    rho: object
    points: np.ndarray
    values: np.ndarray  # (n_points, n_atoms)

    def value_at(self, x, atom: int) -> float:
        n = self.rho.space.n_atoms
        return -float(self.rho.evaluate(np.tile(np.asarray(x, dtype=float), (n, 1)))[atom])

    def extend(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        n = self.rho.space.n_atoms
        return np.array(
            [
                -float(self.rho.evaluate(np.tile(X[w], (n, 1)))[w])
                for w in range(n)
            ]
        )

    def is_deterministic(self, atol: float = 1e-12) -> bool:
        """True iff the recovered aggregation is atom-independent on the grid."""
        return float(np.ptp(self.values, axis=1).max()) <= atol


def extract_aggregation(rho, probe_grid=None) -> ExtractedAggregation:
    """Sample lambda_hat(x, w) = -rho(x)(w) on a probe grid of constants."""
    d = rho.d
    if probe_grid is None:
        probe_grid = default_probe_grid(d)
    pts = np.atleast_2d(np.asarray(probe_grid, dtype=float))
    n = rho.space.n_atoms
    values = np.vstack([-rho.evaluate(np.tile(x, (n, 1))) for x in pts])
    return ExtractedAggregation(rho=rho, points=pts, values=values)


@dataclass(frozen=True)
class ExtractedBase:
    """eta_hat sampled on the aggregated images of the probe vectors."""

    aggregates: np.ndarray  # (n_probes, n_atoms): F_k = lambda_hat(X_k(.), .)
    risks: np.ndarray  # (n_probes, n_atoms): eta_hat(F_k) = rho(X_k)

    def lookup(self, F, atol: float = 1e-9) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        for k in range(self.aggregates.shape[0]):
            if np.abs(self.aggregates[k] - F).max() <= atol:
                return self.risks[k]
        raise KeyError("F was not among the probed aggregates")

    def antitone_on_probes(self, atol: float = 1e-10) -> bool:
        """Whether eta_hat is antitone across all comparable probe pairs."""
        m = self.aggregates.shape[0]
        for i in range(m):
            for j in range(m):
                if np.all(self.aggregates[i] >= self.aggregates[j] - atol):
                    if np.any(self.risks[i] > self.risks[j] + 1e-9):
                        return False
        return True


def extract_base(rho, lambda_hat: ExtractedAggregation, probe_points) -> ExtractedBase:
    """Define eta_hat(lambda(X)) := rho(X) on probes and verify well-definedness.

    Raises InconsistentRho when two probes with state-wise equal
    aggregates receive different risks, which is exactly a violation of
    the pointwise-consistency property underpinning the decomposition.
    """
    aggs, risks = [], []
    for X in probe_points:
        aggs.append(lambda_hat.extend(X))
        risks.append(np.asarray(rho.evaluate(X), dtype=float))
    aggregates = np.vstack(aggs)
    values = np.vstack(risks)
    m = aggregates.shape[0]
    scale = max(1.0, float(np.abs(aggregates).max()))
    for i in range(m):
        for j in range(i + 1, m):
            if np.abs(aggregates[i] - aggregates[j]).max() <= 1e-12 * scale:
                if np.abs(values[i] - values[j]).max() > 1e-10:
                    raise InconsistentRho(
                        "probes with equal state-wise aggregates got different risks"
                    )
    return ExtractedBase(aggregates=aggregates, risks=values)


# ---------------------------------------------------------------------------
# axiom harness
# ---------------------------------------------------------------------------


def _block_measurable(rng, partition: Partition, low: float, high: float) -> np.ndarray:
    vals = rng.uniform(low, high, size=partition.n_blocks)
    out = np.empty(partition.n_atoms)
    for k, b in enumerate(partition.blocks):
        out[list(b)] = vals[k]
    return out


def _rand_vector(rng, n: int, d: int) -> np.ndarray:
    X = rng.uniform(-3.0, 3.0, size=(n, d))
    if rng.uniform() < 0.5:
        spikes = rng.integers(0, 2, size=(n, d)).astype(bool)
        X = np.where(spikes, X * rng.uniform(1.0, 3.0), 0.0)
    return X


def _bisect_segment(rho, X, Y, targets, iters: int = 80) -> np.ndarray:
    """Find Z with state-wise aggregate equal to ``targets``.

    Z(w) is searched on the segment [Y(w), X(w)]; the aggregate is
    continuous there and the target lies between the endpoint values,
    so sign-change bisection converges regardless of monotonicity.
    """
    n = X.shape[0]
    lo = np.zeros(n)
    hi = np.ones(n)
    g_lo = _probe_diagonal(rho, Y)
    mid = 0.5 * (lo + hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        Z = mid[:, None] * X + (1.0 - mid[:, None]) * Y
        g_mid = _probe_diagonal(rho, Z)
        if np.abs(g_mid - targets).max() <= 1e-13 * max(1.0, np.abs(targets).max()):
            return Z
        go_up = (g_mid - targets) * (g_lo - targets) > 0.0
        lo = np.where(go_up, mid, lo)
        g_lo = np.where(go_up, g_mid, g_lo)
        hi = np.where(go_up, hi, mid)
    return mid[:, None] * X + (1.0 - mid[:, None]) * Y


def _bisect_diagonal(rho, targets, iters: int = 90) -> np.ndarray | None:
    """Find Y(w) = c_w * 1_d with state-wise aggregate equal to ``targets``.

    Expands a bracket along the diagonal (the aggregate is isotone and
    continuous in c) and bisects; None if some target is unreachable.
    """
    n = targets.size
    d = rho.d
    lo = np.full(n, -8.0)
    hi = np.full(n, 8.0)

    def g(c):
        return _probe_diagonal(rho, c[:, None] * np.ones((n, d)))

    for _ in range(40):
        bad_lo = g(lo) > targets
        bad_hi = g(hi) < targets
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, lo * 2.0, lo)
        hi = np.where(bad_hi, hi * 2.0, hi)
        if np.abs(lo).max() > 1e7 or np.abs(hi).max() > 1e7:
            return None
    else:
        return None
    mid = 0.5 * (lo + hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if np.abs(g_mid - targets).max() <= 1e-13 * max(1.0, np.abs(targets).max()):
            break
        below = g_mid < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return mid[:, None] * np.ones((n, d))


def check_axiom(rho, axiom: str, trials: int, rng_seed: int) -> PropertyReport:
    """Randomized check of one axiom; stops at the first counterexample found."""
    if axiom not in ALL_AXIOMS:
        raise UnknownAxiom(f"{axiom!r}; expected one of {ALL_AXIOMS}")
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    n, d, G = rho.space.n_atoms, rho.d, rho.partition
    tol = VERDICT_TOL
    check = PropertyCheck(axiom, True, trials)

    for trial in range(trials):
        if axiom == "risk_antitonicity":
            Y = _rand_vector(rng, n, d)
            X = Y - np.abs(_rand_vector(rng, n, d))
            pX, pY = -_probe_diagonal(rho, X), -_probe_diagonal(rho, Y)
            swap = pX < pY  # enforce the hypothesis pointwise
            if swap.any():
                X2 = np.where(swap[:, None], Y, X)
                Y = np.where(swap[:, None], X, Y)
                X = X2
            rX, rY = rho.evaluate(X), rho.evaluate(Y)
            if np.any(rX < rY - tol):
                check.passed = False
                check.counterexample = {"X": X, "Y": Y, "rho_X": rX, "rho_Y": rY}

        elif axiom in ("risk_convexity", "risk_quasiconvexity"):
            if trial % 3 == 2:
                # adversarial pair: disjoint loss spikes per block, the
                # geometry that separates quantiles from their mixtures
                X = np.zeros((n, d))
                Y = np.zeros((n, d))
                for blk in G.blocks:
                    atoms = rng.permutation(blk)
                    X[atoms[0], rng.integers(d)] = -rng.uniform(5.0, 15.0)
                    if len(atoms) > 1:
                        Y[atoms[1], rng.integers(d)] = -rng.uniform(5.0, 15.0)
            else:
                X = _rand_vector(rng, n, d)
                Y = _rand_vector(rng, n, d)
            alpha = _block_measurable(rng, G, 0.0, 1.0)
            gX, gY = _probe_diagonal(rho, X), _probe_diagonal(rho, Y)
            targets = alpha * gX + (1.0 - alpha) * gY
            Z = _bisect_segment(rho, X, Y, targets)
            rX, rY, rZ = rho.evaluate(X), rho.evaluate(Y), rho.evaluate(Z)
            bound = (
                alpha * rX + (1.0 - alpha) * rY
                if axiom == "risk_convexity"
                else np.maximum(rX, rY)
            )
            if np.any(rZ > bound + tol):
                check.passed = False
                check.counterexample = {
                    "X": X, "Y": Y, "Z": Z, "alpha": alpha,
                    "rho_Z": rZ, "bound": bound,
                }

        elif axiom == "risk_positive_homogeneity":
            X = _rand_vector(rng, n, d)
            alpha = _block_measurable(rng, G, 0.0, 1.8)
            if trial % 7 == 0:
                alpha = np.zeros(n)
            targets = alpha * _probe_diagonal(rho, X)
            Y = _bisect_diagonal(rho, targets)
            if Y is None:
                continue  # target outside the diagonal image; resample
            rX, rY = rho.evaluate(X), rho.evaluate(Y)
            if np.abs(rY - alpha * rX).max() > tol:
                check.passed = False
                check.counterexample = {
                    "X": X, "Y": Y, "alpha": alpha, "rho_Y": rY, "alpha_rho_X": alpha * rX,
                }

        elif axiom == "risk_regularity":
            vals = rng.uniform(-4.0, 4.0, size=(G.n_blocks, d))
            X = np.empty((n, d))
            for k, b in enumerate(G.blocks):
                X[list(b)] = vals[k]
            rX = rho.evaluate(X)
            pointwise = -_probe_diagonal(rho, X)
            if np.abs(rX - pointwise).max() > tol:
                check.passed = False
                check.counterexample = {"X": X, "rho_X": rX, "pointwise": pointwise}

        elif axiom == "antitone_on_constants":
            y = rng.uniform(-4.0, 4.0, size=d)
            x = y + rng.uniform(0.0, 4.0, size=d)
            rx = rho.evaluate(np.tile(x, (n, 1)))
            ry = rho.evaluate(np.tile(y, (n, 1)))
            if np.any(rx > ry + tol):
                check.passed = False
                check.counterexample = {"x": x, "y": y, "rho_x": rx, "rho_y": ry}

        elif axiom == "convexity_on_constants":
            x = rng.uniform(-4.0, 4.0, size=d)
            y = rng.uniform(-4.0, 4.0, size=d)
            lam = float(rng.uniform())
            rmix = rho.evaluate(np.tile(lam * x + (1 - lam) * y, (n, 1)))
            bound = lam * rho.evaluate(np.tile(x, (n, 1))) + (1 - lam) * rho.evaluate(
                np.tile(y, (n, 1))
            )
            if np.any(rmix > bound + tol):
                check.passed = False
                check.counterexample = {"x": x, "y": y, "lambda": lam, "rho_mix": rmix, "bound": bound}

        elif axiom == "positive_homogeneity_on_constants":
            x = rng.uniform(-4.0, 4.0, size=d)
            lam = float(rng.uniform(0.0, 2.0))
            rs = rho.evaluate(np.tile(lam * x, (n, 1)))
            r = rho.evaluate(np.tile(x, (n, 1)))
            if np.abs(rs - lam * r).max() > tol:
                check.passed = False
                check.counterexample = {"x": x, "lambda": lam, "rho_scaled": rs, "scaled_rho": lam * r}

        elif axiom == "antitone":
            Y = _rand_vector(rng, n, d)
            X = Y + np.abs(_rand_vector(rng, n, d))
            rX, rY = rho.evaluate(X), rho.evaluate(Y)
            if np.any(rX > rY + tol):
                check.passed = False
                check.counterexample = {"X": X, "Y": Y, "rho_X": rX, "rho_Y": rY}

        elif axiom in ("convex", "quasiconvex"):
            X = _rand_vector(rng, n, d)
            Y = _rand_vector(rng, n, d)
            alpha = _block_measurable(rng, G, 0.0, 1.0)
            Z = alpha[:, None] * X + (1.0 - alpha[:, None]) * Y
            rX, rY, rZ = rho.evaluate(X), rho.evaluate(Y), rho.evaluate(Z)
            bound = (
                alpha * rX + (1.0 - alpha) * rY if axiom == "convex" else np.maximum(rX, rY)
            )
            if np.any(rZ > bound + tol):
                check.passed = False
                check.counterexample = {"X": X, "Y": Y, "alpha": alpha, "rho_Z": rZ, "bound": bound}

        elif axiom == "positively_homogeneous":
            X = _rand_vector(rng, n, d)
            alpha = _block_measurable(rng, G, 0.0, 2.0)
            rs = rho.evaluate(alpha[:, None] * X)
            r = rho.evaluate(X)
            if np.abs(rs - alpha * r).max() > tol:
                check.passed = False
                check.counterexample = {"X": X, "alpha": alpha, "rho_scaled": rs, "scaled_rho": alpha * r}

        if not check.passed:
            check.counterexample["trial"] = trial
            break

    return PropertyReport([check])
