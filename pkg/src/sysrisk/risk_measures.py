"""Conditional base risk measures: VaR, Average VaR, negative conditional expectation.

The Value at Risk convention is the strict one throughout the package:

    VaR_q(F) = -inf{ x : P(F <= x) > q },

so on a finite space the infimum is an attained atom value and mass
exactly equal to q does not count.  Average VaR is computed from the
identity

    AVaR_q(F | G) = (1/q) E[(F + VaR_q(F|G))^- | G] + VaR_q(F|G),

which is exact on finite spaces under this VaR convention; the dual
form (worst expectation over densities bounded by 1/q) lives in the
test suite as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams
from .prob_space import FiniteProbSpace, Partition, conditional_expectation


def _check_q(q: float) -> float:
    q = float(q)
    if not 0.0 < q < 1.0:
        raise InvalidParams(f"q must lie strictly inside (0, 1), got {q}")
    return q


def var(F, q: float, probs=None) -> float:
    """VaR_q of F; ``probs`` defaults to the uniform (empirical) measure.

    With uniform weights the CDF is evaluated by integer counting
    (k / n > q), which keeps empirical quantiles free of cumulative-sum
    rounding; with explicit weights a cumulative sum is used.
    """
    q = _check_q(q)
    F = np.asarray(F, dtype=float).ravel()
    if F.size == 0:
        raise InvalidParams("VaR of an empty sample is undefined")
    order = np.argsort(F, kind="stable")
    if probs is None:
        n = F.size
        k = int(np.searchsorted((np.arange(1, n + 1) / n) > q, True))
    else:
        p = np.asarray(probs, dtype=float).ravel()
        if p.shape != F.shape:
            raise InvalidParams("probs must match F in length")
        cum = np.cumsum(p[order])
        k = int(np.searchsorted(cum > q * float(p.sum()), True))
    return -float(F[order][min(k, F.size - 1)])


def conditional_var(space: FiniteProbSpace, F, G: Partition, q: float) -> np.ndarray:
    """Conditional VaR at level q: blockwise VaR under the renormalized block measure."""
    q = _check_q(q)
    F = np.asarray(F, dtype=float)
    out = np.empty(space.n_atoms)
    for b in G.blocks:
        idx = list(b)
        out[idx] = var(F[idx], q, probs=space.probs[idx])
    return out


def conditional_avar(space: FiniteProbSpace, F, G: Partition, q: float) -> np.ndarray:
    """Conditional Average VaR at level q via the shortfall identity; always >= conditional VaR."""
    q = _check_q(q)
    F = np.asarray(F, dtype=float)
    v = conditional_var(space, F, G, q)
    shortfall = np.maximum(-(F + v), 0.0)
    return conditional_expectation(space, shortfall, G) / q + v


def neg_conditional_expectation(
    space: FiniteProbSpace, F, G: Partition, density=None
) -> np.ndarray:
    """Negative conditional expectation, optionally under an alternative density."""
    return -conditional_expectation(space, F, G, density=density)


class RiskMeasureSpec:
    """Tagged base-risk-measure description; subclasses implement ``evaluate``."""

    kind: str = ""

    def evaluate(self, space: FiniteProbSpace, F, G: Partition) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_json(doc: dict) -> "RiskMeasureSpec":
        kind = doc.get("kind")
        if kind == "var":
            return VaRSpec(q=float(doc["q"]))
        if kind == "avar":
            return AVaRSpec(q=float(doc["q"]))
        if kind == "neg_expectation":
            den = doc.get("density")
            return NegExpectationSpec(
                density=None if den is None else np.asarray(den, dtype=float)
            )
        raise InvalidParams(f"unknown risk measure kind {kind!r}")


@dataclass(frozen=True)
class VaRSpec(RiskMeasureSpec):
    """Conditional Value at Risk at level q (positively homogeneous, not convex)."""

    q: float
    kind = "var"

    def __post_init__(self):
        _check_q(self.q)

    def evaluate(self, space, F, G):
        return conditional_var(space, F, G, self.q)

    def to_json(self):
        return {"kind": "var", "q": self.q}


@dataclass(frozen=True)
class AVaRSpec(RiskMeasureSpec):
    """Conditional Average Value at Risk at level q (convex and positively homogeneous)."""

    q: float
    kind = "avar"

    def __post_init__(self):
        _check_q(self.q)

    def evaluate(self, space, F, G):
        return conditional_avar(space, F, G, self.q)

    def to_json(self):
        return {"kind": "avar", "q": self.q}


@dataclass(frozen=True)
class NegExpectationSpec(RiskMeasureSpec):
    """Negative conditional expectation, optionally under a supplied density."""

    density: np.ndarray | None = None
    kind = "neg_expectation"

    def __post_init__(self):
        if self.density is not None:
            den = np.asarray(self.density, dtype=float)
            if np.any(den < 0) or not np.all(np.isfinite(den)):
                raise InvalidParams("density must be finite and nonnegative")
            den.flags.writeable = False
            object.__setattr__(self, "density", den)

    def evaluate(self, space, F, G):
        return neg_conditional_expectation(space, F, G, density=self.density)

    def to_json(self):
        return {
            "kind": "neg_expectation",
            "density": None if self.density is None else self.density.tolist(),
        }
