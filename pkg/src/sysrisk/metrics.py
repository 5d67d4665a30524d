"""Systemic risk metrics on scenario sets.

All metrics live on the uniform empirical measure of a ScenarioSet
(weights can be supplied where a risk-neutral measure is wanted) and
reuse the package-wide strict-">" VaR convention.  Conditioning events
use weak inequalities exactly as stated, e.g. {X_j <= -VaR_q(X_j)};
with the strict VaR convention this event is never empty.

Tail estimates on very small conditioning sets are noise; anything
below ``min_event_size`` (default 30) triggers a warning but is still
reported, with the event size recorded in the result.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .aggregation import AggregationSpec, LossAgg, SumAgg
from .errors import EmptyConditioningEvent, InvalidParams
from .network_sim import ScenarioSet
from .risk_measures import var

#: below this many conditioning scenarios a warning is emitted
MIN_EVENT_SIZE = 30


@dataclass(frozen=True)
class MetricResult:
    """A named metric value, per institution or scalar, with its event size."""

    name: str
    scalar: float | None = None
    per_institution: np.ndarray | None = None
    conditioning_event_size: int = 0

    def __post_init__(self):
        if self.conditioning_event_size < 1:
            raise InvalidParams("a reported metric needs a non-empty conditioning set")


def _warn_small(size: int, name: str, min_event_size: int):
    if size < min_event_size:
        warnings.warn(
            f"{name}: conditioning event holds only {size} scenarios; "
            "tail estimate is unreliable",
            stacklevel=3,
        )


def aggregate_scenarios(scen: ScenarioSet, agg: AggregationSpec) -> np.ndarray:
    """Aggregate value per scenario; rows of the scenario set are states."""
    X = scen.shocked_equity
    if hasattr(agg, "objective"):  # clearing specs solve row-wise already
        return agg.extend(X)
    # deterministic/conditional specs are applied row-wise with atom 0:
    # scenario rows are exchangeable draws, not atoms of a conditioning space
    return np.asarray([agg.value_at(x, 0) for x in X], dtype=float)


def _agg_values(scen, agg, values):
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape != (scen.n_scenarios,):
            raise InvalidParams("values must hold one aggregate per scenario")
        return values
    if isinstance(agg, (SumAgg, LossAgg)):
        return agg.extend(scen.shocked_equity)
    return aggregate_scenarios(scen, agg)


def institution_distress_event(scen: ScenarioSet, j: int, q: float) -> np.ndarray:
    """Boolean mask of {X_j <= -VaR_q(X_j)} under the empirical measure."""
    Xj = scen.shocked_equity[:, j]
    return Xj <= -var(Xj, q)


def covar_j(
    scen: ScenarioSet,
    j: int,
    q: float,
    agg: AggregationSpec,
    values=None,
    min_event_size: int = MIN_EVENT_SIZE,
) -> float:
    """Empirical VaR_q of the aggregate, conditional on institution j's distress.

    ``values`` may carry precomputed per-scenario aggregates to avoid
    re-solving expensive clearing aggregations.
    """
    vals = _agg_values(scen, agg, values)
    mask = institution_distress_event(scen, j, q)
    size = int(mask.sum())
    if size == 0:
        raise EmptyConditioningEvent(f"institution {j} has no distress scenarios")
    _warn_small(size, f"covar_{j}", min_event_size)
    return var(vals[mask], q)


def coes(
    scen: ScenarioSet,
    q: float,
    agg: AggregationSpec,
    j: int | None = None,
    values=None,
    min_event_size: int = MIN_EVENT_SIZE,
) -> float:
    """Mean aggregate loss beyond the (conditional) empirical VaR.

    With ``j`` given, conditions on institution j's distress first and
    takes the mean of -aggregate over {aggregate <= -CoVaR} inside that
    event; with j omitted the conditioning is on the aggregate's own
    tail {aggregate <= -VaR_q(aggregate)}.
    """
    vals = _agg_values(scen, agg, values)
    if j is None:
        mask = np.ones(scen.n_scenarios, dtype=bool)
        threshold = var(vals, q)
    else:
        mask = institution_distress_event(scen, j, q)
        if not mask.any():
            raise EmptyConditioningEvent(f"institution {j} has no distress scenarios")
        threshold = var(vals[mask], q)
    tail = mask & (vals <= -threshold)
    size = int(tail.sum())
    if size == 0:
        raise EmptyConditioningEvent("no scenarios beyond the conditional VaR")
    _warn_small(size, "coes", min_event_size)
    return float(np.mean(-vals[tail]))


def ses_j(
    scen: ScenarioSet, j: int, q: float, min_event_size: int = MIN_EVENT_SIZE
) -> float:
    """Expected loss of institution j given system-wide distress of the netted total."""
    totals = scen.shocked_equity.sum(axis=1)
    mask = totals <= -var(totals, q)
    size = int(mask.sum())
    if size == 0:
        raise EmptyConditioningEvent("system distress event is empty")
    _warn_small(size, f"ses_{j}", min_event_size)
    return float(np.mean(-scen.shocked_equity[mask, j]))


def dip(
    scen: ScenarioSet,
    theta: float,
    weights=None,
    min_event_size: int = MIN_EVENT_SIZE,
) -> float:
    """Expected aggregate losses, under optional weights, given total losses breach theta.

    The distress event is {loss aggregate <= theta} with the loss
    aggregate sum_i min(X_i, 0); the reported value is the weighted
    conditional mean of sum_i X_i^-.  Weights default to uniform.
    """
    X = scen.shocked_equity
    loss_agg = np.minimum(X, 0.0).sum(axis=1)
    mask = loss_agg <= theta
    size = int(mask.sum())
    if size == 0:
        raise EmptyConditioningEvent(f"no scenarios with loss aggregate <= {theta}")
    _warn_small(size, "dip", min_event_size)
    total_losses = np.maximum(-X, 0.0).sum(axis=1)
    if weights is None:
        return float(np.mean(total_losses[mask]))
    w = np.asarray(weights, dtype=float)
    if w.shape != (scen.n_scenarios,) or np.any(w < 0):
        raise InvalidParams("weights must be nonnegative, one per scenario")
    wmass = float(w[mask].sum())
    if wmass <= 0:
        raise EmptyConditioningEvent("conditioning event carries zero weight")
    return float((w[mask] @ total_losses[mask]) / wmass)


def rank(values, ascending: bool = True) -> list[int]:
    """Stable ordering of institutions by metric value; ties break by index."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    if not ascending:
        order = np.argsort(-values, kind="stable")
    return [int(i) for i in order]
