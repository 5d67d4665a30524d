"""Random financial networks, correlated shocks, and the Monte Carlo loop.

Networks are directed Erdos-Renyi graphs with half-normal exposures and
stylized balance sheets: per institution,

    external assets + interbank assets
        = equity + external liabilities + interbank liabilities.

Only the interbank block is pinned down by the graph; the completion
rule (documented in the output metadata) sets external liabilities to a
configurable multiple of interbank liabilities, targets equity as a
fixed proportion of total assets, and lets external assets close the
balance.  Shocks are mean-zero equicorrelated Gaussians with volatility
proportional to each institution's external size.

All randomness flows through numpy's seeded PCG64 generator; the
generator identifier, seed, and parameters are embedded in every
artifact so runs are reproducible byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import clearing
from .aggregation import CM1Agg, CM2Agg, _ClearingAgg
from .errors import InvalidParams
from .risk_measures import var

RNG_ID = "numpy.random.Generator(PCG64)"


@dataclass(frozen=True)
class Network:
    """Exposure matrix (E[i, j] = liability of i to j) plus balance sheet items."""

    exposures: np.ndarray
    external_assets: np.ndarray
    external_liabilities: np.ndarray
    equity: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        E = np.asarray(self.exposures, dtype=float)
        d = E.shape[0]
        if E.shape != (d, d) or np.any(E < 0) or not np.all(np.isfinite(E)):
            raise InvalidParams("exposures must be a nonnegative square matrix")
        if np.any(np.diag(E) != 0):
            raise InvalidParams("self-exposures must be zero")
        vectors = {}
        for name in ("external_assets", "external_liabilities", "equity"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (d,) or not np.all(np.isfinite(v)):
                raise InvalidParams(f"{name} must be a finite vector of length {d}")
            vectors[name] = v
        assets = vectors["external_assets"] + E.sum(axis=0)
        liabilities = (
            vectors["equity"] + vectors["external_liabilities"] + E.sum(axis=1)
        )
        if np.abs(assets - liabilities).max() > 1e-8:
            raise InvalidParams("balance sheets do not balance within 1e-8")
        E.flags.writeable = False
        object.__setattr__(self, "exposures", E)
        for name, v in vectors.items():
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @property
    def d(self) -> int:
        return self.exposures.shape[0]

    @property
    def liabilities(self) -> np.ndarray:
        """Total interbank liabilities L_i = sum_j E[i, j]."""
        return self.exposures.sum(axis=1)

    @property
    def interbank_assets(self) -> np.ndarray:
        return self.exposures.sum(axis=0)

    @property
    def relative_liabilities(self) -> np.ndarray:
        """Pi[i, j] = E[i, j] / L_i, all-zero rows for institutions without liabilities."""
        L = self.liabilities
        Pi = np.zeros_like(self.exposures)
        nz = L > 0
        Pi[nz] = self.exposures[nz] / L[nz, None]
        return Pi

    def to_json(self) -> dict:
        return {
            "exposures": self.exposures.tolist(),
            "external_assets": self.external_assets.tolist(),
            "external_liabilities": self.external_liabilities.tolist(),
            "equity": self.equity.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Network":
        return cls(
            exposures=np.asarray(doc["exposures"], dtype=float),
            external_assets=np.asarray(doc["external_assets"], dtype=float),
            external_liabilities=np.asarray(doc["external_liabilities"], dtype=float),
            equity=np.asarray(doc["equity"], dtype=float),
            meta=doc.get("meta", {}),
        )

    def to_dot(self) -> str:
        """DOT dump of the exposure graph for external rendering."""
        lines = ["digraph financial_system {"]
        for i in range(self.d):
            lines.append(
                f'  {i} [label="FI {i + 1}\\nequity {self.equity[i]:.2f}"];'
            )
        for i in range(self.d):
            for j in range(self.d):
                w = self.exposures[i, j]
                if w > 0:
                    lines.append(f'  {i} -> {j} [label="{w:.2f}", weight={w:.6g}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScenarioSet:
    """Post-shock equity per scenario plus the metadata needed to regenerate it."""

    shocked_equity: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.shocked_equity, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or not np.all(np.isfinite(X)):
            raise InvalidParams("shocked_equity must be a finite (N, d) matrix, N >= 1")
        X.flags.writeable = False
        object.__setattr__(self, "shocked_equity", X)

    @property
    def n_scenarios(self) -> int:
        return self.shocked_equity.shape[0]

    @property
    def d(self) -> int:
        return self.shocked_equity.shape[1]

    def to_json(self) -> dict:
        return {"shocked_equity": self.shocked_equity.tolist(), "meta": self.meta}

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioSet":
        return cls(
            shocked_equity=np.asarray(doc["shocked_equity"], dtype=float),
            meta=doc.get("meta", {}),
        )


def gen_network(
    d: int,
    p: float,
    exposure_scale: float,
    equity_ratio: float,
    seed: int,
    ext_liability_multiple: float = 1.0,
) -> Network:
    """Erdos-Renyi interbank network with half-normal exposures.

    Each directed edge (i, j), i != j, exists independently with
    probability p; its exposure is |N(0, exposure_scale^2)|.  Equity is
    targeted at equity_ratio of total assets (raised where interbank
    assets alone exceed all liabilities, so external assets stay
    nonnegative) and external assets complete the balance.
    """
    if d < 2:
        raise InvalidParams("d must be >= 2")
    if not 0.0 <= p <= 1.0:
        raise InvalidParams("p must lie in [0, 1]")
    if not exposure_scale > 0:
        raise InvalidParams("exposure_scale must be positive")
    if not 0.0 < equity_ratio < 1.0:
        raise InvalidParams("equity_ratio must lie in (0, 1)")
    if ext_liability_multiple < 0:
        raise InvalidParams("ext_liability_multiple must be >= 0")
    rng = np.random.default_rng(seed)
    edges = rng.uniform(size=(d, d)) < p
    np.fill_diagonal(edges, False)
    E = np.where(edges, np.abs(rng.normal(0.0, exposure_scale, size=(d, d))), 0.0)
    np.fill_diagonal(E, 0.0)
    L = E.sum(axis=1)
    ib_assets = E.sum(axis=0)
    ext_liab = ext_liability_multiple * L
    # equity = ratio * total assets, where total assets themselves include the
    # balancing external assets: total = (ext_liab + L) / (1 - ratio)
    target_equity = equity_ratio / (1.0 - equity_ratio) * (ext_liab + L)
    equity = np.maximum(target_equity, ib_assets - ext_liab - L)
    ext_assets = equity + ext_liab + L - ib_assets
    meta = {
        "generator": "erdos_renyi_half_normal",
        "rng": RNG_ID,
        "seed": int(seed),
        "params": {
            "d": int(d),
            "p": float(p),
            "exposure_scale": float(exposure_scale),
            "equity_ratio": float(equity_ratio),
            "ext_liability_multiple": float(ext_liability_multiple),
        },
        "balance_completion": "equity=max(ratio*total_assets, ib_assets-ext_liab-L); "
        "ext_assets close the balance",
    }
    return Network(
        exposures=E,
        external_assets=ext_assets,
        external_liabilities=ext_liab,
        equity=equity,
        meta=meta,
    )


def gen_shocks(
    net: Network, N: int, corr: float, vol_ratio: float, seed: int
) -> ScenarioSet:
    """Equicorrelated Gaussian shocks on equity; sigma_i = vol_ratio * external size."""
    if N < 1:
        raise InvalidParams("N must be >= 1")
    if not 0.0 <= corr < 1.0:
        raise InvalidParams("corr must lie in [0, 1)")
    if vol_ratio < 0:
        raise InvalidParams("vol_ratio must be >= 0")
    d = net.d
    rng = np.random.default_rng(seed)
    sigma = vol_ratio * (net.external_assets + net.external_liabilities)
    R = np.full((d, d), corr)
    np.fill_diagonal(R, 1.0)
    chol = np.linalg.cholesky(R)
    Z = rng.standard_normal(size=(N, d))
    shocks = (Z @ chol.T) * sigma
    meta = {
        "generator": "equicorrelated_gaussian",
        "rng": RNG_ID,
        "seed": int(seed),
        "params": {"N": int(N), "corr": float(corr), "vol_ratio": float(vol_ratio)},
    }
    return ScenarioSet(shocked_equity=net.equity + shocks, meta=meta)


@dataclass(frozen=True)
class MonteCarloResult:
    """Per-scenario clearing records plus the summary statistics block."""

    values: np.ndarray
    injections: np.ndarray
    initial_losses: np.ndarray
    initial_defaults: np.ndarray
    contagion_defaults: np.ndarray
    summary: dict
    meta: dict = field(default_factory=dict, compare=False)


def _summary(values, injections, initial_losses, initial_defaults, contagion_defaults, q):
    n = values.size
    return {
        "neg_mean_value": -math.fsum(values) / n,
        f"var_{q:g}": var(values, q),
        "mean_injections": math.fsum(injections) / n,
        "mean_initial_losses": math.fsum(initial_losses) / n,
        "mean_initial_defaults": math.fsum(initial_defaults) / n,
        "mean_contagion_defaults": math.fsum(contagion_defaults) / n,
    }


def run_mc(
    net: Network,
    scen: ScenarioSet,
    spec: _ClearingAgg | None = None,
    gamma: float | str | None = None,
    objective: str = "cm1",
    var_level: float = 0.05,
    threads: int = 1,
) -> MonteCarloResult:
    """Clear every scenario and collect the summary-table statistics.

    ``spec`` may be a prebuilt cm1/cm2 aggregation; otherwise it is
    built from the network with the given gamma ("inf" forces b = 0).
    Scenario evaluation may be split over ``threads`` workers; records
    are stored in scenario order and summarized with exact (fsum)
    accumulation, so threaded and serial runs agree to the last bit.
    """
    if spec is None:
        if gamma is None:
            raise InvalidParams("provide gamma when no aggregation spec is given")
        g = math.inf if gamma == "inf" or gamma == math.inf else float(gamma)
        cls = CM1Agg if objective == "cm1" else CM2Agg
        spec = cls(Pi=net.relative_liabilities, L=net.liabilities, gamma=g)
    else:
        objective = spec.objective
        if gamma is not None:
            g = math.inf if gamma == "inf" else float(gamma)
            if not (math.isinf(g) and math.isinf(spec.gamma)) and g != spec.gamma:
                raise InvalidParams("gamma disagrees with the supplied spec")
    X = scen.shocked_equity
    if X.shape[1] != spec.L.size:
        raise InvalidParams("scenario width disagrees with the aggregation spec")
    values, B, Y = clearing.solve_many(
        spec.Pi,
        spec.L,
        spec.gamma,
        X,
        objective=objective,
        zero_injections=math.isinf(spec.gamma),
        threads=threads,
    )
    injections = B.sum(axis=1)
    initial_losses = np.maximum(-X, 0.0).sum(axis=1)
    initial_defaults = (X < 0).sum(axis=1)
    # a bank is in default once the market shock or incoming liability
    # reductions push it below water; injections stem the spreading (via
    # smaller y) but do not undo the default event itself
    contagion_defaults = (X - Y @ spec.Pi < 0).sum(axis=1)
    summary = _summary(
        values, injections, initial_losses, initial_defaults, contagion_defaults, var_level
    )
    meta = {
        "objective": objective,
        "gamma": "inf" if math.isinf(spec.gamma) else spec.gamma,
        "var_level": var_level,
        "network": net.meta,
        "scenarios": scen.meta,
    }
    return MonteCarloResult(
        values=values,
        injections=injections,
        initial_losses=initial_losses,
        initial_defaults=initial_defaults,
        contagion_defaults=contagion_defaults,
        summary=summary,
        meta=meta,
    )
