"""Conditional systemic risk measures on finite probability spaces.

The package composes conditional base risk measures (VaR, Average VaR,
negative conditional expectations) with state-wise aggregation
functions (netting, loss-only, exponential, liability-weighted,
countercyclical, discounted, and contagion-clearing aggregates), tests
the defining axioms, extracts the decomposition back out of a risk
map, and runs seeded Monte Carlo studies of interbank networks.
"""

from .aggregation import (
    AggregationSpec,
    BCAgg,
    CM1Agg,
    CM2Agg,
    CountercyclicalAgg,
    DiscountedAgg,
    ExpAgg,
    LossAgg,
    SumAgg,
    aggregate_at,
    check_daf_properties,
    extend,
    relative_liability_weights,
)
from .clearing import (
    ClearingProblem,
    ClearingSolution,
    brute_force_oracle,
    clear_fixed_point,
    solve_cm1,
    solve_cm2,
    solve_many,
)
from .csrm import (
    ALL_AXIOMS,
    CSRM,
    RiskMap,
    check_axiom,
    default_probe_grid,
    evaluate,
    extract_aggregation,
    extract_base,
)
from .errors import (
    DimensionTooLarge,
    EmptyConditioningEvent,
    InconsistentRho,
    InvalidParams,
    NonConvergence,
    SysriskError,
    UnknownAxiom,
    ZeroBlockMass,
)
from .metrics import MetricResult, coes, covar_j, dip, rank, ses_j
from .network_sim import (
    MonteCarloResult,
    Network,
    ScenarioSet,
    gen_network,
    gen_shocks,
    run_mc,
)
from .prob_space import (
    FiniteProbSpace,
    Partition,
    RandomVector,
    conditional_expectation,
    dump_space_vector,
    is_measurable,
    load_space_vector,
    sigma_of_event,
)
from .report import PropertyCheck, PropertyReport
from .risk_measures import (
    AVaRSpec,
    NegExpectationSpec,
    RiskMeasureSpec,
    VaRSpec,
    conditional_avar,
    conditional_var,
    neg_conditional_expectation,
    var,
)

__version__ = "0.1.0"
