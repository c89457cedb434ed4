"""Two-coin proof-of-work mining game toolkit.

Analytic payoffs and Nash-equilibrium sets, zone-flow dynamics,
a block-level twin-chain simulator, and hash-rate series reconstruction.
"""

from .core import (
    GameConfig,
    MiningState,
    Strategy,
    Zone,
    c_max,
    coexist_rb,
    config_from_json,
    validate_config,
)
from .payoff import PayoffTriple, ap_fickle, payoff, payoff_triple
from .equilibrium import (
    DeviationReport,
    EquilibriumSet,
    Segment,
    boundary13_rb,
    boundary23_rb,
    equilibria,
    finite_deviation,
    solve_alpha,
    solve_beta,
    x_threshold,
    zone_of,
)
from .dynamics import (
    FlowConfig,
    Outcome,
    Schedule,
    Trajectory,
    automatic_threshold,
    direction,
    simulate_flow,
    step_best_response,
    step_flow,
)
from .chainsim import (
    ChainWorld,
    Coin,
    EpochFixed,
    EpochWithEda,
    MinerAgent,
    PerBlockWindow,
    SimReport,
    eda_expected_nde,
    empirical_payoffs,
    run,
    sample_series,
)
from .ingest import (
    FicklePeriod,
    SeriesRecord,
    StateEstimate,
    detect_fickle_periods,
    estimate_state_path,
    load_series,
    zone_path,
)

__version__ = "0.1.0"
