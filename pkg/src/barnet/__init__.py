"""Binary autoregressive network processes.

Simulation of signed sparse Bernoulli dynamics (plain chains, coupled pairs,
single-site hypercube walks), exact small-instance chain analysis, the full
set of analytic mixing/floor/sample-complexity bounds, a two-stage structure
observer with sign recovery, and an experiment sweep harness.
"""

from .booleannet import BooleanNetwork, parse_rules, random_andor_network
from .bounds import (
    BoundsReport,
    fano_lower_bound,
    mixing_bound,
    rw_analysis,
    sample_complexity_selection,
    sample_complexity_trimming,
    stationary_floors,
)
from .exactchain import (
    ExactChain,
    build_transition,
    exact_conditional,
    exact_mixing_time,
    exact_nu,
    identifiability_margin,
    stationary_marginals,
    tv_to_stationarity,
)
from .harness import SweepConfig, run_sweep
from .infer import (
    EmpiricalStats,
    GraphEstimate,
    accumulate,
    accumulate_subsets,
    metrics,
    nu_hat,
    sign_from_selection,
    supergraph_select,
    trim,
)
from .model import (
    BarModel,
    GraphTruth,
    SignedParent,
    build_model,
    d_star,
    load_model,
    random_model,
    save_model,
    validate,
)
from .simulate import (
    Trajectory,
    bar_step,
    coupled_step,
    coupling_time,
    rw_step,
    sample_trajectory,
)

__all__ = [name for name in dir() if not name.startswith("_")]
