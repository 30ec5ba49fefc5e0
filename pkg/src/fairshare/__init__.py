"""Fair division of divisible resources under perfectly complementary demand.

Two solvers over a shared model: norm-parameterized water-filling
(``grf_allocate``) and bottleneck fairness via Fisher-market equilibrium
(``bbf_allocate``), plus verifiers for every property they promise.
"""

from .model import (
    ABS_TOL,
    Agent,
    Good,
    INFINITE_BUNDLE,
    Incompatible,
    Instance,
    InstanceError,
    L1,
    L2,
    LINF,
    Leontief,
    Norm,
    Satiated,
    SatiableLeontief,
    TabulatedPC,
    instance_from_dict,
    instance_to_dict,
    is_compatible,
    is_infinite,
    load_instance,
    lp,
    norm_eval,
    parse_norm,
    parsimonize,
    utility_eval,
    w_eval,
)
from .grf import GrfTrace, NoProgress, Unbounded, allocation_step, grf_allocate, oracle_query
from .market import (
    BadPrices,
    Diverged,
    EquilibriumResult,
    UnsupportedUtility,
    bbf_allocate,
    check_equilibrium,
    eg_dual_solve,
    equilibrium_from_prices,
    extend_satiable,
)
from .checks import (
    Fairer,
    PropertyReport,
    TooLarge,
    brute_force_fairness_oracle,
    fairer_than,
    is_bbf,
    is_non_wasteful,
    is_norm_fair,
    is_parsimonious_allocation,
    is_pareto_efficient,
)

__version__ = "0.1.0"
