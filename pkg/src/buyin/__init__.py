"""Mean-variance portfolio selection with buy-in threshold constraints.

Each asset is either left out or held between a floor and a cap. Solvers:
a DC-programming local method on an exact-penalty reformulation, a
branch-and-bound global method, and exhaustive enumeration for small cases.
"""

from .bnb import BnbResult, bnb_report, bnb_solve
from .dca import (
    DcaConfig,
    DcaTrace,
    InitStrategy,
    dca_solve,
    initial_point,
    solve_with_escalation,
    subgradient_h,
)
from .errors import (
    BuyinError,
    DomainError,
    InfeasibleInstanceError,
    InvalidInputError,
    NumericalFailureError,
)
from .frontier import emit_table, parse_table, solve_report, sweep
from .ingest import (
    AssetStatistics,
    PriceMatrix,
    ReturnHistory,
    asset_statistics,
    compute_returns,
    load_meanstd_correlation,
    load_statistics,
    read_price_csv,
)
from .model import (
    Feasibility,
    MixedPoint,
    PortfolioInstance,
    build_polytope,
    classify,
    load_instance,
    objective_V,
    penalized_F,
    penalty_p,
    save_instance,
)
from .oracle import brute_force, fixed_support_qp, random_instance
from .qp import QpProblem, QpSolution, QpStatus, check_kkt, solve_qp
from .report import SolveReport

__version__ = "0.1.0"
