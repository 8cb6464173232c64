"""Matrix completion on rank-r matrices constrained by a sparse self-expression ``X C = X``."""

from .completion import CompletionConfig, CompletionResult, complete, dimension_report
from .exceptions import (
    BacktrackExhaustedError,
    DimensionMismatchError,
    InfeasibleRankError,
    McsideError,
    NonzeroDiagonalError,
    OffManifoldError,
    RankDeficientStepError,
    SpecValidationError,
    ZeroDenominatorError,
)
from .expression import ExpressionMatrix, ExpressionSettings, init_expression, solve_column, update_expression
from .linalg import SamplingPattern
from .manifold import (
    FixedRankPoint,
    SelfExpressiveManifold,
    TangentVector,
    fixed_rank_manifold,
    make_manifold,
    point_from_ambient,
    project_tangent,
    retract,
)
from .solver import SolverConfig, riemannian_gradient, solve

__version__ = "0.1.0"
