"""Optimal approximate crossover designs under proportional carryover."""

from .sequences import (
    Sequence,
    SequenceError,
    SymmetricBlock,
    block_of,
    canonicalize,
    enumerate_blocks,
    format_sequence,
    orbit_members,
    orbit_size,
    parse_sequence,
)
from .moments import (
    BlockMoments,
    Covariance,
    CovarianceError,
    DesignSpace,
    Quadratic,
    block_moments,
    btilde,
    lambda_moments,
)
from .envelope import EnvelopeError, EnvelopeSolution, minimize_envelope, solve, support_weights
from .design import (
    CRITERIA,
    ApproxDesign,
    DesignError,
    ExactDesign,
    ModelContext,
    compute_lambda_star,
    criterion_value,
    design_from_json,
    design_moments,
    design_to_json,
    fisher_lambda,
    fisher_tau,
    lambda_information_matrix,
    materialize,
    phi_exchangeable,
    point_prior_value,
    spectrum,
    symmetrize,
)
from .optimize import (
    Certificate,
    NonConvergence,
    OptimizeOptions,
    certify,
    check_universal_traditional,
    e_optimal,
    efficiency,
    optimize,
    optimize_lambda_design,
    score_block,
    sweep,
)
from .rounding import RoundedDesign, round_exact

__version__ = "0.1.0"
