"""Multi-block ADMM with inexact symmetric Gauss-Seidel sweeps.

Solves multi-block convex composite programs

    min p1(x_1) + f(x) + q1(y_1) + g(y)   s.t.   A^T x + B^T y = c

by a majorized indefinite-proximal ADMM whose x and y subproblems are
decomposed block by block with inexact symmetric Gauss-Seidel sweeps,
plus the underlying two-block scheme, deterministic instance
generators, an independent ground-truth oracle, and a ledger that
numerically audits the convergence theory along solver traces.
"""

from .blockalg import (
    BlockOperator,
    BlockStructure,
    BlockVector,
    OperatorSplit,
    min_eig,
    operator_sqrt,
    spd_solve,
    spectral_norm,
    split,
    weighted_inner,
    weighted_norm,
)
from .model import (
    KKTResidual,
    ProblemSpec,
    ProxFriendlyFunction,
    SmoothConvexFunction,
    kkt_residual,
    majorized_aug_lagrangian,
    prox,
)
from .multiblock import MultiBlockConfig, MultiBlockSolver, construct_operators
from .schedules import ToleranceSchedule
from .sweep import (
    QuadraticBlockObjective,
    SweepTolerances,
    hat_operator,
    sgs_operator,
    sgs_sweep,
    tilt_error_bound,
    tilt_vector,
)
from .twoblock import (
    DerivedConstants,
    IterationRecord,
    SolveResult,
    TwoBlockConfig,
    TwoBlockSolver,
    derive_constants,
    step_constants,
)

__version__ = "0.1.0"

__all__ = [
    "BlockOperator", "BlockStructure", "BlockVector", "OperatorSplit",
    "min_eig", "operator_sqrt", "spd_solve", "spectral_norm", "split",
    "weighted_inner", "weighted_norm",
    "KKTResidual", "ProblemSpec", "ProxFriendlyFunction", "SmoothConvexFunction",
    "kkt_residual", "majorized_aug_lagrangian", "prox",
    "MultiBlockConfig", "MultiBlockSolver", "construct_operators",
    "ToleranceSchedule",
    "QuadraticBlockObjective", "SweepTolerances", "hat_operator", "sgs_operator",
    "sgs_sweep", "tilt_error_bound", "tilt_vector",
    "DerivedConstants", "IterationRecord", "SolveResult", "TwoBlockConfig",
    "TwoBlockSolver", "derive_constants", "step_constants",
    "__version__",
]
