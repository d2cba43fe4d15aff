"""Observer-based dynamic LQR: cost evaluation, policy gradients and stationary points."""

from .closedloop import (
    AugmentedSystem,
    ClosedLoopEvaluation,
    accumulated_estimation_variance,
    build_augmented,
    evaluate,
    evaluate_blocks,
    is_stable,
)
from .design import StandardPair, standard_controller, standard_observer, standard_pair
from .dominance import compute_coefficients, search_eps, verify_dominance
from .errors import (
    ConvergenceError,
    DimensionError,
    OdlqrError,
    ProblemFileError,
    SingularityError,
    UnstableError,
)
from .gradient import (
    GradientPair,
    gradients_block,
    gradients_compact,
    gradients_fd,
    relative_frobenius,
)
from .problem import (
    CostWeights,
    GainPair,
    InitialCorrelation,
    Plant,
    ProblemInstance,
    is_observable_dynamic_controller,
    is_stabilizing_K,
    is_stabilizing_L,
    validate,
)
from .problems import doyle_1d, doyle_2d, load_problem
from .simulate import monte_carlo_cost, rollout
from .stationary import StationaryOptions, StationaryReport, assemble_coefficients, solve_stationary

__version__ = "0.1.0"
