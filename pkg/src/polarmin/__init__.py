"""Edge addition for leader groups: minimize Tr(L_Q^{-1}) by exact and sketched greedy."""

from __future__ import annotations

from .baselines import (
    StrategyTag,
    exact_polarization,
    run_brute_force,
    run_random,
    run_top_cent,
    run_top_degree,
)
from .dynamics import PolarizationEstimate, SimulationConfig, simulate, stability_bound
from .errors import (
    CapacityError,
    ConvergenceError,
    DuplicateEdgeError,
    NumericalError,
    ParseError,
    PolarminError,
    StabilityError,
    ValidationError,
)
from .graph import (
    CandidateEdge,
    Graph,
    GroundedSystem,
    LeaderConfig,
    add_candidate,
    candidate_universe,
    grounded_laplacian,
    largest_connected_component,
    leader_config,
    load_edge_list,
    remove_candidate,
)
from .greedy_approx import ApproxParams, SketchAccumulators, f_gains_est, gains_est, run_approx, sketched_trace
from .greedy_exact import GainEstimate, SelectionResult, effective_resistance, exact_gains, run_exact
from .linalg import (
    DenseInverse,
    SddDecomposition,
    SketchProbe,
    SolveHandle,
    dense_inverse,
    make_probe,
    sdd_decompose,
    sdd_solve,
    sherman_morrison_update,
    solve_handle,
)

__version__ = "0.1.0"
