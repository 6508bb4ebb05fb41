"""Sparse random linear systems over finite fields.

Ensemble generation, 2-core peeling, exact GF(q) linear algebra, analytic
threshold computation, and Monte Carlo experiments that compare the two.
"""

from .abelian import GroupSpec, abelian_scan, abelian_solvable, howell_form
from .analytic import (
    bethe_free_entropy,
    bethe_free_entropy_mc,
    cluster_exponent,
    core_emergence_threshold,
    core_fixed_point,
    core_size_fractions,
    free_entropy,
    free_entropy_max,
    pair_satisfaction_logprob,
    rank_fraction,
    satisfiability_threshold,
    second_moment_curve,
    threshold_report,
)
from .core_peel import extend_core_solution, find_flippable_cycles, peel, reachable
from .ensemble import (
    EnsembleParams,
    RowDistribution,
    SparseLinearSystem,
    SparseRow,
    pin,
    pin_indices,
    read_system,
    sample_planted,
    sample_system,
    write_system,
)
from .errors import FqlinError
from .experiments import (
    ExperimentConfig,
    ExperimentRecord,
    run_experiment,
    solve_via_peel,
)
from .gf import FieldElement, FiniteField, make_field
from .linalg import (
    decompose_kernel,
    eliminate,
    matvec,
    overlap,
    overlap_tv,
    pinning_symmetry_experiment,
    sample_kernel_uniform,
    symmetry_defect,
)

__version__ = "0.1.0"
