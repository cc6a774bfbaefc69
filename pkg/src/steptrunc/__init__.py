"""Rank-adaptive step-truncation time integration on hierarchical Tucker manifolds.

The package couples a small dense-tensor oracle with a hierarchical Tucker
format, Kronecker-sum operators, Fourier pseudo-spectral discretizations,
and explicit time steppers whose truncation tolerances scale with powers of
the step size so that each scheme keeps its classical order while the
tensor ranks adapt.
"""

from .dense import DenseTensor, dematricize, inner as dense_inner, linear_combine
from .dense import matricize, mode_apply, set_element_budget
from .errors import (
    BudgetError,
    ConditioningError,
    DegenerateSpectrumError,
    InputError,
    NumericalError,
    SteadyStateTimeout,
)
from .fokker_planck import DriftSpec, FPProblem, build_fp_operator, ic_2d, ic_4d
from .fokker_planck import make_problem, marginal_12, mass
from .htucker import DimensionTree, HTensor, TruncationControl, from_dense
from .htucker import inner as ht_inner, linear_combine as ht_linear_combine
from .htucker import orthogonalize, quasi_opt_factor, rank_one, truncate
from .integrators import (
    IntegrationResult,
    SchemeSpec,
    StepRecord,
    ThresholdPolicy,
    Thresholds,
    ab_coefficients,
    integrate,
    step_ab,
    step_euler,
    step_midpoint,
    threshold_schedule,
    write_records_csv,
)
from .kron import KronSumOperator, KronTerm, apply_dense, apply_ht, operator
from .matrix_manifold import (
    DOBOState,
    SVDTriple,
    best_truncate_matrix,
    consistency_gap,
    do_rhs,
    equivalence_check,
    normal_component_norm,
    svd_perturb_step,
    tangent_project,
)
from .reference import integrate_dense, rk4_step, run_to_steady
from .spectral import PeriodicGrid, diag_of, diff_matrix, l2_norm, quad_integral

__version__ = "0.1.0"
