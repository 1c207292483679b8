"""tauforge: tau-functions of integrable systems from loop-group data.

Core objects are truncated matrix loops on the unit circle, their Birkhoff
factorization, and the contour formulas that turn factorization data into
log-derivatives of tau-functions, with end-to-end KdV and Ernst pipelines.
"""

from .loops import (
    DEFAULT_ORDER,
    DEFAULT_SAMPLES,
    TAIL_THRESHOLD,
    MatrixLoop,
    ScalarLoop,
    SingularLoopError,
    TailMassError,
    adjugate_inverse,
    contour_integral_dlambda,
    exp_pointwise,
    inverse,
    mean_theta,
    monomial,
    multiply,
    random_tangent,
    random_unimodular_loop,
)
from .birkhoff import (
    BigCellError,
    BirkhoffFactors,
    factorize,
    factorize_batch,
    negative_part_expansion,
)
from .phase_space import (
    LoopTangent,
    TauVariationInput,
    cocycle,
    curvature_mismatch,
    hamiltonian_diffeo,
    hamiltonian_gauge,
    poisson_anomaly,
    reduced_symplectic,
    tau_variation,
    vacuum_logderiv_diffeo,
    vacuum_logderiv_gauge,
)
from .twistor import (
    DegenerateFrameError,
    DirectionDecomposition,
    RationalFunction,
    SpacetimePoint,
    SymmetryGenerator,
    decompose,
    ernst_frame,
    incidence,
)
from .quadrature import PathRefinementError, refine_path_cells
from .kdv import (
    KdVSeed,
    PathCrossesBadCellError,
    TauGrid,
    kdv_residual,
    phi_normal_form,
    pullback_coeff_batch,
    pullback_patching,
    q_contour,
    q_expansion,
    seed_one_pole,
    seed_vacuum,
    tau_grid,
)
from .ernst import (
    ConformalFactorReport,
    ErnstSolution,
    ErnstTauField,
    conformal_factor_check,
    dlogtau,
    field_residual,
    flat,
    kasner,
    logtau_field,
    non_solution,
    point_source,
    rectangle_loop_integral,
    residue_check,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ORDER",
    "DEFAULT_SAMPLES",
    "TAIL_THRESHOLD",
    "BigCellError",
    "BirkhoffFactors",
    "ConformalFactorReport",
    "DegenerateFrameError",
    "DirectionDecomposition",
    "ErnstSolution",
    "ErnstTauField",
    "KdVSeed",
    "LoopTangent",
    "MatrixLoop",
    "PathCrossesBadCellError",
    "PathRefinementError",
    "RationalFunction",
    "ScalarLoop",
    "SingularLoopError",
    "SpacetimePoint",
    "SymmetryGenerator",
    "TailMassError",
    "TauGrid",
    "TauVariationInput",
    "adjugate_inverse",
    "cocycle",
    "conformal_factor_check",
    "contour_integral_dlambda",
    "curvature_mismatch",
    "decompose",
    "dlogtau",
    "ernst_frame",
    "exp_pointwise",
    "factorize",
    "factorize_batch",
    "field_residual",
    "flat",
    "hamiltonian_diffeo",
    "hamiltonian_gauge",
    "incidence",
    "inverse",
    "kasner",
    "kdv_residual",
    "logtau_field",
    "mean_theta",
    "monomial",
    "multiply",
    "negative_part_expansion",
    "non_solution",
    "phi_normal_form",
    "point_source",
    "poisson_anomaly",
    "pullback_coeff_batch",
    "pullback_patching",
    "q_contour",
    "q_expansion",
    "random_tangent",
    "random_unimodular_loop",
    "rectangle_loop_integral",
    "refine_path_cells",
    "reduced_symplectic",
    "residue_check",
    "seed_one_pole",
    "seed_vacuum",
    "tau_grid",
    "tau_variation",
    "vacuum_logderiv_diffeo",
    "vacuum_logderiv_gauge",
    "__version__",
]
