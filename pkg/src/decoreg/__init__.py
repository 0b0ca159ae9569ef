"""Recovery guarantees for decomposable analysis priors.

Solves the penalized inverse problem 0.5 ||y - Phi x||^2 + lambda ||L^* x||_A
for decomposable norms (l1, group l1-l2, nuclear), constructs dual
certificates from the irrepresentability minimizers, and verifies the
uniqueness and noise-stability guarantees with explicitly computed constants.
"""

from .certificates import (
    DualCertificate,
    SourceCheck,
    build_certificate,
    certificate_quality,
    check_source_condition,
    read_certificate_csv,
    write_certificate_csv,
)
from .experiments import (
    ConfigError,
    OracleOptions,
    ScenarioConfig,
    ScenarioResult,
    difference_operator_1d,
    difference_operator_2d,
    first_order_residual,
    generate_scenario,
    noise_in_ball,
    oracle_solve,
    parseval_frame_analysis,
    run_scenario,
    vanishing_penalty,
)
from .guarantees import (
    BoundCheck,
    BoundCheckReport,
    NspOptions,
    StabilityBound,
    UniquenessVerdict,
    assemble_total_constant,
    bregman_to_l2,
    prediction_bregman_bounds,
    separable_uniqueness,
    stability_constants,
    strong_nsp_check,
    uniqueness_from_certificate,
    verify_bounds,
)
from .linops import (
    LinearOperator,
    Subspace,
    identity,
    image_basis,
    kernel_basis,
    operator_norm,
    projector,
    pseudoinverse,
    pseudoinverse_apply,
    read_operator_csv,
    restricted_injectivity_constant,
    restricted_operator,
    smallest_nonzero_singular_value,
    write_operator_csv,
    zero_operator,
)
from .norms import (
    DecomposableNorm,
    DecompositionModel,
    Membership,
    bregman,
    coercivity_constant,
    decompose_at,
    dual_norm_value,
    group,
    is_separable,
    l1,
    norm_from_config,
    norm_value,
    nuclear,
    prox,
    project_dual_ball,
    project_primal_ball,
    separable_split,
    subdiff_membership,
    with_separable_partition,
)
from .solver import (
    ICSolution,
    Problem,
    SolveReport,
    SolverOptions,
    gamma_apply,
    ic_context,
    ic_value,
    minimize_ic_full,
    minimize_ic_u,
    solve_penalized,
    xi_map,
)

__version__ = "0.1.0"
