from .checks import (
    HYPOTHESES,
    QualEntry,
    QualReport,
    check_calmness,
    check_calmness_map,
    check_condition_H,
    check_hypothesis,
    check_isolated_calmness,
    check_local_nic,
    check_Q1,
    check_Q2,
    check_semilocal_nic,
    check_upper_lipschitz_selection,
    first_hypothesis,
    marginal_q_sets,
    qual_report,
)
from .problem import (
    MarginalConfig,
    MarginalProblem,
    MarginalValue,
    UnboundedMarginalError,
    eval_marginal,
    eval_marginal_detail,
    localized_marginal,
    marginal_callable,
    marginal_epigraph,
    solution_map,
)
from .theorems import (
    EQUALITY,
    LOWER_ONLY,
    NOT_APPLICABLE,
    UNVERIFIED,
    UPPER_ONLY,
    DirectSubdiffs,
    HypothesisError,
    MarginalResult,
    NonDifferentiableError,
    direct_marginal_subdiffs,
    exact_regular_diffcost,
    exact_regular_q2,
    exact_singular_diffcost,
    exact_singular_q2,
    intersect_shifted_coderivatives,
    lower_estimate_regular,
    lower_estimate_singular,
    upper_estimate_regular,
    upper_estimate_singular,
)
