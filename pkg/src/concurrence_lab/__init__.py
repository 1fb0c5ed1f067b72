"""Multipartite concurrences built from reduced-state purities, with tools to
probe whether a given coefficient choice is an LOCC monotone."""

from .concurrence import (
    CoefficientsAlpha,
    CoefficientsP,
    ConcurrenceSpec,
    ValidationReport,
    alpha_from_p,
    concurrence_pure,
    kappa_spec,
    normalize,
    p_from_alpha,
    radicand,
    symmetric_spec,
    validate,
)
from .convexroof import (
    Decomposition,
    MixedState,
    RoofConfig,
    RoofEstimate,
    convex_roof_upper,
    eigendecomposition_ensemble,
    flags_equality_check,
    mix_decomposition,
)
from .errors import (
    ConcurrenceLabError,
    DimensionMismatch,
    Inapplicable,
    InvalidSpec,
    NegativeRadicand,
    NotIsometry,
    NotPositive,
    NotPSD,
    SpecNotSufficient,
    ZeroSpec,
)
from .monotonicity import (
    SearchConfig,
    ViolationWitness,
    analytic_counterexample,
    gap_direct,
    gap_expanded,
    kappa_scan,
    minimize_gap,
    search_violation,
    single_element_counterexample,
    sufficient_criterion,
    tripartite_counterexample,
    tripartite_region,
)
from .qstate import (
    DensityMatrix,
    PureState,
    SubsetMask,
    attach_flag,
    cross_purity,
    flag_superposition,
    partial_trace,
    purity,
    random_state,
)

__version__ = "0.1.0"
