"""Propensity-driven divergence bounds and robust causal-effect intervals."""

from .aggregate import BoundFamily, k_agg, k_agg_auto
from .data import Dataset, identity_phi, indicator_phi, load_csv, save_csv, table_phi
from .divergences import (
    DIVERGENCES,
    DivergenceSpec,
    ExtendedReal,
    POS_INF,
    conjugate,
    conjugate_derivative,
    conjugate_value,
    get_spec,
    ipm_mmd_bound,
    policy_radius,
    radius,
    radius_derivative,
)
from .dual_optim import (
    BoundEstimate,
    ConditionalBoundFit,
    DualNetwork,
    DualParamsMarginal,
    OptimConfig,
    debiased_loss,
    dual_value_minimize,
    evaluate_bound,
    fit_conditional,
    fit_marginal,
    orthogonality_probe,
)
from .nuisance import (
    DEFAULT_CLIP,
    PropensityEstimate,
    PseudoOutcomeRegressor,
    fit_propensity,
    fit_pseudo_outcome,
    marginal_propensity,
)
from .oracles import (
    DiscreteLaw,
    DivergenceEstimate,
    ExpFamilyLaw,
    confounded_binary_laws,
    exact_divergence,
    primal_oracle,
    rn_derivative,
    scm_ground_truth,
)
from .simulate import (
    EvalReport,
    SyntheticSCM,
    evaluate_run,
    generate,
    inject_propensity_noise,
    penalized_width,
)

__version__ = "0.1.0"
