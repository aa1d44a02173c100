"""Shapley feature attribution with interchangeable value functions.

The marginal (interventional) value function ``E[f(x_T, X_Tbar)]`` gives a
feature the model ignores zero attribution; the observational conditional
``E[f(x_T, X_Tbar) | X_T = x_T]`` need not. Both are implemented, together
with exact and kernel-least-squares Shapley solvers, integrated gradients,
and experiments on linear models with known attributions.
"""

from .data import (
    DiscreteDistribution,
    GaussianSpec,
    SampleMatrix,
    empirical_mean,
    independent_binary_distribution,
    irrelevant_feature_distribution,
    load_csv,
    make_common_cause_samples,
    make_rank1_gaussian,
    sample_gaussian,
    spawn_rng,
)
from .errors import FeatrelError
from .explain import explain_instance
from .intgrad import PathSpec, integrated_gradients, path_attribution, verify_axioms
from .model import (
    Expression,
    FunctionModel,
    LinearModel,
    ModelFunction,
    analytic_linear_attribution,
    fit_linear_ols,
    gradient_fd,
    parse_expression,
)
from .shapley import (
    AttributionResult,
    WlsSystem,
    sample_coalitions,
    shapley_exact,
    shapley_kernel_weight,
    shapley_wls,
)
from .valuefn import (
    Coalition,
    CoalitionValueTable,
    ValueFunctionSpec,
    build_value_table,
    conditional_gaussian_value,
    conditional_kernel_value,
    exact_discrete_value,
    gaussian_condition,
    marginal_mc,
)

__version__ = "0.1.0"
