"""Differentially private local linear explanations of black-box models."""

from .adaptive import (
    AdaptiveConfig,
    AdaptiveSession,
    History,
    HistoryEntry,
    NonAdaptiveSession,
    ParamSelection,
    distance_threshold,
    history_append,
    per_query_charge,
    reuse_lookup,
    select_parameters,
)
from .core import (
    ExplanationDataset,
    LocalLoss,
    loss_eval,
    loss_gradient,
    project_ball,
    solve_exact,
    solve_optimal,
    utility_loss,
)
from .dpgd import GDConfig, dp_grad, explain_nonadaptive, learning_rate_c, t_max_bound
from .mechanisms import (
    BudgetAccountant,
    BudgetExhausted,
    ChargeStatus,
    PrivacyParams,
    advanced_composition,
    eps_per_iteration,
    exp_mech_select,
    gaussian_sigma,
    sample_gaussian,
    sigma_min,
)
from .noninteractive import ProxyDataset, build_proxy, noninteractive_explain
from .trainpriv import AmplificationReport, gamma_amplification, training_epsilon_naive
from .weights import WeightSpec, alpha_stable, family_check, radius_r

__version__ = "0.1.0"
