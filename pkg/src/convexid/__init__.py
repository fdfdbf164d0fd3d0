"""Identification of linear stochastic systems with convex loss criteria.

Batch minimizers of the empirical risk, recursive stochastic-approximation
estimators with expanding truncations, an ARX simulator, a kernel-regularized
least squares baseline and a Monte Carlo harness.
"""

from .bench import (
    ExperimentConfig,
    MethodSpec,
    MonteCarloReport,
    error_metric,
    run_monte_carlo,
    summarize_errors,
)
from .criterion import (
    BatchSolverConfig,
    Dataset,
    StepRule,
    empirical_risk,
    empirical_risk_subgradient,
    fit_batch,
    read_dataset_csv,
    write_dataset_csv,
)
from .errors import ArgumentError, ConfigurationError, DataError, NumericalError
from .losses import LossKind, LossSpec, growth_exponent, loss_subgradient, loss_value, parse_loss
from .regls import HyperGrid, KernelHyper, KernelKind, ReglsConfig, kernel_matrix, regls_fit, tune_hyperparameters
from .saawet import (
    RecursiveState,
    RuleKind,
    Schedule,
    UpdateRule,
    default_schedule,
    quantile_as_scaled_lad,
    run_recursive,
    sa_step,
    truncation_bound,
)
from .simulate import ArxConfig, InputModel, NoiseModel, OutlierConfig, build_regressors, inject_outliers, simulate_arx

__version__ = "0.1.0"
