"""Rank-based covariate-adjusted tests for group effects (nonparametric ANCOVA)."""

from .bootstrap import WeightScheme, bootstrap_draw, bootstrap_test, draw_weights
from .effects import AdjustmentFit, EffectEstimates, chat, fit_adjustment, relative_effects
from .errors import (
    DegenerateCovariate,
    DegenerateDraw,
    DegenerateVariance,
    InfeasibleCorrelation,
    InvalidInput,
    NancovaError,
    ParseError,
    ScenarioError,
    TooManyDegenerateDraws,
)
from .inference import Method, TestReport, analyze, ats, chi2_test, f_test, weighted_chisq_null_sample
from .rankcore import (
    Dataset,
    RankFrame,
    WeightingMode,
    mid_ranks,
    normalized_ecdf,
    pseudo_ranks,
    rank_transforms,
)
from .simgen import Scenario, SimResult, gen_linear, gen_ordinal, monte_carlo, resample_pairs
from .variance import (
    CovarianceSet,
    adjusted_sigma,
    contrast_no_effect,
    dof_estimates,
    projection_t,
    sigma_block,
)

__version__ = "0.1.0"
