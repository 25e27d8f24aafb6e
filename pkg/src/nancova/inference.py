"""ANOVA-type statistic and the chi-square / F approximate tests."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .effects import AdjustmentFit, EffectEstimates, fit_adjustment, relative_effects
from .errors import DegenerateVariance, InvalidInput
from .rankcore import Dataset, RankFrame, WeightingMode, rank_transforms
from .variance import (
    TRACE_EPS,
    CovarianceSet,
    contrast_no_effect,
    covariance_set,
    projection_t,
    trace_terms,
)


class Method(str, enum.Enum):
    FA1 = "fa1"  # F approximation, no covariate adjustment
    CA = "ca"  # chi-square approximation
    FA2 = "fa2"  # F approximation with covariate adjustment
    EB = "eb"  # Efron bootstrap
    WILD = "wild"  # Rademacher wild bootstrap


@dataclass
class TestReport:
    __test__ = False  # keep pytest from collecting this class

    method: str
    statistic: float
    df1: float
    p_value: float
    alpha: float
    reject: bool
    df2: Optional[float] = None
    critical_value: Optional[float] = None
    labels: list = field(default_factory=list)
    qhat: list = field(default_factory=list)  # a x (d + 1)
    what: list = field(default_factory=list)
    gamma: Optional[list] = None
    n_boot: Optional[int] = None
    seed: Optional[int] = None
    scheme: Optional[str] = None
    n_degenerate: Optional[int] = None
    weighting: str = WeightingMode.WEIGHTED.value
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TestReport":
        return cls(**data)


@dataclass(frozen=True)
class Analysis:
    """Every point estimate needed by the tests, computed once."""

    data: Dataset
    rf: RankFrame
    q: EffectEstimates
    fit: AdjustmentFit
    cov: CovarianceSet
    statistic: float  # A_N

    @property
    def t(self) -> np.ndarray:
        return self.cov.t


def ats(what, t, sigma_hat, N):
    """ANOVA-type statistic ``N f w'Tw / tr(T Sigma)``; returns ``(A_N, f_hat)``."""
    what = np.asarray(what, dtype=float)
    tr1, tr2 = trace_terms(np.asarray(t), np.asarray(sigma_hat))
    if tr1 <= TRACE_EPS or tr2 <= TRACE_EPS:
        raise DegenerateVariance(f"tr(T Sigma) = {tr1:.3g}")
    f_hat = tr1**2 / tr2
    # T 1 = 0 for contrast projections; shifting by a constant keeps w'Tw and
    # makes constant effects give exactly zero
    what = what - what[0]
    quad = float(what @ t @ what)
    return max(N * f_hat * quad / tr1, 0.0), f_hat


def _resolve_contrast(contrast, a):
    if contrast is None:
        return contrast_no_effect(a)
    k = np.atleast_2d(np.asarray(contrast, dtype=float))
    if k.shape[1] != a:
        raise InvalidInput(f"contrast has {k.shape[1]} columns; the data have {a} groups")
    return k


def analyze(data: Dataset, mode=WeightingMode.WEIGHTED, contrast=None) -> Analysis:
    rf = rank_transforms(data, mode)
    q = relative_effects(rf)
    fit = fit_adjustment(rf, q)
    t = projection_t(_resolve_contrast(contrast, data.a))
    cov = covariance_set(rf, q, fit, t)
    a_n, _ = ats(fit.what, t, cov.sigma_hat, rf.N)
    # T Gamma e = 0, so the centering vector drops out of the quadratic form
    gq = fit.gamma_matrix @ q.vector
    expanded = rf.N * cov.f_hat * float(gq @ t @ gq) / trace_terms(t, cov.sigma_hat)[0]
    assert math.isclose(a_n, max(expanded, 0.0), rel_tol=1e-8, abs_tol=1e-10)
    return Analysis(data=data, rf=rf, q=q, fit=fit, cov=cov, statistic=a_n)


def _base_report(an: Analysis, method: Method, alpha: float, contrast) -> dict:
    return dict(
        method=method.value,
        alpha=alpha,
        labels=list(an.data.labels),
        qhat=an.q.qhat.tolist(),
        what=an.fit.what.tolist(),
        gamma=an.fit.gamma.tolist() if an.data.d else None,
        weighting=an.rf.mode.value,
        config={
            "method": method.value,
            "alpha": alpha,
            "weighting": an.rf.mode.value,
            "contrast": None if contrast is None else np.asarray(contrast).tolist(),
            "sizes": an.data.sizes.tolist(),
            "d": an.data.d,
        },
    )


def chi2_from_analysis(an: Analysis, alpha=0.05, contrast=None) -> TestReport:
    f_hat = an.cov.f_hat
    p = float(stats.chi2.sf(an.statistic, f_hat))
    return TestReport(
        statistic=an.statistic, df1=f_hat, p_value=p, reject=p < alpha,
        **_base_report(an, Method.CA, alpha, contrast),
    )


def f_from_analysis(an: Analysis, alpha=0.05, contrast=None, method=Method.FA2) -> TestReport:
    f_hat, f0_hat = an.cov.f_hat, an.cov.f0_hat
    stat = an.statistic / f_hat
    p = float(stats.f.sf(stat, f_hat, f0_hat))
    return TestReport(
        statistic=stat, df1=f_hat, df2=f0_hat, p_value=p, reject=p < alpha,
        **_base_report(an, method, alpha, contrast),
    )


def chi2_test(data: Dataset, mode=WeightingMode.WEIGHTED, contrast=None, alpha=0.05) -> TestReport:
    """Covariate-adjusted ATS referred to a chi-square with f_hat df."""
    if data.d < 1:
        raise InvalidInput("the chi-square NANCOVA test needs at least one covariate")
    return chi2_from_analysis(analyze(data, mode, contrast), alpha, contrast)


def f_test(
    data: Dataset, mode=WeightingMode.WEIGHTED, contrast=None, alpha=0.05, adjusted=True
) -> TestReport:
    """``A_N / f_hat`` referred to F(f_hat, f0_hat).

    With ``adjusted=False`` the covariates are dropped and the identical
    pipeline runs with d = 0.
    """
    if adjusted:
        if data.d < 1:
            raise InvalidInput("the adjusted F test needs at least one covariate")
        return f_from_analysis(analyze(data, mode, contrast), alpha, contrast, Method.FA2)
    an = analyze(data.drop_covariates(), mode, contrast)
    return f_from_analysis(an, alpha, contrast, Method.FA1)


def weighted_chisq_null_sample(t, sigma, f, draws, rng) -> np.ndarray:
    """Draws from ``f / tr(T Sigma) * sum_j lambda_j U_j``, U_j iid chi2(1).

    ``lambda_j`` are the eigenvalues of ``T Sigma T``: the limiting null law
    of A_N when ``sigma`` and ``f`` are the limiting quantities.
    """
    t = np.asarray(t, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    tr1 = float(np.trace(t @ sigma))
    if tr1 <= TRACE_EPS:
        raise DegenerateVariance("tr(T Sigma) vanishes")
    lam = np.linalg.eigvalsh(t @ sigma @ t)
    lam = lam[lam > TRACE_EPS * max(1.0, lam.max())]
    u = rng.chisquare(1.0, size=(int(draws), lam.size))
    return f / tr1 * (u @ lam)
