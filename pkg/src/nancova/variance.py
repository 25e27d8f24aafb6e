"""Covariance estimates, contrast projections and degrees of freedom."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .effects import AdjustmentFit, EffectEstimates, group_moments
from .errors import DegenerateVariance, InvalidInput
from .rankcore import RankFrame

#: Trace denominators at or below this are treated as zero.
TRACE_EPS = 1e-14
#: Relative singular-value cutoff for the Moore-Penrose inverse.
PINV_RCOND = 1e-12


@dataclass(frozen=True)
class CovarianceSet:
    shat: np.ndarray
    sigma_hat: np.ndarray
    t: np.ndarray
    f_hat: float
    f0_hat: float

    @property
    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of S-hat; a sample-level check on minimal variance."""
        return float(np.linalg.eigvalsh(self.shat).min())


def block_scale(n_i: int, N: int) -> float:
    return N / (n_i * (n_i - 1))


def sigma_block(rf: RankFrame, q: EffectEstimates, i: int) -> np.ndarray:
    n_i = int(rf.sizes[i])
    if n_i < 2:
        raise InvalidInput(f"group {i} has {n_i} observation(s); need at least 2")
    _, scatter = group_moments(rf.group(i))
    return block_scale(n_i, rf.N) * scatter


def shat(rf: RankFrame, q: EffectEstimates) -> np.ndarray:
    return scipy.linalg.block_diag(*[sigma_block(rf, q, i) for i in range(rf.a)])


def contrast_no_effect(a: int) -> np.ndarray:
    """Centering matrix ``I_a - J_a / a``."""
    if a < 2:
        raise InvalidInput("a contrast needs at least 2 groups")
    return np.eye(a) - np.full((a, a), 1.0 / a)


def projection_t(k) -> np.ndarray:
    """``K' (K K')^- K`` with the Moore-Penrose inverse."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    if not np.allclose(k.sum(axis=1), 0.0, atol=1e-12):
        raise InvalidInput("contrast rows must sum to zero")
    t = k.T @ np.linalg.pinv(k @ k.T, rcond=PINV_RCOND, hermitian=True) @ k
    return (t + t.T) / 2.0


def adjusted_sigma(shat_: np.ndarray, gamma_matrix: np.ndarray) -> np.ndarray:
    sigma = gamma_matrix @ shat_ @ gamma_matrix.T
    return (sigma + sigma.T) / 2.0


def trace_terms(t: np.ndarray, sigma: np.ndarray):
    """``(tr(T S), tr(T S T S))``."""
    ts = t @ sigma
    return float(np.trace(ts)), float(np.sum(ts * ts.T))


def dof_estimates(t, sigma_hat, sizes):
    """Box-type degrees of freedom ``(f_hat, f0_hat)``."""
    t = np.asarray(t, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    tr1, tr2 = trace_terms(t, sigma_hat)
    if tr1 <= TRACE_EPS or tr2 <= TRACE_EPS:
        raise DegenerateVariance(
            f"tr(T Sigma) = {tr1:.3g}, tr(T Sigma T Sigma) = {tr2:.3g}; "
            "the data carry no usable variability"
        )
    f_hat = tr1**2 / tr2
    dt = np.diag(np.diag(t))
    lam = np.diag(1.0 / (np.asarray(sizes, dtype=float) - 1.0))
    num = np.trace(dt @ sigma_hat) ** 2
    den = np.trace(dt @ dt @ sigma_hat @ sigma_hat @ lam)
    if den <= TRACE_EPS:
        raise DegenerateVariance(f"f0 denominator is {den:.3g}")
    return f_hat, float(num / den)


def covariance_set(
    rf: RankFrame, q: EffectEstimates, fit: AdjustmentFit, t: np.ndarray
) -> CovarianceSet:
    s = shat(rf, q)
    sigma = adjusted_sigma(s, fit.gamma_matrix)
    f_hat, f0_hat = dof_estimates(t, sigma, rf.sizes)
    return CovarianceSet(shat=s, sigma_hat=sigma, t=t, f_hat=f_hat, f0_hat=f0_hat)
