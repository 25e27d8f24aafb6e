"""Relative effects and variance-minimizing covariate adjustment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateCovariate
from .rankcore import RankFrame

#: Largest condition number accepted for the covariate block of C.
MAX_CONDITION = 1e12


def group_moments(values: np.ndarray, counts: np.ndarray | None = None):
    """Frequency-weighted mean and scatter matrix of the rows of ``values``.

    Used for both the plain estimates (unit counts) and Efron resamples
    (multinomial counts), so an all-ones draw reproduces the estimates
    bit for bit.
    """
    if counts is None:
        counts = np.ones(values.shape[0])
    counts = np.asarray(counts, dtype=float)
    mean = counts @ values / counts.sum()
    centered = values - mean
    scatter = (centered * counts[:, None]).T @ centered
    return mean, scatter


@dataclass(frozen=True)
class EffectEstimates:
    qhat: np.ndarray  # (a, d + 1)
    sizes: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        """Group-major, component-minor layout (q_1^(0..d), ..., q_a^(0..d))."""
        return self.qhat.ravel()

    @property
    def outcome(self) -> np.ndarray:
        return self.qhat[:, 0]

    @property
    def a(self) -> int:
        return self.qhat.shape[0]

    @property
    def d(self) -> int:
        return self.qhat.shape[1] - 1


@dataclass(frozen=True)
class AdjustmentFit:
    gamma: np.ndarray  # (d,)
    cmat: np.ndarray  # (d + 1, d + 1)
    gamma_matrix: np.ndarray  # (a, a(d + 1))
    what: np.ndarray  # (a,)


def relative_effects(rf: RankFrame) -> EffectEstimates:
    qhat = np.vstack([group_moments(rf.group(i))[0] for i in range(rf.a)])
    return EffectEstimates(qhat=qhat, sizes=np.asarray(rf.sizes))


def group_scatters(rf: RankFrame) -> np.ndarray:
    """Per-group centered cross-product sums, shape ``(a, d + 1, d + 1)``."""
    return np.stack([group_moments(rf.group(i))[1] for i in range(rf.a)])


def chat(rf: RankFrame, q: EffectEstimates) -> np.ndarray:
    """Pooled within-group cross-products divided by N.

    ``q`` must be the group means of ``rf`` (as returned by
    :func:`relative_effects`); the centering is recomputed from ``rf``.
    """
    if q.qhat.shape != (rf.a, rf.d + 1):
        raise ValueError("effect estimates do not match the rank frame")
    return group_scatters(rf).sum(axis=0) / rf.N


def gamma_matrix(gamma: np.ndarray, a: int) -> np.ndarray:
    """``I_a kron (1, -gamma')``."""
    row = np.concatenate([[1.0], -np.asarray(gamma, dtype=float)])
    return np.kron(np.eye(a), row[None, :])


def centering_vector(a: int, d: int) -> np.ndarray:
    """``1/2 * 1_a kron (0, 1_d')'``."""
    return 0.5 * np.kron(np.ones(a), np.concatenate([[0.0], np.ones(d)]))


def solve_gamma(cmat: np.ndarray, max_condition: float = MAX_CONDITION) -> np.ndarray:
    d = cmat.shape[0] - 1
    if d == 0:
        return np.zeros(0)
    block = cmat[1:, 1:]
    rhs = cmat[0, 1:]
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond > max_condition:
        raise DegenerateCovariate(
            f"covariate block of C has condition number {cond:.3g} "
            f"(limit {max_condition:.3g}); a covariate is constant or collinear"
        )
    try:
        factor = scipy.linalg.cho_factor(block, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariate(f"covariate block of C is not positive definite: {exc}")
    return scipy.linalg.cho_solve(factor, rhs)


def adjusted_effects(q: EffectEstimates, gamma) -> np.ndarray:
    """Componentwise form: q_i^(0) - sum_r gamma_r (q_i^(r) - 1/2)."""
    gamma = np.asarray(gamma, dtype=float)
    return q.qhat[:, 0] - (q.qhat[:, 1:] - 0.5) @ gamma


def fit_adjustment(
    rf: RankFrame, q: EffectEstimates, max_condition: float = MAX_CONDITION
) -> AdjustmentFit:
    cmat = chat(rf, q)
    gamma = solve_gamma(cmat, max_condition)
    gmat = gamma_matrix(gamma, q.a)
    what = gmat @ (q.vector - centering_vector(q.a, q.d))
    assert np.allclose(what, adjusted_effects(q, gamma), rtol=0, atol=1e-12)
    return AdjustmentFit(gamma=gamma, cmat=cmat, gamma_matrix=gmat, what=what)
