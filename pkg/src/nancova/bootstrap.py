"""Resampling on the level of rank transforms.

The reference distribution H-hat stays fixed: bootstrap rank transforms are
drawn from the observed RTs of each group and never re-ranked. Efron draws are
represented by multinomial counts on the observed rows; wild draws flip the
sign of each centered RT with a Rademacher weight.

Bootstrap draws are produced in fixed-size chunks. Chunk ``c`` draws from
``SeedSequence(seed, spawn_key=(c,))`` and redraws degenerate replicates from
``spawn_key=(c, attempt)``, so the result does not depend on how many workers
process the chunks. Rows are put in a canonical order first, so it does not
depend on the input row order either.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .effects import (
    MAX_CONDITION,
    EffectEstimates,
    gamma_matrix,
    group_moments,
    solve_gamma,
)
from .errors import DegenerateCovariate, DegenerateDraw, InvalidInput, TooManyDegenerateDraws
from .inference import Analysis, Method, TestReport, _base_report, analyze
from .rankcore import Dataset, RankFrame, WeightingMode
from .variance import TRACE_EPS, adjusted_sigma, block_scale, contrast_no_effect, projection_t, trace_terms

CHUNK_SIZE = 256
MAX_DEGENERATE_FRACTION = 0.05
THREADS_ENV = "NANCOVA_THREADS"


class WeightScheme(str, enum.Enum):
    EFRON = "efron"
    WILD = "wild"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def draw_weights(scheme, sizes, rng, n_draws=None):
    """One weight array per group; shape ``(n_i,)`` or ``(n_draws, n_i)``."""
    scheme = WeightScheme(scheme)
    out = []
    for n in np.asarray(sizes, dtype=int):
        shape = (n,) if n_draws is None else (n_draws, n)
        if scheme is WeightScheme.EFRON:
            w = rng.multinomial(n, np.full(n, 1.0 / n), size=None if n_draws is None else n_draws)
        else:
            w = 2 * rng.integers(0, 2, size=shape) - 1
        out.append(np.asarray(w, dtype=float).reshape(shape))
    return out


@dataclass(frozen=True)
class BootstrapDraw:
    ybar_star: np.ndarray  # length a(d + 1)
    s_star: np.ndarray
    gamma_star: np.ndarray
    sigma_star: np.ndarray
    f_star: float
    a_star: float


def bootstrap_draw(
    rf: RankFrame, q: EffectEstimates, weights, t=None, scheme=WeightScheme.EFRON
) -> BootstrapDraw:
    """Compute every bootstrap estimator for one set of weights."""
    scheme = WeightScheme(scheme)
    if t is None:
        t = projection_t(contrast_no_effect(rf.a))
    means, blocks, scatters = [], [], []
    for i in range(rf.a):
        y = rf.group(i)
        m = np.asarray(weights[i], dtype=float)
        if scheme is WeightScheme.EFRON:
            mean, scatter = group_moments(y, m)
        else:
            mean, scatter = group_moments(q.qhat[i] + m[:, None] * (y - q.qhat[i]))
        means.append(mean)
        scatters.append(scatter)
        blocks.append(block_scale(int(rf.sizes[i]), rf.N) * scatter)
    ybar = np.concatenate(means)
    s_star = scipy.linalg.block_diag(*blocks)
    cmat = sum(scatters) / rf.N
    try:
        gamma = solve_gamma(cmat)
    except DegenerateCovariate as exc:
        raise DegenerateDraw(str(exc)) from exc
    gmat = gamma_matrix(gamma, rf.a)
    sigma = adjusted_sigma(s_star, gmat)
    tr1, tr2 = trace_terms(t, sigma)
    if tr1 <= TRACE_EPS or tr2 <= TRACE_EPS:
        raise DegenerateDraw(f"tr(T Sigma*) = {tr1:.3g}")
    f_star = tr1**2 / tr2
    u = gmat @ (ybar - q.vector)
    a_star = max(rf.N * f_star * float(u @ t @ u) / tr1, 0.0)
    return BootstrapDraw(ybar, s_star, gamma, sigma, f_star, a_star)


@dataclass(frozen=True)
class DrawBatch:
    """Vectorized bootstrap estimators for ``B`` draws.

    ``sigma_star`` holds only the diagonal of Sigma*: with a block-diagonal
    S* and Gamma* = I kron (1, -gamma*'), the adjusted covariance is diagonal.
    """

    ybar_star: np.ndarray  # (B, a, d + 1)
    s_blocks: np.ndarray  # (B, a, d + 1, d + 1)
    gamma_star: np.ndarray  # (B, d)
    sigma_star: np.ndarray  # (B, a)
    f_star: np.ndarray
    a_star: np.ndarray
    degenerate: np.ndarray  # (B,) bool


def batch_draws(
    rf: RankFrame, q: EffectEstimates, t: np.ndarray, weights, scheme=WeightScheme.EFRON
) -> DrawBatch:
    scheme = WeightScheme(scheme)
    p = rf.d + 1
    n_draws = np.asarray(weights[0]).shape[0]
    zbar = np.empty((n_draws, rf.a, p))
    scatter = np.empty((n_draws, rf.a, p, p))
    for i in range(rf.a):
        n = int(rf.sizes[i])
        z = rf.group(i) - q.qhat[i]
        m = np.asarray(weights[i], dtype=float)
        zz = (z[:, :, None] * z[:, None, :]).reshape(n, p * p)
        second = (m if scheme is WeightScheme.EFRON else m * m) @ zz
        zbar[:, i] = m @ z / n
        scatter[:, i] = second.reshape(n_draws, p, p) - n * zbar[:, i, :, None] * zbar[:, i, None, :]
    scale = np.array([block_scale(int(n), rf.N) for n in rf.sizes])
    s_blocks = scatter * scale[None, :, None, None]
    cmat = scatter.sum(axis=1) / rf.N

    degenerate = np.zeros(n_draws, dtype=bool)
    d = rf.d
    if d:
        block = cmat[:, 1:, 1:]
        eig = np.linalg.eigvalsh(block)
        lo, hi = eig[:, 0], eig[:, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            bad = (lo <= 0) | (hi / lo > MAX_CONDITION)
        degenerate |= bad
        safe = np.where(bad[:, None, None], np.eye(d), block)
        gamma = np.linalg.solve(safe, cmat[:, 0, 1:, None])[..., 0]
        gamma[bad] = 0.0
    else:
        gamma = np.zeros((n_draws, 0))
    g = np.concatenate([np.ones((n_draws, 1)), -gamma], axis=1)
    sig = np.einsum("bp,bipq,bq->bi", g, s_blocks, g)
    u = np.einsum("bip,bp->bi", zbar, g)
    tr1 = sig @ np.diag(t)
    tr2 = np.einsum("bi,ij,bj->b", sig, t * t, sig)
    quad = np.einsum("bi,ij,bj->b", u, t, u)
    degenerate |= (tr1 <= TRACE_EPS) | (tr2 <= TRACE_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        f_star = np.where(degenerate, np.nan, tr1**2 / tr2)
        a_star = np.where(degenerate, np.nan, np.maximum(rf.N * tr1 * quad / tr2, 0.0))
    return DrawBatch(
        ybar_star=zbar + q.qhat[None],
        s_blocks=s_blocks,
        gamma_star=gamma,
        sigma_star=sig,
        f_star=f_star,
        a_star=a_star,
        degenerate=degenerate,
    )


def _chunk_rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _run_chunk(an: Analysis, scheme, seed, chunk, n_draws, limit):
    rf, q, t = an.rf, an.q, an.t
    rng = _chunk_rng(seed, chunk)
    batch = batch_draws(rf, q, t, draw_weights(scheme, rf.sizes, rng, n_draws), scheme)
    out = batch.a_star.copy()
    bad = np.flatnonzero(batch.degenerate)
    n_degenerate = bad.size
    attempt = 0
    while bad.size:
        if n_degenerate > limit:
            raise TooManyDegenerateDraws(
                f"more than {limit} degenerate bootstrap draws; the data are too "
                "sparse for resampling"
            )
        attempt += 1
        rng = _chunk_rng(seed, chunk, attempt)
        batch = batch_draws(rf, q, t, draw_weights(scheme, rf.sizes, rng, bad.size), scheme)
        out[bad] = batch.a_star
        bad = bad[batch.degenerate]
        n_degenerate += bad.size
    return out, n_degenerate


def canonical_order(an: Analysis) -> Analysis:
    """Sort the rows of every group lexicographically by their rank transforms.

    Weights are attached to rows by position, so this makes the bootstrap
    distribution independent of the input row order.
    """
    rf = an.rf
    blocks = []
    for i in range(rf.a):
        y = rf.group(i)
        blocks.append(y[np.lexsort(y.T[::-1])])
    yhat = np.vstack(blocks)
    yhat.setflags(write=False)
    return replace(an, rf=RankFrame(yhat=yhat, sizes=rf.sizes, mode=rf.mode))


def bootstrap_distribution(an: Analysis, scheme, n_boot, seed, workers=None):
    """``n_boot`` bootstrap ATS values in draw order and the degenerate count."""
    if n_boot < 1:
        raise InvalidInput("n_boot must be at least 1")
    an = canonical_order(an)
    limit = int(MAX_DEGENERATE_FRACTION * n_boot)
    starts = range(0, n_boot, CHUNK_SIZE)
    jobs = [(c, min(CHUNK_SIZE, n_boot - s)) for c, s in enumerate(starts)]
    workers = default_workers() if workers is None else workers

    def run(job):
        return _run_chunk(an, scheme, seed, job[0], job[1], limit)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    a_star = np.concatenate([r[0] for r in results])
    n_degenerate = sum(r[1] for r in results)
    if n_degenerate > limit:
        raise TooManyDegenerateDraws(f"{n_degenerate} of {n_boot} draws were degenerate")
    return a_star, n_degenerate


def resolve_seed(seed):
    if seed is None:
        return int(np.random.SeedSequence().entropy)
    return int(seed)


def bootstrap_from_analysis(
    an: Analysis, alpha=0.05, scheme=WeightScheme.EFRON, n_boot=5000, seed=None,
    contrast=None, workers=None,
) -> TestReport:
    scheme = WeightScheme(scheme)
    seed = resolve_seed(seed)
    a_star, n_degenerate = bootstrap_distribution(an, scheme, n_boot, seed, workers)
    a_n = an.statistic
    p = (1 + int(np.count_nonzero(a_star >= a_n))) / (n_boot + 1)
    crit = float(np.quantile(a_star, 1.0 - alpha))
    method = Method.EB if scheme is WeightScheme.EFRON else Method.WILD
    base = _base_report(an, method, alpha, contrast)
    base["config"].update(n_boot=n_boot, seed=seed, scheme=scheme.value)
    return TestReport(
        statistic=a_n,
        df1=an.cov.f_hat,
        p_value=p,
        critical_value=crit,
        reject=bool(a_n > crit),
        n_boot=n_boot,
        seed=seed,
        scheme=scheme.value,
        n_degenerate=n_degenerate,
        **base,
    )


def bootstrap_test(
    data: Dataset,
    mode=WeightingMode.WEIGHTED,
    contrast=None,
    alpha=0.05,
    scheme=WeightScheme.EFRON,
    n_boot=5000,
    seed=None,
    workers=None,
) -> TestReport:
    """Resampling NANCOVA test.

    The decision follows the quantile rule: reject when A_N exceeds the
    empirical ``1 - alpha`` quantile of the bootstrap ATS. The reported
    p-value is ``(1 + #{A*_b >= A_N}) / (n_boot + 1)``; up to the
    interpolation of the quantile, ``p <= alpha`` and the quantile rule
    agree.
    """
    an = analyze(data, mode, contrast)
    return bootstrap_from_analysis(an, alpha, scheme, n_boot, seed, contrast, workers)
