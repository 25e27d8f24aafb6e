"""Data generators for the simulation designs and a Monte Carlo driver.

Every run ``r`` of a scenario draws its data from
``SeedSequence(seed, spawn_key=(r, 0))`` and seeds its bootstrap from
``spawn_key=(r, 1)``; results are therefore identical however the runs are
distributed over workers.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, optimize, stats

from .bootstrap import WeightScheme, bootstrap_from_analysis, default_workers
from .errors import InfeasibleCorrelation, InvalidInput, NancovaError, ScenarioError
from .inference import Method, analyze, chi2_from_analysis, f_from_analysis
from .rankcore import Dataset, WeightingMode

UNIFORM5 = (0.2, 0.2, 0.2, 0.2, 0.2)
POWER_MARGINALS = ((0.3, 0.3, 0.2, 0.1, 0.1), (0.1, 0.1, 0.2, 0.3, 0.3))
COVARIATE_COEF = 2.5
MAX_ERROR_FRACTION = 0.01
_RHO_EDGE = 1 - 1e-9


# -- ordinal data via a Gaussian copula ------------------------------------


def _thresholds(probs):
    cum = np.cumsum(probs)[:-1]
    return stats.norm.ppf(np.clip(cum, 0.0, 1.0))


def _discrete_moments(probs, levels):
    probs, levels = np.asarray(probs), np.asarray(levels, dtype=float)
    mean = probs @ levels
    return mean, math.sqrt(probs @ (levels - mean) ** 2)


def _quantile_coupling(px, lx, py, ly, antitone=False):
    """E[XY] when X and Y are comonotone (or antitone) with the given margins."""
    if antitone:
        py, ly = py[::-1], ly[::-1]
    cx, cy = np.cumsum(px), np.cumsum(py)
    cuts = np.unique(np.concatenate([[0.0], cx, cy, [1.0]]).clip(0, 1))
    mids = (cuts[:-1] + cuts[1:]) / 2
    xi = np.minimum(np.searchsorted(cx, mids), len(lx) - 1)
    yi = np.minimum(np.searchsorted(cy, mids), len(ly) - 1)
    return float(np.sum(np.diff(cuts) * lx[xi] * ly[yi]))


def discretized_correlation(rho, px, py, levels_x=None, levels_y=None) -> float:
    """Pearson correlation of two ordinal variables cut from a latent normal pair.

    Uses ``Cov(1{Z1 > a}, 1{Z2 > b}) = int_0^rho phi2(a, b; r) dr``.
    """
    px, py = np.asarray(px, float), np.asarray(py, float)
    lx = np.arange(1.0, len(px) + 1) if levels_x is None else np.asarray(levels_x, float)
    ly = np.arange(1.0, len(py) + 1) if levels_y is None else np.asarray(levels_y, float)
    ax, ay = _thresholds(px), _thresholds(py)
    dx, dy = np.diff(lx), np.diff(ly)
    keep_x, keep_y = np.isfinite(ax), np.isfinite(ay)
    ax, dx, ay, dy = ax[keep_x], dx[keep_x], ay[keep_y], dy[keep_y]
    h, k = np.meshgrid(ax, ay, indexing="ij")
    weight = np.outer(dx, dy)

    def density(r):
        s = 1.0 - r * r
        return np.exp(-(h * h - 2 * r * h * k + k * k) / (2 * s)) / (2 * np.pi * math.sqrt(s))

    if rho == 0:
        cov = 0.0
    else:
        integral, _ = integrate.quad_vec(density, 0.0, rho, epsabs=1e-13, epsrel=1e-11)
        cov = float(np.sum(weight * integral))
    _, sx = _discrete_moments(px, lx)
    _, sy = _discrete_moments(py, ly)
    return cov / (sx * sy)


@functools.lru_cache(maxsize=256)
def latent_correlation(px: tuple, py: tuple, target: float, levels_x=None, levels_y=None) -> float:
    """Latent normal correlation whose discretization has Pearson correlation ``target``."""
    if target == 0:
        return 0.0
    px_, py_ = np.asarray(px, float), np.asarray(py, float)
    lx = np.arange(1.0, len(px) + 1) if levels_x is None else np.asarray(levels_x, float)
    ly = np.arange(1.0, len(py) + 1) if levels_y is None else np.asarray(levels_y, float)
    mx, sx = _discrete_moments(px_, lx)
    my, sy = _discrete_moments(py_, ly)
    upper = (_quantile_coupling(px_, lx, py_, ly) - mx * my) / (sx * sy)
    lower = (_quantile_coupling(px_, lx, py_, ly, antitone=True) - mx * my) / (sx * sy)
    if not lower < target < upper:
        raise InfeasibleCorrelation(
            f"target correlation {target} outside the attainable range "
            f"({lower:.4f}, {upper:.4f}) for these marginals"
        )

    def gap(r):
        return discretized_correlation(r, px_, py_, lx, ly) - target

    lo, hi = (0.0, _RHO_EDGE) if target > 0 else (-_RHO_EDGE, 0.0)
    if gap(lo) * gap(hi) > 0:
        return hi if target > 0 else lo
    return optimize.brentq(gap, lo, hi, xtol=1e-12)


def _check_probs(p, what):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2 or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise InvalidInput(f"{what}: probabilities must be nonnegative and sum to 1")
    return tuple(float(x) for x in p)


def gen_ordinal(sizes, marginals, target_corr, rng, levels=None) -> Dataset:
    """Ordinal outcome and covariates with a given outcome/covariate correlation.

    ``marginals[i][r]`` is the probability vector of component ``r`` in group
    ``i``. The latent correlation is calibrated separately for every group so
    that the discretized pair reaches ``target_corr``; covariates are latently
    independent of each other.
    """
    if len(marginals) != len(sizes):
        raise InvalidInput("one set of marginals per group is required")
    groups = []
    for i, (n, margs) in enumerate(zip(sizes, marginals)):
        margs = [_check_probs(p, f"group {i} component {r}") for r, p in enumerate(margs)]
        lv = tuple(np.arange(1.0, len(margs[0]) + 1)) if levels is None else tuple(levels)
        p = len(margs)
        corr = np.eye(p)
        for r in range(1, p):
            rho = latent_correlation(margs[0], margs[r], float(target_corr), lv, lv)
            corr[0, r] = corr[r, 0] = rho
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise InfeasibleCorrelation("latent correlation matrix is not positive definite")
        z = rng.standard_normal((int(n), p)) @ chol.T
        cols = [np.asarray(lv)[np.searchsorted(_thresholds(m), z[:, r])] for r, m in enumerate(margs)]
        groups.append(np.column_stack(cols))
    return Dataset(tuple(groups))


def ordinal_marginals(a: int, power: bool, d: int = 1):
    """Uniform 5-level margins; with ``power`` the outcome shifts down in group 1 and up in group 2."""
    if power and a != 2:
        raise InvalidInput("the power marginals are defined for two groups")
    return [
        [POWER_MARGINALS[i] if power else UNIFORM5] + [UNIFORM5] * d
        for i in range(a)
    ]


# -- linear model ----------------------------------------------------------

ERROR_DISTS = ("normal", "exponential", "t3")


def standardized_errors(kind, size, rng) -> np.ndarray:
    if kind == "normal":
        return rng.standard_normal(size)
    if kind == "exponential":
        return rng.exponential(1.0, size) - 1.0
    if kind == "t3":
        return rng.standard_t(3, size) / math.sqrt(3.0)
    raise InvalidInput(f"unknown error distribution {kind!r}; expected one of {ERROR_DISTS}")


def gen_linear(sizes, mu, error_dist, rng, n_covariates=2, coef=COVARIATE_COEF) -> Dataset:
    """Outcome ``mu_i + coef * sum(X) + eps`` with iid Uniform(0, 1) covariates."""
    if len(mu) != len(sizes):
        raise InvalidInput("mu needs one entry per group")
    groups = []
    for n, m in zip(sizes, mu):
        x = rng.random((int(n), n_covariates))
        y = m + coef * x.sum(axis=1) + standardized_errors(error_dist, int(n), rng)
        groups.append(np.column_stack([y, x]))
    return Dataset(tuple(groups))


# -- resampling a reference table ------------------------------------------


def resample_pairs(source, sizes, effect_lambda=None, rng=None, clip=(0.0, 10.0)) -> Dataset:
    """Draw rows of ``source`` (outcome first, then covariates) with replacement.

    With ``effect_lambda`` set, the second group's outcome is lowered by an
    independent Poisson draw and clipped to ``clip``.
    """
    source = np.atleast_2d(np.asarray(source, dtype=float))
    if source.size == 0 or source.shape[0] == 0:
        raise InvalidInput("source table is empty")
    if rng is None:
        rng = np.random.default_rng()
    groups = []
    for i, n in enumerate(sizes):
        rows = source[rng.integers(0, source.shape[0], int(n))].copy()
        if i == 1 and effect_lambda:
            rows[:, 0] = np.clip(rows[:, 0] - rng.poisson(effect_lambda, int(n)), *clip)
        groups.append(rows)
    return Dataset(tuple(groups))


# -- Monte Carlo driver ----------------------------------------------------

KINDS = ("ordinal", "linear", "resample")
METHODS = tuple(m.value for m in (Method.FA1, Method.CA, Method.FA2, Method.EB))


@dataclass
class Scenario:
    kind: str
    sizes: list
    name: str = ""
    alpha: float = 0.05
    n_sim: int = 2000
    n_boot: int = 1000
    seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    weighting: str = WeightingMode.WEIGHTED.value
    # ordinal
    marginals: object = "uniform"  # "uniform", "power" or explicit [group][component][level]
    target_corr: float = 0.6
    # linear
    mu: Optional[list] = None
    error_dist: str = "normal"
    # resample
    source: Optional[str] = None
    effect_lambda: Optional[float] = None

    def __post_init__(self):
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind: {self.kind!r} is not one of {list(KINDS)}")
        self.sizes = [int(n) for n in self.sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 2:
            errors.append("sizes: need at least 2 groups with at least 2 observations each")
        bad = [m for m in self.methods if m not in METHODS + (Method.WILD.value,)]
        if bad:
            errors.append(f"methods: unknown {bad}; allowed {list(METHODS) + [Method.WILD.value]}")
        if not 0 < self.alpha < 1:
            errors.append("alpha: must lie in (0, 1)")
        if self.n_sim < 1:
            errors.append("n_sim: must be positive")
        if self.n_boot < 1:
            errors.append("n_boot: must be positive")
        if self.error_dist not in ERROR_DISTS:
            errors.append(f"error_dist: {self.error_dist!r} is not one of {list(ERROR_DISTS)}")
        if self.kind == "linear" and self.mu is not None and len(self.mu) != len(self.sizes):
            errors.append("mu: needs one entry per group")
        if self.kind == "resample" and not self.source:
            errors.append("source: required for kind 'resample'")
        if self.kind == "ordinal":
            try:
                self.resolved_marginals()
            except (InvalidInput, TypeError, ValueError) as exc:
                errors.append(f"marginals: {exc}")
        if errors:
            raise ScenarioError("; ".join(errors))

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        if "lambda" in data:
            data["effect_lambda"] = data.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScenarioError(f"unknown field(s) {unknown}; allowed {sorted(known)}")
        if "kind" not in data or "sizes" not in data:
            raise ScenarioError("fields 'kind' and 'sizes' are required")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def resolved_marginals(self):
        if isinstance(self.marginals, str):
            if self.marginals not in ("uniform", "power"):
                raise InvalidInput(f"{self.marginals!r} is not 'uniform', 'power' or a list")
            return ordinal_marginals(len(self.sizes), self.marginals == "power")
        margs = [[list(map(float, p)) for p in g] for g in self.marginals]
        if len(margs) != len(self.sizes):
            raise InvalidInput("one set of marginals per group is required")
        for g in margs:
            for p in g:
                _check_probs(p, "marginals")
        return margs

    @property
    def is_null(self) -> bool:
        if self.kind == "ordinal":
            margs = self.resolved_marginals()
            return all(np.allclose(m[0], margs[0][0]) for m in margs)
        if self.kind == "linear":
            return self.mu is None or len(set(map(float, self.mu))) == 1
        return not self.effect_lambda

    def generator(self):
        if self.kind == "ordinal":
            margs = self.resolved_marginals()
            return lambda rng: gen_ordinal(self.sizes, margs, self.target_corr, rng)
        if self.kind == "linear":
            mu = [0.0] * len(self.sizes) if self.mu is None else list(self.mu)
            return lambda rng: gen_linear(self.sizes, mu, self.error_dist, rng)
        table = load_source(self.source)
        return lambda rng: resample_pairs(table, self.sizes, self.effect_lambda, rng)


def load_source(path) -> np.ndarray:
    """Numeric CSV with a header; first column outcome, the rest covariates."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)


def wald_interval(alpha: float, n_sim: int):
    """95% Wald interval for the nominal level, in percent, rounded to 0.1."""
    half = 1.959963984540054 * math.sqrt(alpha * (1 - alpha) / n_sim)
    lo, hi = max(alpha - half, 0.0), min(alpha + half, 1.0)
    return round(100 * lo, 1), round(100 * hi, 1)


@dataclass
class MethodResult:
    method: str
    rejections: int
    n_valid: int
    rate: float  # percent
    se: float  # percent
    verdict: Optional[str]  # within / liberal / conservative; None for power runs
    mean_runtime: float  # seconds per test


@dataclass
class SimResult:
    scenario: dict
    wald: tuple
    results: dict  # method -> MethodResult
    n_errors: int

    def rates(self) -> dict:
        return {m: r.rate for m, r in self.results.items()}

    def counts(self) -> dict:
        return {m: r.rejections for m, r in self.results.items()}

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "wald": list(self.wald),
            "n_errors": self.n_errors,
            "results": {m: asdict(r) for m, r in self.results.items()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["scenario", "sizes", "method", "rejections", "n_valid", "rate", "se", "verdict", "mean_runtime"]
        writer = csv.DictWriter(buf, fieldnames=cols)
        writer.writeheader()
        for r in self.results.values():
            row = asdict(r)
            row.update(scenario=self.scenario.get("name", ""), sizes=":".join(map(str, self.scenario["sizes"])))
            writer.writerow(row)
        return buf.getvalue()

    def table(self) -> str:
        """One row per design: sample sizes followed by the rejection rate of each method."""
        methods = list(self.results)
        head = f"{'sizes':>14} | " + " ".join(f"{m.upper():>7}" for m in methods)
        cells = []
        for m in methods:
            r = self.results[m]
            mark = "*" if r.verdict in ("liberal", "conservative") else " "
            cells.append(f"{r.rate:6.2f}{mark}")
        row = f"{':'.join(map(str, self.scenario['sizes'])):>14} | " + " ".join(cells)
        note = f"Wald interval [{self.wald[0]}, {self.wald[1]}]; * = outside" if self.results and any(
            r.verdict for r in self.results.values()) else "power scenario (no Wald verdict)"
        return "\n".join([head, "-" * len(head), row, note])


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _boot_seed(seed, run):
    return int(np.random.SeedSequence(seed, spawn_key=(run, 1)).generate_state(2, np.uint64)[0] >> 1)


def run_methods(data: Dataset, methods, alpha, n_boot, boot_seed, weighting=WeightingMode.WEIGHTED):
    """Apply each method to one dataset; returns method -> (reject, seconds).

    A method that fails on this dataset maps to ``(None, seconds)``.
    """
    out = {}
    adjusted = None
    t0 = time.perf_counter()
    need_adjusted = any(m in (Method.CA.value, Method.FA2.value, Method.EB.value, Method.WILD.value) for m in methods)
    adj_error = None
    if need_adjusted:
        try:
            adjusted = analyze(data, weighting)
        except NancovaError as exc:
            adj_error = exc
    shared = time.perf_counter() - t0
    for m in methods:
        t0 = time.perf_counter()
        try:
            if m == Method.FA1.value:
                rep = f_from_analysis(analyze(data.drop_covariates(), weighting), alpha, method=Method.FA1)
            elif adjusted is None:
                raise adj_error
            elif m == Method.CA.value:
                rep = chi2_from_analysis(adjusted, alpha)
            elif m == Method.FA2.value:
                rep = f_from_analysis(adjusted, alpha)
            else:
                scheme = WeightScheme.EFRON if m == Method.EB.value else WeightScheme.WILD
                rep = bootstrap_from_analysis(adjusted, alpha, scheme, n_boot, boot_seed, workers=1)
            result = bool(rep.reject)
        except NancovaError:
            result = None
        elapsed = time.perf_counter() - t0 + (0.0 if m == Method.FA1.value else shared)
        out[m] = (result, elapsed)
    return out


def _run_block(scenario_dict, runs):
    sc = Scenario.from_dict(scenario_dict)
    gen = sc.generator()
    out = []
    for r in runs:
        try:
            data = gen(_rng(sc.seed, r, 0))
        except NancovaError:
            out.append(None)
            continue
        out.append(run_methods(data, sc.methods, sc.alpha, sc.n_boot, _boot_seed(sc.seed, r), sc.weighting))
    return out


def monte_carlo(scenario: Scenario, workers=None, progress=None) -> SimResult:
    """Rejection rates of each selected method over ``n_sim`` generated datasets."""
    workers = default_workers() if workers is None else workers
    spec = scenario.to_dict()
    runs = list(range(scenario.n_sim))
    if workers > 1:
        blocks = [runs[i :: workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, [spec] * len(blocks), blocks))
        per_run = [None] * len(runs)
        for block, part in zip(blocks, parts):
            for r, res in zip(block, part):
                per_run[r] = res
    else:
        per_run = []
        step = max(1, len(runs) // 20)
        for start in range(0, len(runs), step):
            per_run.extend(_run_block(spec, runs[start : start + step]))
            if progress:
                progress(len(per_run), len(runs))

    n_errors = sum(1 for res in per_run if res is None or any(v[0] is None for v in res.values()))
    if n_errors > MAX_ERROR_FRACTION * scenario.n_sim:
        raise NancovaError(
            f"{n_errors} of {scenario.n_sim} runs failed (limit {MAX_ERROR_FRACTION:.0%})"
        )
    wald = wald_interval(scenario.alpha, scenario.n_sim)
    null = scenario.is_null
    results = {}
    for m in scenario.methods:
        outcomes = [res[m] for res in per_run if res is not None and res[m][0] is not None]
        n_valid = len(outcomes)
        rej = sum(1 for o in outcomes if o[0])
        p = rej / n_valid if n_valid else float("nan")
        rate = 100 * p
        verdict = None
        if null:
            verdict = "liberal" if rate > wald[1] else "conservative" if rate < wald[0] else "within"
        runtime = float(np.mean([o[1] for o in outcomes])) if outcomes else float("nan")
        results[m] = MethodResult(
            method=m, rejections=rej, n_valid=n_valid, rate=rate,
            se=100 * math.sqrt(p * (1 - p) / n_valid) if n_valid else float("nan"),
            verdict=verdict, mean_runtime=runtime,
        )
    return SimResult(scenario=spec, wald=wald, results=results, n_errors=n_errors)


def bundled_scenarios() -> dict:
    here = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(here.glob("*.yaml"))}


def load_scenario(path_or_name) -> Scenario:
    import yaml

    path = Path(path_or_name)
    if not path.exists():
        bundled = bundled_scenarios()
        if str(path_or_name) not in bundled:
            raise ScenarioError(
                f"no scenario file {path_or_name!r}; bundled: {sorted(bundled)}"
            )
        path = bundled[str(path_or_name)]
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError("a scenario file must hold a mapping of fields")
    data.setdefault("name", path.stem)
    return Scenario.from_dict(data)
