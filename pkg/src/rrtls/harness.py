"""Monte Carlo engine and statistical verifiers.

``run`` draws trials from per-trial substreams, evaluates every rank arm of
the requested estimator family on the same realizations (paired-seed
fairness), and aggregates squared errors in a numerically stable streaming
fashion.  ``verify_chi_square`` turns the normalized-squared-error moment
claims into pass/fail reports, ``compare_selection_rules`` evaluates the
rank selection of the reduced TLS hypothesis across a grid of parameter
norms on identical realizations, and ``search_norm_dependence_witness`` finds a
synthetic score vector whose selected rank provably changes with the
parameter norm.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, RrtlsError
from .ls import select_rank_ls, tail_sums
from .model import MeasurementModel, sample_ls, sample_tls, _aux_rng
from .svdtools import order_by_scores, svd
from .tls import (
    augmented_scores,
    mse_theoretical_tls_full,
    q_objective,
    q_objective_bias_recipe,
    tls_solve,
)

FAMILIES = ("ls", "rrls", "tls", "rrtls")
TLS_FAMILIES = ("tls", "rrtls")
CHUNK_SIZE = 8192


# ---------------------------------------------------------------------------
# Streaming aggregation
# ---------------------------------------------------------------------------

class VecStats:
    """Streaming central moments up to order four (Welford/Pebay updates),
    elementwise over arrays.  Supports associative merging of partial
    aggregates for chunked execution."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)
        self.m3 = np.zeros(shape)
        self.m4 = np.zeros(shape)

    def add(self, value) -> None:
        n1 = self.n
        self.n += 1
        n = self.n
        delta = value - self.mean
        dn = delta / n
        dn2 = dn * dn
        term1 = delta * dn * n1
        self.mean = self.mean + dn
        self.m4 = (
            self.m4
            + term1 * dn2 * (n * n - 3 * n + 3)
            + 6.0 * dn2 * self.m2
            - 4.0 * dn * self.m3
        )
        self.m3 = self.m3 + term1 * dn * (n - 2) - 3.0 * dn * self.m2
        self.m2 = self.m2 + term1

    def merge(self, other: "VecStats") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.n = other.n
            self.mean, self.m2 = other.mean, other.m2
            self.m3, self.m4 = other.m3, other.m4
            return
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d2 = delta * delta
        m2 = self.m2 + other.m2 + d2 * (na * nb / n)
        m3 = (
            self.m3
            + other.m3
            + delta * d2 * (na * nb * (na - nb) / (n * n))
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n
        )
        m4 = (
            self.m4
            + other.m4
            + d2 * d2 * (na * nb * (na * na - na * nb + nb * nb) / (n**3))
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n
        )
        self.mean = self.mean + delta * (nb / n)
        self.m2, self.m3, self.m4 = m2, m3, m4
        self.n = n

    def variance(self):
        if self.n < 2:
            return np.full_like(self.m2, np.nan)
        return self.m2 / (self.n - 1)

    def se(self):
        if self.n < 2:
            return np.full_like(self.m2, np.nan)
        return np.sqrt(self.variance() / self.n)

    def variance_se(self):
        """Asymptotic standard error of the sample variance."""
        if self.n < 2:
            return np.full_like(self.m2, np.nan)
        m4c = self.m4 / self.n
        m2c = self.m2 / self.n
        return np.sqrt(np.maximum(m4c - m2c * m2c, 0.0) / self.n)


# ---------------------------------------------------------------------------
# Specs and results
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """What to simulate: model, estimator family, trial budget and seed.

    ``rank_policy`` is ``"auto"`` (per-trial selected rank) or a fixed rank;
    ``tls_mode``/``bound`` choose how the reduced-TLS selection objective
    obtains the squared parameter norm (the oracle value from the model, or
    a caller-supplied upper bound).
    """

    model: MeasurementModel
    family: str
    trials: int
    seed: int
    rank_policy: object = "auto"
    tls_mode: str = "oracle"
    bound: Optional[float] = None
    mse_rtol: float = 0.03
    mean_rtol: float = 0.01
    var_rtol: float = 0.05
    keep_samples: bool = False
    keep_errors: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.rank_policy != "auto":
            r = int(self.rank_policy)
            if not 1 <= r <= self.model.p:
                raise ValueError(f"fixed rank {r} out of range 1..{self.model.p}")
            self.rank_policy = r
        if self.tls_mode not in ("oracle", "bound"):
            raise ValueError(f"tls_mode must be 'oracle' or 'bound', got {self.tls_mode!r}")
        if self.tls_mode == "bound":
            if self.bound is None or self.bound < 0:
                raise ValueError("bound mode requires a nonnegative bound")


@dataclass
class MomentReport:
    """Empirical mean/variance of a normalized squared error against its
    chi-square reference moments, with standard errors and pass flags."""

    n: int
    dof: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    mean_rtol: float
    var_rtol: float
    mean_ok: bool
    var_ok: bool


@dataclass
class ExperimentResult:
    """Aggregates of one Monte Carlo run; all flags are recomputable from
    the stored aggregates."""

    family: str
    trials: int
    seed: int
    completed: int
    failures: Dict[str, int]
    ranks: np.ndarray
    mse_emp: np.ndarray
    mse_se: np.ndarray
    mse_theory: np.ndarray
    sel_freq: np.ndarray
    sel_freq_alt: Optional[np.ndarray]
    auto_mse: float
    auto_se: float
    risk_estimate_mean: Optional[np.ndarray]
    risk_estimate_se: Optional[np.ndarray]
    tls_full_formula_mean: Optional[float]
    moments: Optional[MomentReport]
    mse_rtol: float
    row_pass: np.ndarray
    raw_sq_err: Optional[np.ndarray] = None
    raw_errors: Optional[np.ndarray] = None


@dataclass
class SelectionComparison:
    """Selected-rank distributions across a grid of parameter norms,
    evaluated on identical realizations (paired by seed)."""

    grid: np.ndarray
    q_star_freq: np.ndarray
    q_star_freq_alt: np.ndarray
    theta_dependent: bool
    witness: Optional[Dict[str, float]]
    completed: int
    failures: Dict[str, int]


@dataclass
class NormDependenceWitness:
    """A synthetic instance where the selected rank changes with the
    parameter norm: scores plus the witnessing grid pair."""

    p: int
    sigma2: float
    scores: np.ndarray
    t1: float
    t2: float
    q1: int
    q2: int
    tries: int


# ---------------------------------------------------------------------------
# Per-trial evaluation
# ---------------------------------------------------------------------------

class _Accumulator:
    def __init__(self, p: int, keep_samples: bool, keep_errors: bool):
        self.sq = VecStats((p,))
        self.auto = VecStats(())
        self.norm = VecStats(())
        self.theory = VecStats((p,))
        self.risk = VecStats((p,))
        self.formula_full = VecStats(())
        self.sel_counts = np.zeros(p, dtype=np.int64)
        self.alt_counts = np.zeros(p, dtype=np.int64)
        self.failures: Dict[str, int] = {}
        self.samples = [] if keep_samples else None
        self.errors = [] if keep_errors else None

    def add_failure(self, code: str) -> None:
        self.failures[code] = self.failures.get(code, 0) + 1

    def merge(self, other: "_Accumulator") -> None:
        self.sq.merge(other.sq)
        self.auto.merge(other.auto)
        self.norm.merge(other.norm)
        self.theory.merge(other.theory)
        self.risk.merge(other.risk)
        self.formula_full.merge(other.formula_full)
        self.sel_counts += other.sel_counts
        self.alt_counts += other.alt_counts
        for code, count in other.failures.items():
            self.failures[code] = self.failures.get(code, 0) + count
        if self.samples is not None:
            self.samples.extend(other.samples)
        if self.errors is not None:
            self.errors.extend(other.errors)


def _rank_sq_errors(columns: np.ndarray, c: np.ndarray, d: np.ndarray,
                    x: np.ndarray) -> np.ndarray:
    # |x - sum_{j<=r} c_j u_j|^2 for every r, as a sum of squares: kept
    # coefficient mismatches + discarded signal energy + out-of-span
    # residual.  Nonnegative by construction and exactly zero for exact
    # reconstructions (no cancellation of large terms).
    rho = x - columns @ d
    diff = c - d
    return np.cumsum(diff * diff) + tail_sums(d * d) + float(rho @ rho)


def _ls_trial(spec: ExperimentSpec, U: np.ndarray, trial: int,
              acc: _Accumulator) -> None:
    model = spec.model
    real = sample_ls(model, spec.seed, trial)
    basis = order_by_scores(U, real.y)
    c = basis.columns.T @ real.y
    d = basis.columns.T @ model.x
    sq = _rank_sq_errors(basis.columns, c, d, model.x)
    selection = select_rank_ls(basis, model.sigma2, model.p)
    acc.sq.add(sq)
    acc.auto.add(sq[selection.r_star - 1])
    acc.risk.add(selection.objective)
    acc.sel_counts[selection.r_star - 1] += 1
    if model.sigma2 > 0:
        acc.norm.add(sq[-1] / model.sigma2)
    if acc.samples is not None:
        acc.samples.append(sq)
    if acc.errors is not None:
        acc.errors.append(basis.columns @ c - model.x)


def _tls_trial(spec: ExperimentSpec, trial: int, acc: _Accumulator) -> None:
    model = spec.model
    real = sample_tls(model, spec.seed, trial)
    try:
        est = tls_solve(real.H_tilde, real.y)
    except RrtlsError as err:
        acc.add_failure(err.code)
        return
    y = real.y
    basis = order_by_scores(est.retained_columns, y)
    u_s = est.discarded_column
    c = basis.columns.T @ y
    d = basis.columns.T @ model.x
    sq = _rank_sq_errors(basis.columns, c, d, model.x)
    scores_aug = augmented_scores(basis, u_s, y)
    t_val = model.theta_norm2 if spec.tls_mode == "oracle" else float(spec.bound)
    qobj = q_objective(scores_aug, model.sigma2, model.p, t_val, spec.tls_mode)
    alt_values = q_objective_bias_recipe(scores_aug, model.sigma2, model.p, t_val)
    d_aug = np.append(d, float(u_s @ model.x))
    theory = tail_sums(d_aug * d_aug)[: model.p] + np.arange(1, model.p + 1) * model.sigma2
    acc.sq.add(sq)
    acc.auto.add(sq[qobj.q_star - 1])
    acc.theory.add(theory)
    acc.formula_full.add(mse_theoretical_tls_full(model, est))
    acc.sel_counts[qobj.q_star - 1] += 1
    acc.alt_counts[int(np.argmin(alt_values))] += 1
    if acc.samples is not None:
        acc.samples.append(sq)
    if acc.errors is not None:
        acc.errors.append(basis.columns @ c - model.x)


def _run_range(spec: ExperimentSpec, U: Optional[np.ndarray],
               lo: int, hi: int) -> _Accumulator:
    tls = spec.family in TLS_FAMILIES
    acc = _Accumulator(spec.model.p, spec.keep_samples, spec.keep_errors)
    for t in range(lo, hi):
        if tls:
            _tls_trial(spec, t, acc)
        else:
            _ls_trial(spec, U, t, acc)
    return acc


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def run(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Execute the Monte Carlo experiment.

    ``threads=1`` is the bit-exact sequential mode (trial-order
    aggregation).  With more threads, trials are split into fixed-size
    chunks whose partial aggregates are merged in chunk order, so results
    are deterministic for any thread count but may differ from sequential
    mode in the last floating-point bits.

    Per-trial estimator failures (e.g. TLS nonuniqueness) are counted per
    error code and excluded from the aggregates, never imputed.
    """
    model = spec.model
    tls = spec.family in TLS_FAMILIES
    U = None
    mse_theory = None
    if not tls:
        U = svd(model.H).U
        oracle_basis = order_by_scores(U, model.x)
        ranks = np.arange(1, model.p + 1)
        mse_theory = tail_sums(oracle_basis.scores) + ranks * model.sigma2

    if threads <= 1 or spec.trials <= CHUNK_SIZE:
        acc = _run_range(spec, U, 0, spec.trials)
    else:
        bounds = list(range(0, spec.trials, CHUNK_SIZE)) + [spec.trials]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda se: _run_range(spec, U, se[0], se[1]),
                    zip(bounds[:-1], bounds[1:]),
                )
            )
        acc = parts[0]
        for part in parts[1:]:
            acc.merge(part)

    completed = acc.sq.n
    p = model.p
    if tls:
        mse_theory = acc.theory.mean if completed else np.full(p, np.nan)
    mse_emp = acc.sq.mean if completed else np.full(p, np.nan)
    mse_se = acc.sq.se()
    sel_freq = acc.sel_counts / completed if completed else np.zeros(p)
    diff = np.abs(mse_emp - mse_theory)
    se_term = np.where(np.isfinite(mse_se), 3.0 * mse_se, 0.0)
    row_pass = diff <= np.maximum(spec.mse_rtol * np.abs(mse_theory), se_term)
    moments = None
    if not tls and model.sigma2 > 0 and completed >= 2:
        var = float(acc.norm.variance())
        m = float(acc.norm.mean)
        moments = MomentReport(
            n=completed,
            dof=p,
            mean=m,
            mean_se=float(acc.norm.se()),
            variance=var,
            variance_se=float(acc.norm.variance_se()),
            mean_rtol=spec.mean_rtol,
            var_rtol=spec.var_rtol,
            mean_ok=abs(m - p) <= spec.mean_rtol * p,
            var_ok=abs(var - 2 * p) <= spec.var_rtol * 2 * p,
        )
    return ExperimentResult(
        family=spec.family,
        trials=spec.trials,
        seed=spec.seed,
        completed=completed,
        failures=dict(sorted(acc.failures.items())),
        ranks=np.arange(1, p + 1),
        mse_emp=mse_emp,
        mse_se=mse_se,
        mse_theory=np.asarray(mse_theory, dtype=float),
        sel_freq=sel_freq,
        sel_freq_alt=(acc.alt_counts / completed if tls and completed else None),
        auto_mse=float(acc.auto.mean) if completed else float("nan"),
        auto_se=float(acc.auto.se()) if completed else float("nan"),
        risk_estimate_mean=(np.asarray(acc.risk.mean) if not tls and completed else None),
        risk_estimate_se=(np.asarray(acc.risk.se()) if not tls and completed else None),
        tls_full_formula_mean=(float(acc.formula_full.mean) if tls and completed else None),
        moments=moments,
        mse_rtol=spec.mse_rtol,
        row_pass=row_pass,
        raw_sq_err=(np.array(acc.samples) if acc.samples is not None else None),
        raw_errors=(np.array(acc.errors) if acc.errors is not None else None),
    )


def verify_chi_square(
    errors,
    sigma2: float,
    dof: int,
    mean_rtol: float = 0.01,
    var_rtol: float = 0.05,
    min_samples: int = 10_000,
) -> MomentReport:
    """Check the chi-square moments of normalized squared errors.

    ``errors`` is a sequence of error vectors; the statistic is
    ``|e|^2 / sigma2`` per vector, whose reference moments are ``dof`` and
    ``2 * dof``.  Mean must match within ``mean_rtol`` (relative) and
    variance within ``var_rtol``.
    """
    E = np.asarray(errors, dtype=float)
    if E.ndim != 2:
        raise ValueError(f"expected a sequence of vectors, got shape {E.shape}")
    n = E.shape[0]
    if n < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} samples, got {n}")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive for a normalized error")
    s = np.einsum("ij,ij->i", E, E) / sigma2
    mean = float(np.mean(s))
    variance = float(np.var(s, ddof=1))
    centered = s - mean
    m4 = float(np.mean(centered**4))
    return MomentReport(
        n=n,
        dof=dof,
        mean=mean,
        mean_se=float(np.sqrt(variance / n)),
        variance=variance,
        variance_se=float(np.sqrt(max(m4 - variance**2, 0.0) / n)),
        mean_rtol=mean_rtol,
        var_rtol=var_rtol,
        mean_ok=abs(mean - dof) <= mean_rtol * dof,
        var_ok=abs(variance - 2 * dof) <= var_rtol * 2 * dof,
    )


def compare_selection_rules(spec: ExperimentSpec, grid: Sequence[float]) -> SelectionComparison:
    """Evaluate the reduced-TLS rank selection across a grid of parameter
    norms on identical realizations.

    Flags theta dependence when any realization selects different ranks at
    two grid points; the sigma2 = 0 case is provably grid-invariant (the
    objective is then a positive multiple of a norm-free tail sum).
    """
    if spec.family != "rrtls":
        raise ValueError(f"selection-rule comparison requires family 'rrtls', got {spec.family!r}")
    grid_arr = np.asarray(list(grid), dtype=float).reshape(-1)
    if grid_arr.shape[0] == 0:
        raise ValueError("grid must be non-empty")
    if np.any(grid_arr < 0):
        raise ValueError("grid values are squared norms and must be >= 0")
    model = spec.model
    p = model.p
    counts = np.zeros((grid_arr.shape[0], p), dtype=np.int64)
    counts_alt = np.zeros_like(counts)
    failures: Dict[str, int] = {}
    witness = None
    completed = 0
    for t in range(spec.trials):
        real = sample_tls(model, spec.seed, t)
        try:
            est = tls_solve(real.H_tilde, real.y)
        except RrtlsError as err:
            failures[err.code] = failures.get(err.code, 0) + 1
            continue
        completed += 1
        basis = order_by_scores(est.retained_columns, real.y)
        scores_aug = augmented_scores(basis, est.discarded_column, real.y)
        q_stars = np.empty(grid_arr.shape[0], dtype=int)
        for i, t_val in enumerate(grid_arr):
            q_stars[i] = q_objective(scores_aug, model.sigma2, p, t_val, "oracle").q_star
            counts[i, q_stars[i] - 1] += 1
            alt = q_objective_bias_recipe(scores_aug, model.sigma2, p, t_val)
            counts_alt[i, int(np.argmin(alt))] += 1
        if witness is None:
            moved = np.nonzero(q_stars != q_stars[0])[0]
            if moved.size:
                i = int(moved[0])
                witness = {
                    "trial": t,
                    "t1": float(grid_arr[0]),
                    "t2": float(grid_arr[i]),
                    "q1": int(q_stars[0]),
                    "q2": int(q_stars[i]),
                }
    freq = counts / completed if completed else np.zeros_like(counts, dtype=float)
    freq_alt = counts_alt / completed if completed else np.zeros_like(counts, dtype=float)
    return SelectionComparison(
        grid=grid_arr,
        q_star_freq=freq,
        q_star_freq_alt=freq_alt,
        theta_dependent=witness is not None,
        witness=witness,
        completed=completed,
        failures=dict(sorted(failures.items())),
    )


def search_norm_dependence_witness(
    p: int = 4,
    sigma2: float = 0.25,
    t_grid: Sequence[float] = (0.0, 1.0, 3.0, 10.0),
    seed: int = 0,
    max_tries: int = 10_000,
) -> NormDependenceWitness:
    """Search synthetic descending score vectors for one whose selected
    rank differs between two grid values of the parameter norm.

    Deterministic given ``seed``; raises ``RuntimeError`` if no witness
    appears within ``max_tries`` draws (with the default ranges a witness
    is found almost immediately).
    """
    from .tls import norm_dependence_certificate

    rng = _aux_rng(seed, 4)
    for attempt in range(1, max_tries + 1):
        scores = sigma2 * np.sort(rng.uniform(0.0, 12.0, size=p + 1))[::-1]
        cert = norm_dependence_certificate(t_grid, scores, sigma2, p)
        if not cert.is_constant:
            t1, t2, q1, q2 = cert.witness
            return NormDependenceWitness(
                p=p, sigma2=sigma2, scores=scores,
                t1=t1, t2=t2, q1=q1, q2=q2, tries=attempt,
            )
    raise RuntimeError(f"no norm-dependent instance found in {max_tries} tries")
