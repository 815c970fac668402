"""Individual loading estimation, the heterogeneity-based regression factor
score predictor (HRFS), and the exact binomial test for loading
heterogeneity.

The pipeline: a leave-one-out loading sweep produces per-individual loading
deviations; a signed square-root delta plus a weighted acceptance rule turns
these into individual loading matrices; per-variable leave-one-out loading
SDs are compared against the same SDs from samples of a matched homogeneous
population, and the count of exceedances per factor feeds a right-tailed
exact binomial test.  Only when that test rejects homogeneity is the HRFS
preferred over the conventional regression predictor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._parallel import ordered_map
from .errors import (
    ConfigError,
    ConvergenceError,
    HetfacError,
    InputError,
    NumericalError,
)
from .factor_core import (
    MAX_COMMUNALITY,
    CorrelationMatrix,
    DataMatrix,
    FactorModel,
    LoadingMatrix,
    PafOptions,
    _frozen_array,
    _implied_from_arrays,
    _paf_core,
    _pearson,
    correlation_from_data,
    paf_fit,
)
from .rotation import _align_to_target
from .scoring import (
    BASIS_HRFS,
    KIND_HRFS,
    KIND_RFS,
    DeterminacyReport,
    ScoreMatrix,
    standardize,
)

HEYWOOD_RESET = 0.99
UNIQUENESS_FLOOR = 1e-4


@dataclass(frozen=True)
class SweepOptions:
    """Options for leave-one-out sweeps."""

    paf: PafOptions = PafOptions()
    max_failure_fraction: float = 0.5


@dataclass(frozen=True)
class LooLoadingSet:
    """Rotated leave-one-out loadings for every individual.

    ``loadings[k]`` is the solution with individual k deleted, rotated
    towards the total-sample loadings; rows of non-converged fits are NaN
    and excluded from the per-entry SDs.
    """

    loadings: np.ndarray
    unique_variances: np.ndarray
    converged: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "loadings", _frozen_array(self.loadings))
        object.__setattr__(self, "unique_variances", _frozen_array(self.unique_variances))
        object.__setattr__(self, "converged", _frozen_array(self.converged, dtype=bool))
        object.__setattr__(self, "sds", _frozen_array(self.sds))

    @property
    def n(self) -> int:
        return self.loadings.shape[0]


def _loo_correlation_stack(values):
    """All n leave-one-out correlation matrices, brute force per row.

    Returns (stack (n,p,p), valid (n,)); a matrix is invalid when a column
    loses all variance after the deletion.
    """
    n, p = values.shape
    stack = np.empty((n, p, p))
    valid = np.ones(n, dtype=bool)
    for k in range(n):
        try:
            stack[k] = _pearson(np.delete(values, k, axis=0))
        except InputError:
            stack[k] = np.eye(p)
            valid[k] = False
    return stack, valid


def loo_loading_sweep(
    data: DataMatrix,
    q: int,
    total_model: FactorModel,
    opts: SweepOptions = SweepOptions(),
) -> LooLoadingSet:
    """Fit the factor model n times, each time with one individual deleted.

    Every converged solution is rotated towards the total-sample loadings
    (orthogonal target rotation for q > 1, sign alignment for q = 1) so the
    per-entry standard deviations across individuals are comparable.

    Raises ConvergenceError when more than ``opts.max_failure_fraction`` of
    the leave-one-out fits fail (non-convergence or a singular reduced
    matrix).
    """
    if total_model.q != q:
        raise InputError("total model has a different number of factors")
    n, p = data.n, data.p
    stack, valid = _loo_correlation_stack(data.values)
    loadings_raw, psi2, fit_converged, _, _, ok = _paf_core(stack, q, opts.paf)
    converged = valid & ok & fit_converged

    failures = int(np.sum(~converged))
    if failures > opts.max_failure_fraction * n:
        raise ConvergenceError(
            f"{failures} of {n} leave-one-out fits failed "
            f"(threshold {opts.max_failure_fraction:.0%})"
        )
    if int(np.sum(converged)) < 2:
        raise ConvergenceError("fewer than two leave-one-out fits converged")

    target = total_model.loadings.values
    loadings = np.full((n, p, q), np.nan)
    unique = np.full((n, p), np.nan)
    for k in np.flatnonzero(converged):
        aligned, _ = _align_to_target(loadings_raw[k], target)
        loadings[k] = aligned
        unique[k] = psi2[k]

    sds = np.std(loadings[converged], axis=0, ddof=1)
    return LooLoadingSet(loadings=loadings, unique_variances=unique, converged=converged, sds=sds)


def _loading_delta_arrays(total, loo):
    a = total * total * np.sign(total)
    b = loo * loo * np.sign(loo)
    diff = a - b
    return np.sqrt(np.abs(diff)) * np.sign(diff)


def loading_delta(total: float, loo: float) -> float:
    """Signed square-root difference of signed squared loadings.

    Positive when the loading drops once the individual is deleted, i.e.
    the individual pulls the loading up.
    """
    if not (math.isfinite(total) and math.isfinite(loo)):
        raise InputError("loadings must be finite")
    return float(_loading_delta_arrays(np.float64(total), np.float64(loo)))


def _column_weights(lam):
    """Weight |loading| / column mean |loading|; a zero-mean column gets
    zero weights with a warning."""
    mean_abs = np.mean(np.abs(lam), axis=0)
    zero = mean_abs == 0.0
    if np.any(zero):
        warnings.warn(
            f"column(s) {np.flatnonzero(zero).tolist()} have zero mean absolute "
            "loading; their deltas get zero weight",
            stacklevel=3,
        )
    return np.where(zero, 0.0, np.abs(lam) / np.where(zero, 1.0, mean_abs))


def candidate_loading(total_model: FactorModel, i: int, j: int, delta: float) -> float:
    """The perturbed loading for one (variable, factor) cell: the total
    loading plus the weighted delta."""
    lam = total_model.loadings.values
    w = _column_weights(lam)[i, j]
    return float(lam[i, j] + w * delta)


@dataclass(frozen=True)
class IndividualLoadingSet:
    """Per-individual loading matrices with acceptance bookkeeping.

    Where ``accepted`` is False the entry equals the total-sample loading
    exactly.  ``heywood_resets`` counts entries reset to +-0.99;
    ``reversed_acceptances`` is a diagnostic: how many entries the opposite
    misfit inequality would have accepted instead.
    """

    loadings: np.ndarray
    accepted: np.ndarray
    loo_converged: np.ndarray
    heywood_resets: int = 0
    reversed_acceptances: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loadings", _frozen_array(self.loadings))
        object.__setattr__(self, "accepted", _frozen_array(self.accepted, dtype=bool))
        object.__setattr__(self, "loo_converged", _frozen_array(self.loo_converged, dtype=bool))

    @property
    def n(self) -> int:
        return self.loadings.shape[0]


def _acceptance_shift(lam, colssq, resid0, delta):
    """For every cell (i, j): misfit of the one-cell-perturbed model against
    the reduced-sample residual, minus that residual's own baseline.

    ``resid0`` is (model-implied - observed) with a zeroed diagonal.  The
    perturbation only touches row/column i of the implied matrix, so the
    change is rank-one in the sum of squares.
    """
    a = resid0 @ lam
    b = colssq[None, :] - lam * lam
    return 4.0 * delta * a + 2.0 * delta * delta * b


def accept_individual_loadings(
    data: DataMatrix,
    total_model: FactorModel,
    loo: LooLoadingSet,
    reset_cap: float = HEYWOOD_RESET,
    direction: str = "larger",
) -> IndividualLoadingSet:
    """Estimate individual loading matrices from the leave-one-out sweep.

    Each cell's weighted delta is accepted independently against the fixed
    total-sample baseline: the perturbed one-cell model must reproduce the
    off-diagonal of the reduced-sample correlation matrix *worse* than the
    total model reproduces the full-sample one (the candidate then carries
    individual-specific signal absent from the other individuals' data).
    Entries of individuals whose leave-one-out fit did not converge stay at
    the total-sample loadings.  Accepted magnitudes above ``reset_cap`` are
    reset to the cap, keeping the sign.

    ``direction`` is a diagnostic switch: 'larger' is the method's rule;
    'smaller' accepts when the perturbed model fits the reduced sample
    *better* instead, for comparing the two readings of the rule.
    """
    if direction not in ("larger", "smaller"):
        raise InputError("direction must be 'larger' or 'smaller'")
    lam = total_model.loadings.values
    p, q = lam.shape
    n = data.n
    if loo.n != n:
        raise InputError("sweep size does not match the data")
    s_full = correlation_from_data(data).values
    implied = lam @ lam.T
    colssq = np.sum(lam * lam, axis=0)
    base_full = _offdiag_ssq(implied - s_full)
    weights = _column_weights(lam)

    tilde = np.tile(lam, (n, 1, 1))
    accepted = np.zeros((n, p, q), dtype=bool)
    resets = 0
    reversed_count = 0
    for k in range(n):
        if not loo.converged[k]:
            continue
        s_loo = _pearson(np.delete(data.values, k, axis=0))
        resid0 = implied - s_loo
        np.fill_diagonal(resid0, 0.0)
        base_k = float(np.sum(resid0 * resid0))
        delta = weights * _loading_delta_arrays(lam, loo.loadings[k])
        shift = _acceptance_shift(lam, colssq, resid0, delta)
        lhs = base_k + shift
        # a zero delta leaves the loading untouched either way; it is not an
        # acceptance event
        if direction == "larger":
            accept = (lhs > base_full) & (delta != 0.0)
            reversed_count += int(np.sum((lhs < base_full) & (delta != 0.0)))
        else:
            accept = (lhs < base_full) & (delta != 0.0)
            reversed_count += int(np.sum((lhs > base_full) & (delta != 0.0)))
        accepted[k] = accept
        candidate = lam + delta
        tilde[k] = np.where(accept, candidate, lam)
        over = np.abs(tilde[k]) > reset_cap
        if np.any(over):
            resets += int(np.sum(over))
            tilde[k] = np.where(over, np.sign(tilde[k]) * reset_cap, tilde[k])
    return IndividualLoadingSet(
        loadings=tilde,
        accepted=accepted,
        loo_converged=loo.converged,
        heywood_resets=resets,
        reversed_acceptances=reversed_count,
    )


def _offdiag_ssq(matrix):
    off = matrix.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sum(off * off))


def _individual_sigma(lam_k):
    """Implied correlation of one individual's loading matrix, unique
    variances floored so the matrix stays positive definite after Heywood
    resets."""
    psi2 = np.clip(1.0 - np.sum(lam_k * lam_k, axis=1), UNIQUENESS_FLOOR, None)
    sigma = lam_k @ lam_k.T + np.diag(psi2)
    return sigma


def _hrfs_terms(lam_k, s):
    """Per-factor (numerator, denominator) of the individual determinacy and
    the weight matrix for the individual's score row."""
    sigma = _individual_sigma(lam_k)
    b = np.linalg.solve(sigma, lam_k)
    num = np.einsum("pq,pq->q", lam_k, b)
    den = np.einsum("pq,pq->q", b, s @ b)
    return num, den, b


def hrfs_scores(
    individual: IndividualLoadingSet,
    total_model: FactorModel,
    data: DataMatrix,
    sample_corr: CorrelationMatrix,
) -> ScoreMatrix:
    """Heterogeneity-based regression factor scores.

    Each individual's row uses that individual's loading matrix and implied
    correlation; rows are normalised to unit variance with respect to the
    observed correlation matrix.  Individuals with a degenerate individual
    model fall back to the conventional regression row and are flagged.
    """
    n = data.n
    if individual.n != n:
        raise InputError("individual loading set does not match the data")
    z = standardize(data)
    s = sample_corr.values
    lam_total = total_model.loadings.values
    rfs_b = np.linalg.solve(total_model.implied.values, lam_total)
    scores = np.empty((n, total_model.q))
    fallback = []
    for k in range(n):
        try:
            num, den, b = _hrfs_terms(individual.loadings[k], s)
        except np.linalg.LinAlgError:
            den = np.array([-1.0])
        if np.any(den <= 0.0) or not np.all(np.isfinite(den)):
            scores[k] = z[k] @ rfs_b
            fallback.append(k)
            continue
        scores[k] = (z[k] @ b) / np.sqrt(den)
    return ScoreMatrix(scores, kind=KIND_HRFS, fallback_rows=tuple(fallback))


def hrfs_determinacy(
    individual: IndividualLoadingSet, sample_corr: CorrelationMatrix
) -> DeterminacyReport:
    """Mean over individuals of the per-individual determinacy ratio.

    Collapses to the sample determinacy of the total model when every
    individual loading matrix equals the total-sample one.  Individuals with
    a degenerate term are excluded from the mean; a mean above one is
    clamped into [0, 1] and recorded.
    """
    s = sample_corr.values
    n = individual.n
    q = individual.loadings.shape[2]
    terms = np.full((n, q), np.nan)
    for k in range(n):
        try:
            num, den, _ = _hrfs_terms(individual.loadings[k], s)
        except np.linalg.LinAlgError:
            continue
        if np.any(den <= 0.0) or not np.all(np.isfinite(den)):
            continue
        terms[k] = num / np.sqrt(den)
    used = ~np.isnan(terms[:, 0])
    if not np.any(used):
        raise NumericalError("no individual produced a usable determinacy term")
    rho = terms[used].mean(axis=0)
    clamped = tuple(int(j) for j in np.flatnonzero(rho > 1.0))
    rho = np.clip(rho, 0.0, 1.0)
    return DeterminacyReport(rho, basis=BASIS_HRFS, clamped=clamped)


@dataclass(frozen=True)
class NullReference:
    """Mean leave-one-out loading SDs from a matched homogeneous population.

    The population loadings are the per-entry means of the empirical
    leave-one-out loadings; unique variances complete unit diagonals.
    Variables whose implied communality exceeded the cap were rescaled and
    are listed in ``rescaled_variables``.
    """

    mean_sds: np.ndarray
    population_loadings: np.ndarray
    n_draws: int
    draws_used: int
    rescaled_variables: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mean_sds", _frozen_array(self.mean_sds))
        object.__setattr__(self, "population_loadings", _frozen_array(self.population_loadings))
        object.__setattr__(self, "rescaled_variables", tuple(int(i) for i in self.rescaled_variables))


def _null_draw_worker(args):
    """One null-reference draw: simulate, fit, align, sweep.  Returns the
    per-entry loading SDs or None when the draw failed."""
    lam0, psi0, n, seed_seq, paf_opts, max_failure_fraction = args
    rng = np.random.default_rng(seed_seq)
    p, q = lam0.shape
    xi = rng.standard_normal((n, q))
    eps = rng.standard_normal((n, p))
    x = xi @ lam0.T + eps * psi0
    try:
        data = DataMatrix.from_array(x)
        corr = correlation_from_data(data)
        fit = _fit_aligned(corr, lam0, paf_opts, n_used=n)
        if fit is None:
            return None
        sweep = loo_loading_sweep(
            data, q, fit, SweepOptions(paf=paf_opts, max_failure_fraction=max_failure_fraction)
        )
    except (ConvergenceError, InputError, NumericalError):
        return None
    return sweep.sds


def _fit_aligned(corr, target, paf_opts, n_used=None):
    """Fit PAF and rotate the solution towards a target pattern; None when
    the fit fails or does not converge."""
    try:
        model = paf_fit(corr, target.shape[1], paf_opts, n_used=n_used)
    except HetfacError:
        return None
    if not model.converged:
        return None
    aligned, _ = _align_to_target(model.loadings.values, target)
    return FactorModel(
        loadings=LoadingMatrix(aligned, model.loadings.heywood_flags),
        unique_variances=model.unique_variances,
        implied=model.implied,
        n_used=model.n_used,
        converged=model.converged,
        iterations=model.iterations,
    )


def null_reference_sd(
    total_model: FactorModel,
    loo: LooLoadingSet,
    n: int,
    n_d: int = 50,
    seed=0,
    paf_opts: PafOptions = PafOptions(),
    max_failure_fraction: float = 0.5,
    workers: int = 1,
) -> NullReference:
    """Calibrate leave-one-out loading SDs on a loading-homogeneous twin.

    Builds a population whose (constant) loadings equal the per-entry means
    of the empirical leave-one-out loadings, draws ``n_d`` samples of size
    ``n``, runs the full leave-one-out sweep on each, and returns the mean
    over draws of the per-entry SDs.  Fixed ``seed`` gives identical results
    for any worker count: each draw has its own derived random stream and
    draws are averaged in order.
    """
    if n_d < 1:
        raise InputError("n_d must be at least 1")
    converged = loo.converged
    lam0 = loo.loadings[converged].mean(axis=0)
    comm = np.sum(lam0 * lam0, axis=1)
    rescaled = np.flatnonzero(comm > MAX_COMMUNALITY)
    if rescaled.size:
        warnings.warn(
            f"null population communality above {MAX_COMMUNALITY} for variable(s) "
            f"{rescaled.tolist()}; rescaled to the cap",
            stacklevel=2,
        )
        scale = np.sqrt(MAX_COMMUNALITY / comm[rescaled])
        lam0[rescaled] *= scale[:, None]
        comm = np.sum(lam0 * lam0, axis=1)
    psi0 = np.sqrt(1.0 - comm)

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n_d)
    tasks = [
        (lam0, psi0, n, children[d], paf_opts, max_failure_fraction)
        for d in range(n_d)
    ]
    results = ordered_map(_null_draw_worker, tasks, workers)
    used = [sds for sds in results if sds is not None]
    if not used:
        raise ConvergenceError(f"all {n_d} null-reference draws failed")
    mean_sds = np.mean(np.stack(used), axis=0)
    return NullReference(
        mean_sds=mean_sds,
        population_loadings=lam0,
        n_draws=n_d,
        draws_used=len(used),
        rescaled_variables=tuple(rescaled.tolist()),
    )


def _binomial_right_tail(trials: int, successes: int) -> Fraction:
    """Exact P(X >= successes) for X ~ Binomial(trials, 1/2)."""
    if successes <= 0:
        return Fraction(1)
    total = sum(math.comb(trials, k) for k in range(successes, trials + 1))
    return Fraction(total, 2**trials)


def binomial_cutoff(p_vars: int, alpha_max: float):
    """Smallest critical count whose exact right tail is at most alpha_max.

    Returns (critical count, exact tail probability).  Raises ConfigError
    when even requiring all ``p_vars`` successes cannot reach the level.
    """
    if p_vars < 2:
        raise InputError("the binomial test needs at least 2 variables")
    if not 0.0 < alpha_max < 1.0:
        raise InputError("alpha_max must be in (0, 1)")
    bound = Fraction(alpha_max)
    for crit in range(p_vars + 1):
        tail = _binomial_right_tail(p_vars, crit)
        if tail <= bound:
            return crit, float(tail)
    minimum = _binomial_right_tail(p_vars, p_vars)
    raise ConfigError(
        f"cannot test at alpha <= {alpha_max:g} with p = {p_vars}: the minimum "
        f"attainable exact level is {float(minimum):.4g}"
    )


@dataclass(frozen=True)
class FactorDecision:
    """Heterogeneity verdict for one factor."""

    factor: int
    variables: tuple
    g_count: int
    g_crit: int
    alpha_exact: float
    heterogeneous: bool

    def to_dict(self) -> dict:
        return {
            "factor": self.factor,
            "variables": list(self.variables),
            "g_count": self.g_count,
            "g_crit": self.g_crit,
            "alpha_exact": self.alpha_exact,
            "decision": "heterogeneous" if self.heterogeneous else "homogeneous",
        }


@dataclass(frozen=True)
class HeterogeneityReport:
    """Per-entry indicators and per-factor binomial test decisions."""

    empirical_sds: np.ndarray
    null_sds: np.ndarray
    indicators: np.ndarray
    factors: tuple
    n_d: int

    def __post_init__(self):
        object.__setattr__(self, "empirical_sds", _frozen_array(self.empirical_sds))
        object.__setattr__(self, "null_sds", _frozen_array(self.null_sds))
        object.__setattr__(self, "indicators", _frozen_array(self.indicators, dtype=bool))
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def decisions(self) -> tuple:
        return tuple(f.heterogeneous for f in self.factors)

    def to_dict(self) -> dict:
        return {
            "n_d": self.n_d,
            "empirical_sds": self.empirical_sds.tolist(),
            "null_mean_sds": self.null_sds.tolist(),
            "indicators": self.indicators.astype(int).tolist(),
            "factors": [f.to_dict() for f in self.factors],
        }


def salient_assignment(loadings) -> tuple:
    """Assign each variable to the factor carrying its largest absolute
    loading.  Raises ConfigError when a factor ends up empty (supply an
    explicit assignment instead)."""
    lam = np.asarray(loadings, dtype=float)
    owner = np.argmax(np.abs(lam), axis=1)
    groups = tuple(tuple(np.flatnonzero(owner == j).tolist()) for j in range(lam.shape[1]))
    empty = [j for j, g in enumerate(groups) if not g]
    if empty:
        raise ConfigError(
            f"factor(s) {empty} have no assigned variables under the largest-"
            "loading rule; provide an explicit assignment map"
        )
    return groups


def full_assignment(p: int, q: int) -> tuple:
    """Every variable counts for every factor (the simulation-study policy)."""
    return tuple(tuple(range(p)) for _ in range(q))


def heterogeneity_test(
    loo: LooLoadingSet,
    null: NullReference,
    assignment,
    alpha_max: float = 0.25,
    cutoffs=None,
) -> HeterogeneityReport:
    """Exact right-tailed binomial test of loading homogeneity per factor.

    A cell scores one when its empirical leave-one-out loading SD strictly
    exceeds the null mean SD (ties score zero).  Per factor, the scores of
    its assigned variables are summed and compared with the critical count;
    ``cutoffs`` may supply explicit (g_crit, alpha_exact) pairs (one pair, or
    one per factor), otherwise the exact binomial cutoff at ``alpha_max`` is
    computed from the number of assigned variables.
    """
    emp = loo.sds
    ref = null.mean_sds
    if emp.shape != ref.shape:
        raise InputError("empirical and null SD matrices differ in shape")
    p, q = emp.shape
    indicators = ref < emp
    assignment = tuple(tuple(int(i) for i in group) for group in assignment)
    if len(assignment) != q:
        raise InputError(f"assignment has {len(assignment)} groups for q = {q} factors")
    for group in assignment:
        if any(not 0 <= i < p for i in group):
            raise InputError("assignment contains an out-of-range variable index")
    if cutoffs is not None and isinstance(cutoffs, tuple) and len(cutoffs) == 2 \
            and isinstance(cutoffs[0], int):
        cutoffs = [cutoffs] * q
    decisions = []
    for j in range(q):
        group = assignment[j]
        if cutoffs is None:
            crit, alpha = binomial_cutoff(len(group), alpha_max)
        else:
            crit, alpha = cutoffs[j]
        g = int(np.sum(indicators[list(group), j]))
        decisions.append(
            FactorDecision(
                factor=j,
                variables=group,
                g_count=g,
                g_crit=int(crit),
                alpha_exact=float(alpha),
                heterogeneous=g >= crit,
            )
        )
    return HeterogeneityReport(
        empirical_sds=emp,
        null_sds=ref,
        indicators=indicators,
        factors=tuple(decisions),
        n_d=null.n_draws,
    )


@dataclass(frozen=True)
class ConditionalScores:
    """Outcome of the two-step procedure: per factor, either the HRFS or the
    conventional RFS column, with the matching determinacy."""

    values: np.ndarray
    chosen: tuple
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "chosen", tuple(self.chosen))
        object.__setattr__(self, "rho", _frozen_array(self.rho))


def conditional_predictor(
    report: HeterogeneityReport,
    rfs: ScoreMatrix,
    hrfs: ScoreMatrix,
    rho_r,
    rho_rk,
) -> ConditionalScores:
    """Pick the HRFS column and determinacy for factors the test judged
    heterogeneous, the conventional column otherwise."""
    rho_r = np.asarray(rho_r, dtype=float)
    rho_rk = np.asarray(rho_rk, dtype=float)
    q = len(report.factors)
    if rfs.q != q or hrfs.q != q or rho_r.shape != (q,) or rho_rk.shape != (q,):
        raise InputError("inputs disagree on the number of factors")
    if rfs.n != hrfs.n:
        raise InputError("score matrices disagree on the number of individuals")
    values = np.empty((rfs.n, q))
    chosen = []
    rho = np.empty(q)
    for j, decision in enumerate(report.factors):
        if decision.heterogeneous:
            values[:, j] = hrfs.values[:, j]
            rho[j] = rho_rk[j]
            chosen.append(KIND_HRFS)
        else:
            values[:, j] = rfs.values[:, j]
            rho[j] = rho_r[j]
            chosen.append(KIND_RFS)
    return ConditionalScores(values=values, chosen=tuple(chosen), rho=rho)
