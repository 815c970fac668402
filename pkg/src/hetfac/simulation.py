"""Populations with heterogeneous individual loadings and the Monte Carlo
study harness.

Populations have a simple structure: each variable is salient on exactly one
factor, cross-loadings are zero, and every individual's variables have unit
variance (unique variances complete the individual communalities).  Salient
loadings are drawn per individual and affinely standardised so each cell of
the condition grid has *exactly* the requested mean and SD of loadings; the
per-individual cap keeps communalities below one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .errors import ConvergenceError, HetfacError, InputError, NumericalError
from .factor_core import (
    DataMatrix,
    FactorModel,
    LoadingMatrix,
    PafOptions,
    _frozen_array,
    correlation_from_data,
    paf_fit,
)
from .heterogeneity import (
    SweepOptions,
    _binomial_right_tail,
    accept_individual_loadings,
    full_assignment,
    heterogeneity_test,
    hrfs_determinacy,
    hrfs_scores,
    loo_loading_sweep,
    null_reference_sd,
    salient_assignment,
)
from .rotation import (
    VarimaxOptions,
    _align_sign_arrays,
    _align_to_target,
    rotate_model,
    varimax,
)
from .scoring import ScoreMatrix, determinacy_sample, rfs_scores

ESTIMATORS = ("rho_r", "rho_tilde_rk", "rho_xi_r", "rho_tilde_xi_rk")

# critical counts used by the study policy (a roughly constant ratio of
# critical count to p); other p fall back to round(0.83 * p)
STUDY_G_CRIT = {6: 5, 12: 9, 18: 15, 36: 30}


def study_g_crit(p: int) -> int:
    return STUDY_G_CRIT.get(p, max(1, round(0.83 * p)))


@dataclass(frozen=True)
class PopulationSpec:
    """One cell of the condition grid.

    ``rescale_scope`` controls what happens when a drawn salient loading
    exceeds ``cap`` in magnitude: 'individual' divides that individual's
    loadings on the factor by a constant (the default), 'sample' divides the
    whole factor's loadings across all individuals.
    """

    q: int
    p_per_factor: int
    mu_loading: float
    sigma_loading: float
    n: int
    cap: float = 0.98
    rescale_scope: str = "individual"

    def __post_init__(self):
        if self.q < 1 or self.p_per_factor < 1:
            raise InputError("q and p_per_factor must be positive")
        if not 0.0 < self.mu_loading < 1.0:
            raise InputError("mu_loading must be in (0, 1)")
        if self.sigma_loading < 0.0:
            raise InputError("sigma_loading must be nonnegative")
        if not 0.0 < self.cap <= 0.99:
            raise InputError("cap must be in (0, 0.99]")
        if self.n < self.p + 2:
            raise InputError(f"n must be at least p + 2 = {self.p + 2}")
        if self.rescale_scope not in ("individual", "sample"):
            raise InputError("rescale_scope must be 'individual' or 'sample'")

    @property
    def p(self) -> int:
        return self.q * self.p_per_factor

    @property
    def variable_factor(self) -> np.ndarray:
        """Factor owning each variable: blocks of ``p_per_factor``."""
        return np.repeat(np.arange(self.q), self.p_per_factor)

    def target_pattern(self) -> np.ndarray:
        """Salient pattern matrix: the mean loading at salient positions,
        zero elsewhere."""
        pattern = np.zeros((self.p, self.q))
        pattern[np.arange(self.p), self.variable_factor] = self.mu_loading
        return pattern

    def condition_key(self) -> dict:
        return {
            "q": self.q,
            "p": self.p,
            "mu": self.mu_loading,
            "sigma": self.sigma_loading,
            "n": self.n,
        }


@dataclass(frozen=True)
class LoadingDraw:
    """Per-individual salient loadings plus rescale bookkeeping."""

    values: np.ndarray  # (n, p, q)
    rescale_events: int

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))


def _standardized_salient(spec: PopulationSpec, rng) -> np.ndarray:
    """Pre-cap salient loadings, one column per variable: normal draws
    affinely mapped so every position has *exactly* the requested mean and
    population SD; sigma = 0 assigns the mean to everyone."""
    n, p = spec.n, spec.p
    if spec.sigma_loading == 0.0:
        return np.full((n, p), spec.mu_loading)
    draws = rng.standard_normal((n, p))
    sd = draws.std(axis=0)
    degenerate = sd == 0.0
    sd = np.where(degenerate, 1.0, sd)
    salient = (draws - draws.mean(axis=0)) / sd * spec.sigma_loading + spec.mu_loading
    salient[:, degenerate] = spec.mu_loading
    return salient


def _apply_cap(spec: PopulationSpec, salient: np.ndarray):
    """Divide loadings whose factor-wise maximum magnitude exceeds the cap
    by a constant; returns (capped salient, number of rescale events)."""
    salient = salient.copy()
    events = 0
    for j in range(spec.q):
        block = salient[:, j * spec.p_per_factor : (j + 1) * spec.p_per_factor]
        if spec.rescale_scope == "individual":
            peak = np.abs(block).max(axis=1)
            over = peak > spec.cap
            if np.any(over):
                block[over] *= (spec.cap / peak[over])[:, None]
                events += int(np.sum(over))
        else:
            peak = float(np.abs(block).max())
            if peak > spec.cap:
                block *= spec.cap / peak
                events += 1
    return salient, events


def generate_individual_loadings(spec: PopulationSpec, rng) -> LoadingDraw:
    """Draw each individual's salient loadings.

    For every salient position the n draws are normal, then affinely mapped
    to have exactly the requested mean and population SD.  Individuals (or
    the whole sample, depending on the rescale scope) whose largest absolute
    loading on a factor exceeds the cap are divided by a constant so the
    maximum equals the cap; heavy capping slightly shrinks the realised
    loading moments.
    """
    salient, events = _apply_cap(spec, _standardized_salient(spec, rng))
    loadings = np.zeros((spec.n, spec.p, spec.q))
    loadings[:, np.arange(spec.p), spec.variable_factor] = salient
    return LoadingDraw(values=loadings, rescale_events=events)


@dataclass(frozen=True)
class GeneratedSample:
    """One simulated sample with its ground truth."""

    data: DataMatrix
    true_scores: np.ndarray
    individual_loadings: np.ndarray
    rescale_events: int

    def __post_init__(self):
        object.__setattr__(self, "true_scores", _frozen_array(self.true_scores))
        object.__setattr__(self, "individual_loadings", _frozen_array(self.individual_loadings))


def generate_sample(spec: PopulationSpec, draw: LoadingDraw, rng) -> GeneratedSample:
    """Generate observations x_k = Lambda_k xi_k + Psi_k eps_k per individual.

    Factor scores and unique scores are standard normal; unique variances
    complete each individual's variables to unit variance, which the cap
    guarantees is possible.
    """
    loadings = draw.values
    n, p, q = loadings.shape
    communality = np.sum(loadings * loadings, axis=2)
    if np.any(communality > 1.0 + 1e-12):
        raise NumericalError("an individual communality exceeds one; cap violated")
    xi = rng.standard_normal((n, q))
    eps = rng.standard_normal((n, p))
    common = np.einsum("kpq,kq->kp", loadings, xi)
    x = common + np.sqrt(np.clip(1.0 - communality, 0.0, None)) * eps
    return GeneratedSample(
        data=DataMatrix.from_array(x),
        true_scores=xi,
        individual_loadings=loadings,
        rescale_events=draw.rescale_events,
    )


def score_based_determinacy(scores: ScoreMatrix, true_scores) -> np.ndarray:
    """Pearson correlation, per factor, of predictor and true factor scores."""
    true = np.asarray(true_scores, dtype=float)
    if true.shape != scores.values.shape:
        raise InputError("score and true-score matrices differ in shape")
    a = scores.values - scores.values.mean(axis=0)
    b = true - true.mean(axis=0)
    va = np.sum(a * a, axis=0)
    vb = np.sum(b * b, axis=0)
    if np.any(va == 0.0) or np.any(vb == 0.0):
        raise NumericalError("zero-variance column in score-based determinacy")
    return np.sum(a * b, axis=0) / np.sqrt(va * vb)


@dataclass(frozen=True)
class ReplicationOptions:
    """Per-replication pipeline settings.

    ``g_crit = None`` applies the study policy (see ``study_g_crit``) with
    all p variables counting for every factor; ``scope = 'salient'`` counts
    only each factor's assigned variables instead.  ``force_decision`` skips
    the null-reference simulation and the test, forcing every factor
    heterogeneous or homogeneous (diagnostics only).
    """

    n_d: int = 10
    alpha_max: float = 0.25
    g_crit: int | None = None
    scope: str = "all"
    rotation: str = "target"
    paf: PafOptions = field(default_factory=PafOptions)
    max_failure_fraction: float = 0.5
    reset_cap: float = 0.99
    force_decision: str | None = None
    acceptance_direction: str = "larger"

    def __post_init__(self):
        if self.scope not in ("all", "salient"):
            raise InputError("scope must be 'all' or 'salient'")
        if self.rotation not in ("target", "varimax"):
            raise InputError("rotation must be 'target' or 'varimax'")
        if self.force_decision not in (None, "heterogeneous", "homogeneous"):
            raise InputError("force_decision must be None, 'heterogeneous' or 'homogeneous'")


@dataclass(frozen=True)
class ReplicationRecord:
    """Everything measured on one simulated sample."""

    condition: dict
    ok: bool
    reason: str | None
    rho_r: np.ndarray | None = None
    rho_rk: np.ndarray | None = None
    rho_tilde_rk: np.ndarray | None = None
    rho_xi_r: np.ndarray | None = None
    rho_xi_rk: np.ndarray | None = None
    rho_tilde_xi_rk: np.ndarray | None = None
    heterogeneous: np.ndarray | None = None
    g_counts: np.ndarray | None = None
    g_crit: int | None = None
    alpha_exact: float | None = None
    loo_converged_fraction: float | None = None
    null_draws_used: int | None = None
    rescale_events: int = 0
    heywood_resets: int = 0
    hrfs_fallbacks: int = 0
    hrfs_rfs_corr: np.ndarray | None = None

    def estimator(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def to_dict(self) -> dict:
        def listify(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            return x

        return {k: listify(v) for k, v in self.__dict__.items()}


def _match_to_pattern(lam, pattern):
    """Signed column permutation of ``lam`` best matching a salient pattern.

    Used after Varimax, whose factor order and orientation are arbitrary;
    score-based determinacies need factor j of the solution to mean factor j
    of the population.
    """
    q = lam.shape[1]
    dots = pattern.T @ lam  # (q_target, q_source)
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(q)):
        score = sum(abs(dots[t, perm[t]]) for t in range(q))
        if score > best_score:
            best, best_score = perm, score
    permuted = lam[:, list(best)]
    return _align_sign_arrays(permuted, pattern)


def _failed(spec, reason, **extra):
    return ReplicationRecord(condition=spec.condition_key(), ok=False, reason=reason, **extra)


def run_replication(spec: PopulationSpec, seed, opts: ReplicationOptions = ReplicationOptions()) -> ReplicationRecord:
    """Run the full two-step pipeline on one simulated sample.

    Generate, fit, rotate towards the population pattern (or Varimax plus
    pattern matching), sweep, estimate individual loadings, test
    heterogeneity, and record the four determinacy estimates with the
    conditional estimators picked per factor by the test outcome.

    A fixed seed fully determines the record.  Non-convergence of the total
    fit or of too many leave-one-out fits marks the replication failed.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    gen_ss, null_ss = root.spawn(2)
    rng = np.random.default_rng(gen_ss)

    draw = generate_individual_loadings(spec, rng)
    sample = generate_sample(spec, draw, rng)
    s_matrix = correlation_from_data(sample.data)

    try:
        model = paf_fit(s_matrix, spec.q, opts.paf, n_used=spec.n)
    except HetfacError as exc:
        return _failed(spec, f"total fit failed: {exc}", rescale_events=draw.rescale_events)
    if not model.converged:
        return _failed(spec, "total fit did not converge", rescale_events=draw.rescale_events)

    pattern = spec.target_pattern()
    if opts.rotation == "varimax":
        if spec.q > 1:
            model = rotate_model(model, varimax(model.loadings, VarimaxOptions()))
        aligned = _match_to_pattern(model.loadings.values, pattern)
    else:
        aligned, _ = _align_to_target(model.loadings.values, pattern)
    model = FactorModel(
        loadings=LoadingMatrix(aligned, model.loadings.heywood_flags),
        unique_variances=model.unique_variances,
        implied=model.implied,
        n_used=model.n_used,
        converged=model.converged,
        iterations=model.iterations,
    )

    sweep_opts = SweepOptions(paf=opts.paf, max_failure_fraction=opts.max_failure_fraction)
    try:
        sweep = loo_loading_sweep(sample.data, spec.q, model, sweep_opts)
    except ConvergenceError as exc:
        return _failed(spec, f"leave-one-out sweep failed: {exc}", rescale_events=draw.rescale_events)

    individual = accept_individual_loadings(
        sample.data, model, sweep, reset_cap=opts.reset_cap, direction=opts.acceptance_direction
    )

    rho_r = determinacy_sample(model, s_matrix).rho
    rho_rk = hrfs_determinacy(individual, s_matrix).rho
    rfs = rfs_scores(model, sample.data)
    hrfs = hrfs_scores(individual, model, sample.data, s_matrix)
    try:
        rho_xi_r = score_based_determinacy(rfs, sample.true_scores)
        rho_xi_rk = score_based_determinacy(hrfs, sample.true_scores)
        hrfs_rfs_corr = score_based_determinacy(hrfs, rfs.values)
    except NumericalError as exc:
        return _failed(spec, str(exc), rescale_events=draw.rescale_events)

    g_counts = None
    alpha_exact = None
    g_crit = None
    null_used = None
    if opts.force_decision is not None:
        heterogeneous = np.full(spec.q, opts.force_decision == "heterogeneous")
    else:
        try:
            null = null_reference_sd(
                model,
                sweep,
                spec.n,
                n_d=opts.n_d,
                seed=null_ss,
                paf_opts=opts.paf,
                max_failure_fraction=opts.max_failure_fraction,
            )
        except ConvergenceError as exc:
            return _failed(spec, f"null reference failed: {exc}", rescale_events=draw.rescale_events)
        g_crit = opts.g_crit if opts.g_crit is not None else study_g_crit(spec.p)
        if opts.scope == "all":
            assignment = full_assignment(spec.p, spec.q)
        else:
            assignment = salient_assignment(model.loadings.values)
        trials = len(assignment[0])
        alpha_exact = float(_binomial_right_tail(trials, g_crit))
        report = heterogeneity_test(
            sweep, null, assignment, alpha_max=opts.alpha_max, cutoffs=(g_crit, alpha_exact)
        )
        heterogeneous = np.array(report.decisions)
        g_counts = np.array([f.g_count for f in report.factors])
        null_used = null.draws_used

    rho_tilde_rk = np.where(heterogeneous, rho_rk, rho_r)
    rho_tilde_xi_rk = np.where(heterogeneous, rho_xi_rk, rho_xi_r)

    values = (rho_r, rho_rk, rho_tilde_rk, rho_xi_r, rho_xi_rk, rho_tilde_xi_rk)
    if any(np.any(~np.isfinite(v)) for v in values):
        return _failed(spec, "non-finite determinacy estimate", rescale_events=draw.rescale_events)

    return ReplicationRecord(
        condition=spec.condition_key(),
        ok=True,
        reason=None,
        rho_r=rho_r,
        rho_rk=rho_rk,
        rho_tilde_rk=rho_tilde_rk,
        rho_xi_r=rho_xi_r,
        rho_xi_rk=rho_xi_rk,
        rho_tilde_xi_rk=rho_tilde_xi_rk,
        heterogeneous=heterogeneous,
        g_counts=g_counts,
        g_crit=g_crit,
        alpha_exact=alpha_exact,
        loo_converged_fraction=float(np.mean(sweep.converged)),
        null_draws_used=null_used,
        rescale_events=draw.rescale_events,
        heywood_resets=individual.heywood_resets,
        hrfs_fallbacks=len(hrfs.fallback_rows),
        hrfs_rfs_corr=hrfs_rfs_corr,
    )


MIN_CONVERGENCE_FOR_SUMMARY = 0.25


@dataclass(frozen=True)
class ConditionSummary:
    """Aggregates of one condition: per-factor means and standard errors of
    the four determinacy estimates, the test rejection rate, and convergence
    bookkeeping.  Conditions below the convergence floor are reported but
    not summarised, mirroring the study's exclusion rule."""

    condition: dict
    replications: int
    converged: int
    summarized: bool
    means: dict
    ses: dict
    rejection_rate: np.ndarray | None
    mean_loo_converged: float | None

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "replications": self.replications,
            "converged": self.converged,
            "convergence_rate": self.converged / self.replications if self.replications else 0.0,
            "summarized": self.summarized,
            "means": {k: v.tolist() for k, v in self.means.items()},
            "ses": {k: v.tolist() for k, v in self.ses.items()},
            "rejection_rate": None if self.rejection_rate is None else self.rejection_rate.tolist(),
            "mean_loo_converged": self.mean_loo_converged,
        }

    def rows(self) -> list:
        """One row per factor for the per-condition CSV."""
        rows = []
        q = self.condition["q"]
        for j in range(q):
            row = dict(self.condition)
            row["factor"] = j + 1
            row["replications"] = self.replications
            row["converged"] = self.converged
            row["summarized"] = self.summarized
            for name in ESTIMATORS:
                row[f"mean_{name}"] = self.means[name][j] if self.summarized else math.nan
                row[f"se_{name}"] = self.ses[name][j] if self.summarized else math.nan
            row["rejection_rate"] = (
                self.rejection_rate[j] if self.summarized and self.rejection_rate is not None else math.nan
            )
            rows.append(row)
        return rows


@dataclass(frozen=True)
class StudyResult:
    summaries: tuple
    records: tuple  # records[i] is the list of ReplicationRecords of condition i

    def long_rows(self) -> list:
        """Figure-ready long format: one row per condition, factor and
        estimator."""
        rows = []
        for summary in self.summaries:
            if not summary.summarized:
                continue
            for j in range(summary.condition["q"]):
                for name in ESTIMATORS:
                    row = dict(summary.condition)
                    row["factor"] = j + 1
                    row["estimator"] = name
                    row["mean"] = summary.means[name][j]
                    row["se"] = summary.ses[name][j]
                    rows.append(row)
        return rows


def _replication_worker(args):
    cond_idx, rep_idx, spec, master_seed, opts = args
    seed = np.random.SeedSequence(master_seed, spawn_key=(cond_idx, rep_idx))
    return run_replication(spec, seed, opts)


def summarize_condition(spec: PopulationSpec, records) -> ConditionSummary:
    """Aggregate one condition's records into means, SEs and rates."""
    total = len(records)
    ok = [r for r in records if r.ok]
    converged = len(ok)
    summarized = total > 0 and converged / total >= MIN_CONVERGENCE_FOR_SUMMARY and converged > 0
    means, ses = {}, {}
    rejection = None
    mean_loo = None
    if summarized:
        for name in ESTIMATORS:
            stacked = np.stack([r.estimator(name) for r in ok])
            means[name] = stacked.mean(axis=0)
            if converged > 1:
                ses[name] = stacked.std(axis=0, ddof=1) / math.sqrt(converged)
            else:
                ses[name] = np.full(stacked.shape[1], math.nan)
        decided = [r for r in ok if r.heterogeneous is not None]
        if decided:
            rejection = np.mean(np.stack([r.heterogeneous for r in decided]), axis=0)
        mean_loo = float(np.mean([r.loo_converged_fraction for r in ok]))
    return ConditionSummary(
        condition=spec.condition_key(),
        replications=total,
        converged=converged,
        summarized=summarized,
        means=means,
        ses=ses,
        rejection_rate=rejection,
        mean_loo_converged=mean_loo,
    )


def run_study(
    specs,
    replications: int,
    seed: int,
    opts: ReplicationOptions = ReplicationOptions(),
    workers: int = 1,
) -> StudyResult:
    """Run ``replications`` seeded replications for every condition.

    Replication seeds are derived from (condition index, replication index),
    never from a shared sequential stream, so results are identical for any
    worker count and any scheduling.
    """
    specs = list(specs)
    if not specs:
        raise InputError("the condition grid is empty")
    if replications < 1:
        raise InputError("replications must be positive")
    tasks = [
        (ci, ri, spec, seed, opts)
        for ci, spec in enumerate(specs)
        for ri in range(replications)
    ]
    results = ordered_map(_replication_worker, tasks, workers)
    grouped = [results[ci * replications : (ci + 1) * replications] for ci in range(len(specs))]
    summaries = tuple(summarize_condition(spec, recs) for spec, recs in zip(specs, grouped))
    return StudyResult(summaries=summaries, records=tuple(tuple(g) for g in grouped))
