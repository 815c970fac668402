"""Regression factor score predictor and determinacy coefficients.

The regression predictor applies the weights loadings' @ inv(Sigma_hat) to
standardised observations.  Determinacy — the correlation of a predictor
with its factor — comes in a population form (model only), a sample form
(model against the observed correlation matrix), and a leave-one-out form
used for influence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .factor_core import (
    CorrelationMatrix,
    DataMatrix,
    FactorModel,
    PafOptions,
    _frozen_array,
    loo_correlation,
    paf_fit,
)
from .rotation import _align_to_target

KIND_RFS = "rfs"
KIND_HRFS = "hrfs"

BASIS_POPULATION = "population"
BASIS_SAMPLE = "sample"
BASIS_LOO = "loo"
BASIS_HRFS = "hrfs"

RHO_RANGE_TOL = 1e-8


@dataclass(frozen=True)
class ScoreMatrix:
    """An n x q block of factor score predictor values.

    ``fallback_rows`` lists individuals whose heterogeneity-based row had to
    fall back to the conventional predictor (degenerate individual model).
    """

    values: np.ndarray
    kind: str
    fallback_rows: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InputError("scores must be an n x q matrix")
        if not np.all(np.isfinite(values)):
            raise InputError("scores contain non-finite entries")
        if self.kind not in (KIND_RFS, KIND_HRFS):
            raise InputError(f"unknown score kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen_array(values))
        object.__setattr__(self, "fallback_rows", tuple(int(k) for k in self.fallback_rows))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DeterminacyReport:
    """Per-factor determinacy coefficients plus bookkeeping.

    ``clamped`` lists factors whose raw value exceeded one under misfit (the
    reported value is clamped into [0, 1]); ``undefined`` lists factors whose
    denominator went nonpositive, reported as NaN.
    """

    rho: np.ndarray
    basis: str
    influence: np.ndarray | None = None
    clamped: tuple = ()
    undefined: tuple = ()
    converged: bool = True

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "rho", _frozen_array(rho))
        object.__setattr__(self, "clamped", tuple(int(j) for j in self.clamped))
        object.__setattr__(self, "undefined", tuple(int(j) for j in self.undefined))

    @property
    def q(self) -> int:
        return self.rho.shape[0]


def standardize(data: DataMatrix) -> np.ndarray:
    """Column z-scores using total-sample means and SDs (ddof = 1)."""
    values = data.values
    sd = values.std(axis=0, ddof=1)
    return (values - values.mean(axis=0)) / sd


def rfs_weights(model: FactorModel, obs_corr: CorrelationMatrix | None = None) -> np.ndarray:
    """Regression factor score weights, a q x p matrix.

    The weights are loadings' @ inv(implied correlation); with orthogonal
    factors the population formula's leading factor-correlation matrix is the
    identity.  When ``obs_corr`` is supplied it is checked for invertibility
    so downstream sample determinacies are well defined.
    """
    if obs_corr is not None:
        if obs_corr.p != model.p:
            raise InputError("observed correlation matrix does not match the model")
        obs_corr.require_invertible()
    model.implied.require_invertible()
    lam = model.loadings.values
    return np.linalg.solve(model.implied.values, lam).T


def rfs_scores(model: FactorModel, data: DataMatrix) -> ScoreMatrix:
    """Regression factor scores for every individual (rows of ``data``)."""
    if data.p != model.p:
        raise InputError(f"data has {data.p} columns but the model has p = {model.p}")
    weights = rfs_weights(model)
    return ScoreMatrix(standardize(data) @ weights.T, kind=KIND_RFS)


def determinacy_population(model: FactorModel) -> DeterminacyReport:
    """Population determinacy: sqrt of diag(loadings' inv(Sigma) loadings)."""
    model.implied.require_invertible()
    lam = model.loadings.values
    diag = np.einsum("pq,pq->q", lam, np.linalg.solve(model.implied.values, lam))
    if np.any(diag < -RHO_RANGE_TOL) or np.any(diag > 1.0 + RHO_RANGE_TOL):
        raise NumericalError(
            f"squared determinacy left [0, 1]: {np.array2string(diag, precision=6)}"
        )
    return DeterminacyReport(np.sqrt(np.clip(diag, 0.0, 1.0)), basis=BASIS_POPULATION)


def _sample_determinacy_arrays(lam, sigma, s):
    """Per-factor sample determinacy of a model (lam, implied sigma) against
    an observed correlation matrix s.  Returns (rho, clamped, undefined)."""
    b = np.linalg.solve(sigma, lam)
    num = np.einsum("pq,pq->q", lam, b)
    den = np.einsum("pq,pq->q", b, s @ b)
    undefined = np.flatnonzero(den <= 0.0)
    den_safe = np.where(den > 0.0, den, 1.0)
    rho = num / np.sqrt(den_safe)
    rho[undefined] = np.nan
    clamped = np.flatnonzero(rho > 1.0)
    rho = np.clip(rho, 0.0, 1.0)
    rho[undefined] = np.nan
    return rho, tuple(int(j) for j in clamped), tuple(int(j) for j in undefined)


def determinacy_sample(model: FactorModel, sample_corr: CorrelationMatrix) -> DeterminacyReport:
    """Sample determinacy of the regression predictor under model misfit.

    Reduces to the population value when the observed matrix equals the
    model-implied one.  Values above one (possible under severe misfit) are
    clamped and recorded; nonpositive denominators mark the factor undefined.
    """
    if sample_corr.p != model.p:
        raise InputError("sample correlation matrix does not match the model")
    model.implied.require_invertible()
    rho, clamped, undefined = _sample_determinacy_arrays(
        model.loadings.values, model.implied.values, sample_corr.values
    )
    return DeterminacyReport(rho, basis=BASIS_SAMPLE, clamped=clamped, undefined=undefined)


def loo_determinacy(
    data: DataMatrix,
    q: int,
    k: int,
    total_model: FactorModel,
    opts: PafOptions = PafOptions(),
) -> DeterminacyReport:
    """Sample determinacy with individual ``k`` deleted.

    Refits the model on the reduced correlation matrix, rotates the solution
    towards the total-sample loadings (sign alignment for q = 1), and
    evaluates the sample determinacy of the reduced model against the
    reduced correlation matrix.  A non-converged refit is returned with
    ``converged = False``; the caller decides the policy.
    """
    s_loo = loo_correlation(data, k)
    fit = paf_fit(s_loo, q, opts, n_used=data.n - 1)
    aligned, _ = _align_to_target(fit.loadings.values, total_model.loadings.values)
    rho, clamped, undefined = _sample_determinacy_arrays(
        aligned, fit.implied.values, s_loo.values
    )
    return DeterminacyReport(
        rho,
        basis=BASIS_LOO,
        clamped=clamped,
        undefined=undefined,
        converged=fit.converged,
    )


def loo_determinacy_table(data: DataMatrix, sweep) -> np.ndarray:
    """Leave-one-out determinacies for every individual from a completed
    sweep (see ``heterogeneity.loo_loading_sweep``); rows of non-converged
    fits are NaN."""
    n, q = sweep.loadings.shape[0], sweep.loadings.shape[2]
    table = np.full((n, q), np.nan)
    for k in range(n):
        if not sweep.converged[k]:
            continue
        lam = sweep.loadings[k]
        psi2 = sweep.unique_variances[k]
        sigma = lam @ lam.T + np.diag(psi2)
        np.fill_diagonal(sigma, 1.0)
        rho, _, _ = _sample_determinacy_arrays(lam, sigma, loo_correlation(data, k).values)
        table[k] = rho
    return table


def determinacy_influence(full: DeterminacyReport, loo: DeterminacyReport) -> np.ndarray:
    """Squared-determinacy difference full**2 - loo**2, per factor.

    Positive entries mean the deleted individual contributed positively to
    the determinacy of the predictor.
    """
    if full.q != loo.q:
        raise InputError("reports have different numbers of factors")
    return full.rho**2 - loo.rho**2
