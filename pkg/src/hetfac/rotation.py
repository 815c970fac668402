"""Orthogonal rotations: Varimax and orthogonal Procrustes target rotation.

Target rotation solves min ||source @ T - target||_F^2 over orthogonal T via
the singular value decomposition of source' @ target.  Varimax maximises the
raw criterion (sum over factors of the column variance of squared loadings)
with pairwise plane rotations; Kaiser row normalisation is optional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .factor_core import FactorModel, LoadingMatrix, _implied_from_arrays

ORTHOGONALITY_TOL = 1e-10
DEGENERATE_SV = 1e-12


@dataclass(frozen=True)
class RotationResult:
    """A rotation outcome; ``rotated`` equals the input times ``transform``
    exactly (one matrix product, no accumulated drift)."""

    rotated: LoadingMatrix
    transform: np.ndarray
    criterion_before: float | None = None
    criterion_after: float | None = None
    residual_ssq: float | None = None
    degenerate: bool = False


@dataclass(frozen=True)
class VarimaxOptions:
    tol: float = 1e-10
    max_sweeps: int = 100
    kaiser_normalize: bool = False


def varimax_criterion(values) -> float:
    """Raw Varimax criterion: sum over factors of var(squared loadings)."""
    sq = np.asarray(values, dtype=float) ** 2
    return float(np.sum(sq.var(axis=0)))


def _pairwise_angle(x, y, p):
    u = x * x - y * y
    v = 2.0 * x * y
    su, sv = u.sum(), v.sum()
    num = 2.0 * (u @ v) - 2.0 * su * sv / p
    den = (u @ u - v @ v) - (su * su - sv * sv) / p
    return 0.25 * math.atan2(num, den)


def _varimax_arrays(values, opts: VarimaxOptions):
    p, q = values.shape
    if opts.kaiser_normalize:
        comm = np.sqrt(np.sum(values * values, axis=1))
        scale = np.where(comm > 0.0, comm, 1.0)
        work = values / scale[:, None]
    else:
        work = values.copy()
    transform = np.eye(q)
    crit = varimax_criterion(work)
    for _ in range(opts.max_sweeps):
        for a in range(q - 1):
            for b in range(a + 1, q):
                theta = _pairwise_angle(work[:, a], work[:, b], p)
                if theta == 0.0:
                    continue
                c, s = math.cos(theta), math.sin(theta)
                rot = np.array([[c, -s], [s, c]])
                work[:, [a, b]] = work[:, [a, b]] @ rot
                transform[:, [a, b]] = transform[:, [a, b]] @ rot
        new_crit = varimax_criterion(work)
        if new_crit - crit < opts.tol:
            break
        crit = new_crit
    # deterministic order (explained variance descending) and signs
    rotated = values @ transform
    order = np.argsort(-np.sum(rotated * rotated, axis=0), kind="stable")
    transform = transform[:, order]
    rotated = rotated[:, order]
    pivot = rotated[np.argmax(np.abs(rotated), axis=0), np.arange(q)]
    signs = np.where(pivot < 0.0, -1.0, 1.0)
    transform = transform * signs
    return values @ transform, transform


def varimax(loadings: LoadingMatrix, opts: VarimaxOptions = VarimaxOptions()) -> RotationResult:
    """Varimax-rotate a loading matrix.

    For q = 1 the identity rotation is returned.  The reported criteria are
    computed on the unnormalised input and output even when Kaiser
    normalisation drives the sweeps.
    """
    values = loadings.values
    before = varimax_criterion(values)
    if loadings.q < 2:
        return RotationResult(
            rotated=loadings,
            transform=np.eye(loadings.q),
            criterion_before=before,
            criterion_after=before,
        )
    rotated, transform = _varimax_arrays(values, opts)
    return RotationResult(
        rotated=LoadingMatrix(rotated, loadings.heywood_flags),
        transform=transform,
        criterion_before=before,
        criterion_after=varimax_criterion(rotated),
    )


def _procrustes_arrays(source, target):
    cross = source.T @ target
    u, s, vt = np.linalg.svd(cross)
    transform = u @ vt
    rotated = source @ transform
    diff = rotated - target
    residual = float(np.sum(diff * diff))
    degenerate = bool(s.size > 0 and s[-1] < DEGENERATE_SV)
    return rotated, transform, residual, degenerate


def procrustes_target(source: LoadingMatrix, target: LoadingMatrix) -> RotationResult:
    """Orthogonal target rotation of ``source`` towards ``target``.

    Returns the orthogonal transform minimising the squared distance to the
    target; ``degenerate`` is set when the cross-product is rank deficient
    (smallest singular value below 1e-12), where the minimiser is not unique.
    """
    if source.values.shape != target.values.shape:
        raise InputError(
            f"source {source.values.shape} and target {target.values.shape} differ in shape"
        )
    rotated, transform, residual, degenerate = _procrustes_arrays(
        source.values, target.values
    )
    return RotationResult(
        rotated=LoadingMatrix(rotated, source.heywood_flags),
        transform=transform,
        residual_ssq=residual,
        degenerate=degenerate,
    )


def _align_sign_arrays(source, target):
    dots = np.sum(source * target, axis=0)
    return source * np.where(dots < 0.0, -1.0, 1.0)


def align_sign(source: LoadingMatrix, target: LoadingMatrix) -> LoadingMatrix:
    """Negate columns of ``source`` whose inner product with the matching
    ``target`` column is negative (ties keep the original sign)."""
    if source.values.shape != target.values.shape:
        raise InputError("source and target must have the same shape")
    return LoadingMatrix(
        _align_sign_arrays(source.values, target.values), source.heywood_flags
    )


def rotate_model(model: FactorModel, result: RotationResult) -> FactorModel:
    """Apply a rotation result to a fitted model.

    Unique variances and the implied correlation matrix are unchanged by an
    orthogonal rotation; only the loadings move.
    """
    lam = model.loadings.values @ result.transform
    return FactorModel(
        loadings=LoadingMatrix(lam, model.loadings.heywood_flags),
        unique_variances=model.unique_variances,
        implied=_implied_from_arrays(lam, model.unique_variances),
        n_used=model.n_used,
        converged=model.converged,
        iterations=model.iterations,
    )


def _align_to_target(lam, target):
    """Procrustes-rotate (sign-align for q = 1) raw loadings towards a raw
    target, with a final per-column sign pass absorbed into the transform.

    At a Procrustes optimum every column already has a nonnegative inner
    product with its target, so the sign pass only resolves exact ties.
    """
    if lam.shape[1] == 1:
        dots = np.sum(lam * target, axis=0)
        transform = np.diag(np.where(dots < 0.0, -1.0, 1.0))
        return lam @ transform, transform
    _, transform, _, _ = _procrustes_arrays(lam, target)
    dots = np.sum((lam @ transform) * target, axis=0)
    transform = transform * np.where(dots < 0.0, -1.0, 1.0)
    return lam @ transform, transform
