"""Data ingestion, correlation matrices and principal-axis factor extraction.

The extraction method is iterated principal-axis factoring (PAF) on a
correlation matrix: communalities are initialised from squared multiple
correlations, the reduced matrix is eigendecomposed, and communalities are
updated until they stabilise.  Only orthogonal models are supported; the
factor correlation matrix is the identity throughout and is never stored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, SingularMatrixError

KIND_SAMPLE = "sample"
KIND_IMPLIED = "model-implied"
KIND_INDIVIDUAL = "individual-implied"

DEFAULT_EIG_FLOOR = 1e-10
MAX_COMMUNALITY = 0.9801  # .99 squared; keeps unique variances positive
SYMMETRY_TOL = 1e-12
DIAG_TOL = 1e-8


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DataMatrix:
    """An n x p block of raw observations, rows = individuals.

    Invariants enforced at construction: n >= p + 2 (leave-one-out analyses
    stay over-determined), all cells finite, and every column has nonzero
    variance.  Missing data are rejected; listwise deletion is the caller's
    responsibility.
    """

    values: np.ndarray
    column_names: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InputError("data must be a 2-dimensional matrix")
        n, p = values.shape
        names = tuple(str(c) for c in self.column_names)
        if len(names) != p:
            raise InputError(f"got {len(names)} column names for {p} columns")
        if n < p + 2:
            raise InputError(f"need at least p + 2 = {p + 2} rows, got {n}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise InputError(
                f"non-finite value at row {bad[0]}, column '{names[bad[1]]}'; "
                "missing data are not supported"
            )
        var = values.var(axis=0)
        if np.any(var == 0.0):
            i = int(np.argmax(var == 0.0))
            raise InputError(f"column '{names[i]}' (index {i}) has zero variance")
        object.__setattr__(self, "values", _frozen_array(values))
        object.__setattr__(self, "column_names", names)

    @classmethod
    def from_array(cls, values, column_names=None):
        values = np.asarray(values, dtype=float)
        if column_names is None and values.ndim == 2:
            column_names = tuple(f"v{i + 1}" for i in range(values.shape[1]))
        return cls(values, tuple(column_names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CorrelationMatrix:
    """A p x p correlation matrix with a kind tag.

    Symmetry must hold within 1e-12 and the diagonal within 1e-8 of one;
    the stored values are exactly symmetrised with a unit diagonal.
    Invertibility is not a construction requirement (degenerate sample
    matrices are representable); call :meth:`require_invertible` before
    inverting.
    """

    values: np.ndarray
    kind: str = KIND_SAMPLE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InputError("correlation matrix must be square")
        if not np.all(np.isfinite(values)):
            raise InputError("correlation matrix has non-finite entries")
        asym = np.abs(values - values.T).max() if values.size else 0.0
        if asym > SYMMETRY_TOL:
            raise InputError(f"matrix is asymmetric (max |A - A'| = {asym:.3e})")
        diag_err = np.abs(np.diag(values) - 1.0).max()
        if diag_err > DIAG_TOL:
            raise InputError(f"diagonal deviates from 1 by {diag_err:.3e}")
        sym = (values + values.T) / 2.0
        np.fill_diagonal(sym, 1.0)
        object.__setattr__(self, "values", _frozen_array(sym))

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def require_invertible(self, floor: float = DEFAULT_EIG_FLOOR) -> None:
        smallest = self.smallest_eigenvalue()
        if smallest <= floor:
            raise SingularMatrixError(
                f"{self.kind} correlation matrix is numerically singular "
                f"(smallest eigenvalue {smallest:.3e} <= floor {floor:.0e})"
            )


@dataclass(frozen=True)
class LoadingMatrix:
    """A p x q loading matrix plus the set of (i, j) entries touched by
    Heywood clamping during extraction."""

    values: np.ndarray
    heywood_flags: frozenset = frozenset()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InputError("loading matrix must be 2-dimensional")
        if not np.all(np.isfinite(values)):
            raise InputError("loading matrix has non-finite entries")
        object.__setattr__(self, "values", _frozen_array(values))
        object.__setattr__(
            self,
            "heywood_flags",
            frozenset((int(i), int(j)) for i, j in self.heywood_flags),
        )

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FactorModel:
    """One fitted (or constructed) orthogonal factor solution.

    ``implied`` is the model-implied correlation matrix loadings @ loadings'
    + diag(unique_variances); its diagonal equals one within 1e-8 because the
    model lives in the correlation metric.
    """

    loadings: LoadingMatrix
    unique_variances: np.ndarray
    implied: CorrelationMatrix
    n_used: int | None = None
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        psi2 = np.asarray(self.unique_variances, dtype=float)
        lam = self.loadings.values
        if psi2.shape != (lam.shape[0],):
            raise InputError("unique_variances must have one entry per variable")
        if np.any(psi2 < -1e-12):
            raise InputError("unique variances must be nonnegative")
        communalities = np.sum(lam * lam, axis=1)
        if np.any(communalities < -1e-12) or np.any(communalities > 1.0 + 1e-8):
            raise InputError("communalities must lie in [0, 1] after Heywood handling")
        total = communalities + psi2
        if np.abs(total - 1.0).max() > DIAG_TOL:
            raise InputError(
                "diag(loadings @ loadings' + unique variances) must be 1 within 1e-8"
            )
        object.__setattr__(self, "unique_variances", _frozen_array(np.clip(psi2, 0.0, None)))

    @property
    def p(self) -> int:
        return self.loadings.p

    @property
    def q(self) -> int:
        return self.loadings.q

    @property
    def communalities(self) -> np.ndarray:
        lam = self.loadings.values
        return np.sum(lam * lam, axis=1)


def model_from_loadings(
    loadings,
    unique_variances=None,
    *,
    heywood_flags=(),
    n_used=None,
    converged=True,
    iterations=0,
) -> FactorModel:
    """Build a FactorModel from raw loading values.

    When ``unique_variances`` is omitted they are completed so variables have
    unit variance (1 minus the communality).
    """
    lam = np.asarray(loadings, dtype=float)
    if lam.ndim == 1:
        lam = lam[:, None]
    if unique_variances is None:
        unique_variances = 1.0 - np.sum(lam * lam, axis=1)
    return FactorModel(
        loadings=LoadingMatrix(lam, frozenset(heywood_flags)),
        unique_variances=np.asarray(unique_variances, dtype=float),
        implied=_implied_from_arrays(lam, np.asarray(unique_variances, dtype=float)),
        n_used=n_used,
        converged=converged,
        iterations=iterations,
    )


def _implied_from_arrays(lam, psi2, kind=KIND_IMPLIED) -> CorrelationMatrix:
    sigma = lam @ lam.T + np.diag(psi2)
    np.fill_diagonal(sigma, 1.0)
    return CorrelationMatrix(sigma, kind=kind)


def _pearson(values):
    """Correlation matrix of data columns; raises InputError on a
    zero-variance column (its index in the message)."""
    centered = values - values.mean(axis=0)
    ss = np.sqrt(np.sum(centered * centered, axis=0))
    if np.any(ss == 0.0):
        raise InputError(f"column index {int(np.argmax(ss == 0.0))} has zero variance")
    r = (centered.T @ centered) / np.outer(ss, ss)
    r = np.clip((r + r.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def correlation_from_data(data: DataMatrix) -> CorrelationMatrix:
    """Pearson product-moment correlations of the columns of ``data``."""
    return CorrelationMatrix(_pearson(data.values), kind=KIND_SAMPLE)


def loo_correlation(data: DataMatrix, k: int) -> CorrelationMatrix:
    """Correlation matrix of ``data`` with row ``k`` deleted."""
    n = data.n
    if not 0 <= k < n:
        raise InputError(f"row index {k} out of range for n = {n}")
    reduced = np.delete(data.values, k, axis=0)
    try:
        r = _pearson(reduced)
    except InputError as exc:
        raise InputError(f"after deleting row {k}: {exc}") from exc
    return CorrelationMatrix(r, kind=KIND_SAMPLE)


def implied_correlation(model: FactorModel) -> CorrelationMatrix:
    """The model-implied correlation matrix loadings @ loadings' + Psi^2."""
    return _implied_from_arrays(model.loadings.values, model.unique_variances)


@dataclass(frozen=True)
class PafOptions:
    """Tuning knobs for iterated principal-axis factoring."""

    tol: float = 1e-6
    max_iter: int = 500
    eig_floor: float = DEFAULT_EIG_FLOOR
    max_communality: float = MAX_COMMUNALITY


def _paf_core(stack, q, opts):
    """Iterated PAF over a stack of m correlation matrices.

    Returns (loadings (m,p,q), psi2 (m,p), converged (m,), iterations (m,),
    heywood (m,p), ok (m,)).  Matrices whose smallest eigenvalue is at or
    below the floor get ok = False and NaN outputs instead of raising, so
    sweeps can skip individual failures.  Each matrix sees exactly the same
    arithmetic as a single-matrix call.
    """
    m, p, _ = stack.shape
    loadings = np.full((m, p, q), np.nan)
    psi2 = np.full((m, p), np.nan)
    converged = np.zeros(m, dtype=bool)
    iterations = np.zeros(m, dtype=int)
    heywood = np.zeros((m, p), dtype=bool)

    smallest = np.linalg.eigvalsh(stack)[:, 0]
    ok = smallest > opts.eig_floor
    if not np.any(ok):
        return loadings, psi2, converged, iterations, heywood, ok

    idx_ok = np.flatnonzero(ok)
    try:
        inv = np.linalg.inv(stack[idx_ok])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - floor guards this
        raise NumericalError(f"matrix inversion failed: {exc}") from exc
    diag_inv = inv[:, np.arange(p), np.arange(p)]
    h2_ok = np.clip(1.0 - 1.0 / diag_inv, 0.0, opts.max_communality)

    h2 = np.full((m, p), np.nan)
    h2[idx_ok] = h2_ok
    active = idx_ok.copy()
    rng_p = np.arange(p)
    while active.size:
        work = stack[active].copy()
        work[:, rng_p, rng_p] = h2[active]
        try:
            w, v = np.linalg.eigh(work)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
        # eigh is ascending; take the top q in descending order
        top_w = w[:, ::-1][:, :q]
        top_v = v[:, :, ::-1][:, :, :q]
        lam = top_v * np.sqrt(np.clip(top_w, 0.0, None))[:, None, :]
        new_h2 = np.sum(lam * lam, axis=2)
        over = new_h2 > opts.max_communality
        if np.any(over):
            scale = np.where(over, np.sqrt(opts.max_communality / np.where(over, new_h2, 1.0)), 1.0)
            lam = lam * scale[:, :, None]
            new_h2 = np.where(over, opts.max_communality, new_h2)
            rows, cols = np.nonzero(over)
            heywood[active[rows], cols] = True
        delta = np.abs(new_h2 - h2[active]).max(axis=1)
        h2[active] = new_h2
        loadings[active] = lam
        iterations[active] += 1
        done = delta < opts.tol
        hit_cap = iterations[active] >= opts.max_iter
        converged[active[done]] = True
        active = active[~(done | hit_cap)]

    # deterministic column signs: largest-magnitude entry nonnegative
    lam_ok = loadings[idx_ok]
    arg = np.argmax(np.abs(lam_ok), axis=1)
    pivot = np.take_along_axis(lam_ok, arg[:, None, :], axis=1)[:, 0, :]
    signs = np.where(pivot < 0.0, -1.0, 1.0)
    loadings[idx_ok] = lam_ok * signs[:, None, :]
    psi2[idx_ok] = 1.0 - h2[idx_ok]
    return loadings, psi2, converged, iterations, heywood, ok


def paf_fit(
    corr: CorrelationMatrix,
    q: int,
    opts: PafOptions = PafOptions(),
    n_used: int | None = None,
) -> FactorModel:
    """Fit an orthogonal q-factor model by iterated principal-axis factoring.

    Parameters
    ----------
    corr : CorrelationMatrix
        The matrix to factor; must be invertible above ``opts.eig_floor``.
    q : int
        Number of common factors, 1 <= q < p.
    opts : PafOptions
        Convergence tolerance (on the maximum communality change), the
        iteration cap, and Heywood clamping bound.
    n_used : int, optional
        Sample size behind ``corr``, recorded on the model.

    Returns
    -------
    FactorModel
        ``converged`` is False when the iteration cap was hit; the last
        iterate is still returned so sweeps can count the failure.
    """
    p = corr.p
    if q < 1:
        raise InputError("q must be at least 1")
    if q >= p:
        raise InputError(f"q = {q} must be smaller than p = {p}")
    corr.require_invertible(opts.eig_floor)
    loadings, psi2, converged, iterations, heywood, ok = _paf_core(
        corr.values[None, :, :], q, opts
    )
    if not ok[0]:  # pragma: no cover - require_invertible already raised
        raise SingularMatrixError("correlation matrix is numerically singular")
    flags = frozenset(
        (int(i), j) for i in np.flatnonzero(heywood[0]) for j in range(q)
    )
    lam = loadings[0]
    return FactorModel(
        loadings=LoadingMatrix(lam, flags),
        unique_variances=psi2[0],
        implied=_implied_from_arrays(lam, psi2[0]),
        n_used=n_used,
        converged=bool(converged[0]),
        iterations=int(iterations[0]),
    )


def load_csv(path) -> DataMatrix:
    """Read a numeric CSV: first row header, '.' decimal separator.

    A non-numeric cell is a hard error naming the offending row and column;
    ragged rows are rejected as well.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        names = tuple(name.strip() for name in header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # ignore blank lines
            if len(row) != len(names):
                raise InputError(
                    f"{path}: line {line_no} has {len(row)} fields, expected {len(names)}"
                )
            parsed = []
            for col, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise InputError(
                        f"{path}: non-numeric value {cell.strip()!r} at line "
                        f"{line_no}, column '{names[col]}'"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return DataMatrix(np.asarray(rows, dtype=float), names)
