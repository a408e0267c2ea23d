"""Column statistics and regularized canonical correlation analysis.

Everything here operates on plain float64 arrays with samples in rows.
The CCA implementation whitens both sides with a ridge-stabilized inverse
square root and reads the canonical directions off an SVD of the whitened
cross-covariance, which is numerically safer than solving the generalized
eigenproblem directly and handles rank-deficient inputs (constant columns,
one-hot labels) without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError

# Columns whose sample stddev falls at or below this are treated as constant
# when standardizing (divisor 1 instead of ~0).
CONSTANT_COLUMN_TOL = 1e-12

# Relative eigenvalue cutoff deciding the numeric rank of a covariance.
_RANK_RTOL = 1e-12


def as_matrix(values, name: str = "matrix", min_rows: int = 1) -> np.ndarray:
    """Coerce to a finite float64 2-D array, raising DataError otherwise."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"{name} must be 2-D (rows=samples), got ndim={m.ndim}")
    if m.shape[0] < min_rows:
        raise DataError(f"{name} needs at least {min_rows} row(s), got {m.shape[0]}")
    if m.shape[1] < 1:
        raise DataError(f"{name} needs at least one column")
    if not np.isfinite(m).all():
        bad = int(np.flatnonzero(~np.isfinite(m).ravel())[0])
        r, c = divmod(bad, m.shape[1])
        raise DataError(f"{name} contains a non-finite value at row {r}, column {c}")
    return m


class ColumnStats(NamedTuple):
    """Per-column mean and sample stddev (ddof=1) of a training matrix."""

    mean: np.ndarray
    stddev: np.ndarray


def column_stats(m) -> ColumnStats:
    """Mean and sample standard deviation of each column.

    A single-row matrix has no spread to estimate, so its stddev is
    reported as zero rather than NaN.
    """
    m = as_matrix(m, "matrix")
    mean = m.mean(axis=0)
    if m.shape[0] == 1:
        stddev = np.zeros_like(mean)
    else:
        stddev = m.std(axis=0, ddof=1)
    return ColumnStats(mean=mean, stddev=stddev)


def standardize(m, stats: ColumnStats) -> np.ndarray:
    """Center by stats.mean and scale by stats.stddev, column-wise.

    Columns with stddev <= CONSTANT_COLUMN_TOL are only centered; dividing
    by a near-zero spread would blow up round-off noise.
    """
    m = as_matrix(m, "matrix")
    mean = np.asarray(stats.mean, dtype=np.float64)
    stddev = np.asarray(stats.stddev, dtype=np.float64)
    if mean.shape != (m.shape[1],) or stddev.shape != (m.shape[1],):
        raise DataError(
            f"stats cover {mean.shape[0]} column(s) but matrix has {m.shape[1]}"
        )
    safe = np.where(stddev > CONSTANT_COLUMN_TOL, stddev, 1.0)
    return (m - mean) / safe


def _centered(m: np.ndarray) -> np.ndarray:
    """Subtract column means, forcing exactly-constant columns to zero.

    Without the fixup, the mean of a repeated non-dyadic value rounds a
    hair off the value itself and the residual round-off can masquerade
    as rank.
    """
    c = m - m.mean(axis=0)
    const = np.ptp(m, axis=0) == 0
    if const.any():
        c[:, const] = 0.0
    return c


def cross_covariance(x, y) -> np.ndarray:
    """Sample cross-covariance of paired rows: centered x^T y / (n - 1)."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise DataError(
            f"x and y must pair rows, got {x.shape[0]} vs {y.shape[0]}"
        )
    if x.shape[0] < 2:
        raise DataError("cross-covariance needs at least 2 rows")
    return _centered(x).T @ _centered(y) / (x.shape[0] - 1)


@dataclass(frozen=True)
class CcaResult:
    """Canonical directions for one x/y pairing.

    a : (dx, r) projection columns for x, b : (dy, r) for y, rho : (r,)
    canonical correlations in non-increasing order. x_mean and y_mean are
    the centering means captured when the analysis ran; project() needs
    them to reproduce the fitted projection on new rows.
    """

    a: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray

    @property
    def n_components(self) -> int:
        return self.a.shape[1]


def _inv_sqrt(cov: np.ndarray, shift: float) -> tuple[np.ndarray, int]:
    """Inverse square root of a symmetric PSD matrix on its numeric range.

    Rank is read off the eigenvalues of `cov` itself (relative cutoff
    _RANK_RTOL); the inversion then uses the ridged spectrum w + shift, so
    regularization stabilizes the scaling without inflating the rank.
    """
    w, v = np.linalg.eigh(cov)
    tol = max(w[-1], 0.0) * _RANK_RTOL
    keep = w > tol
    rank = int(keep.sum())
    if rank == 0:
        return np.zeros_like(cov), 0
    vk = v[:, keep]
    return (vk / np.sqrt(w[keep] + shift)) @ vk.T, rank


def cca(x, y, gamma: float = 1e-8) -> CcaResult:
    """Canonical correlation analysis of paired samples.

    Covariances use the n-1 convention. Each side is whitened with a
    ridge of gamma * trace(C)/dim added to the spectrum, which keeps the
    scaling stable when columns are nearly collinear. The number of
    returned components is min(rank(Cxx), rank(Cyy)), ranks measured
    before the ridge; correlations are clamped into [0, 1].

    Sign convention: the first non-zero entry of every column of `a` is
    positive, with the matching column of `b` flipped in tandem so the
    projected pair keeps its correlation.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise DataError(
            f"x and y must pair rows, got {x.shape[0]} vs {y.shape[0]}"
        )
    if x.shape[0] < 2:
        raise DataError("cca needs at least 2 rows")
    if not np.isfinite(gamma) or gamma < 0:
        raise DataError(f"gamma must be a finite non-negative float, got {gamma!r}")

    n = x.shape[0]
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = _centered(x)
    yc = _centered(y)
    f = 1.0 / (n - 1)
    cxx = xc.T @ xc * f
    cyy = yc.T @ yc * f
    cxy = xc.T @ yc * f

    dx = x.shape[1]
    dy = y.shape[1]
    wx, rank_x = _inv_sqrt(cxx, gamma * np.trace(cxx) / dx)
    wy, rank_y = _inv_sqrt(cyy, gamma * np.trace(cyy) / dy)
    r = min(rank_x, rank_y)
    if r == 0:
        return CcaResult(
            a=np.zeros((dx, 0)),
            b=np.zeros((dy, 0)),
            rho=np.zeros(0),
            x_mean=x_mean,
            y_mean=y_mean,
        )

    u, s, vt = np.linalg.svd(wx @ cxy @ wy)
    a = wx @ u[:, :r]
    b = wy @ vt[:r].T
    rho = np.clip(s[:r], 0.0, 1.0)

    # A singular direction can land in the null space of the pseudo-inverse
    # square root when the cross-covariance is (near) zero; drop such
    # trailing columns so every returned column has non-zero norm.
    norms = np.sqrt((a * a).sum(axis=0)) * np.sqrt((b * b).sum(axis=0))
    while r > 0 and norms[r - 1] == 0.0:
        r -= 1
    a = a[:, :r]
    b = b[:, :r]
    rho = rho[:r]

    for j in range(r):
        col = a[:, j]
        nz = np.flatnonzero(col)
        if nz.size and col[nz[0]] < 0:
            a[:, j] = -col
            b[:, j] = -b[:, j]

    return CcaResult(a=a, b=b, rho=rho, x_mean=x_mean, y_mean=y_mean)


def project(m, components: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Apply fitted canonical directions to new rows: (m - mean) @ components."""
    m = as_matrix(m, "matrix")
    components = np.asarray(components, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if components.ndim != 2:
        raise DataError("components must be a 2-D (columns = directions) array")
    if m.shape[1] != components.shape[0]:
        raise DataError(
            f"matrix has {m.shape[1]} column(s) but components expect "
            f"{components.shape[0]}"
        )
    if mean.shape != (m.shape[1],):
        raise DataError(f"mean must have shape ({m.shape[1]},), got {mean.shape}")
    return (m - mean) @ components
