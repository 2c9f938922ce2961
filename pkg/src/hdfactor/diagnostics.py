"""Post-estimation checks: cross-autocorrelations, residual-direction
whiteness, variance shares, and projection of an external series onto the
estimated factor space.

The residual check rests on the defining property of the model: any
direction orthogonal to the loading space carries pure white noise, so
its sample autocorrelations should stay inside the +/-1.96/sqrt(n) band.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .estimation import FactorModel
from .panel import Panel

__all__ = [
    "AcfReport",
    "cross_acf",
    "residual_projection_acf",
    "variance_explained",
    "projection_residual_ratio",
]


@dataclass(frozen=True)
class AcfReport:
    """Sample cross-autocorrelations for every ordered series pair.

    ``acf[i, j, k]`` correlates series i led by k steps with series j,
    for lags k = 0..max_lag.  ``band`` is the pointwise white-noise band
    1.96/sqrt(n) drawn in autocorrelation plots.
    """

    series_ids: tuple
    max_lag: int
    acf: np.ndarray
    band: float


def cross_acf(series, max_lag: int, series_ids: Optional[Sequence[str]] = None) -> AcfReport:
    """Sample cross-correlations at lags 0..max_lag for all ordered pairs.

    Each series is centered by its own mean; the normalization uses the
    full-sample standard deviations (divisor n), which bounds every value
    by one in magnitude.

    Raises
    ------
    DomainError
        If a series is constant (zero variance), naming it.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError(f"series must be 1-D or 2-D, got {x.ndim}-D")
    m, n = x.shape
    if m < 1 or n < 3:
        raise DimensionError(f"need at least one series of length 3, got {m} x {n}")
    if int(max_lag) != max_lag or not 1 <= max_lag <= n - 2:
        raise DomainError(f"max_lag must be in [1, n-2] = [1, {n - 2}], got {max_lag}")
    max_lag = int(max_lag)
    if series_ids is None:
        series_ids = tuple(str(i + 1) for i in range(m))
    else:
        series_ids = tuple(str(s) for s in series_ids)
        if len(series_ids) != m:
            raise DimensionError(f"got {len(series_ids)} ids for {m} series")

    spread = x.max(axis=1) - x.min(axis=1)
    for i, s in enumerate(spread):
        if s == 0.0:
            raise DomainError(f"series {series_ids[i]!r} is constant; autocorrelation is undefined")
    centered = x - x.mean(axis=1, keepdims=True)
    scale = np.sqrt((centered**2).mean(axis=1))

    acf = np.empty((m, m, max_lag + 1))
    denom = np.outer(scale, scale)
    for k in range(max_lag + 1):
        cov_k = centered[:, k:] @ centered[:, : n - k].T / n
        acf[:, :, k] = cov_k / denom
    return AcfReport(
        series_ids=series_ids,
        max_lag=max_lag,
        acf=acf,
        band=1.96 / np.sqrt(n),
    )


def residual_projection_acf(
    model: FactorModel, panel: Panel, directions: Sequence[int], max_lag: int
) -> AcfReport:
    """Cross-ACF of the panel projected on post-factor eigen-directions.

    ``directions`` are 1-based eigenvalue indices of the fitted spectrum;
    each must exceed the estimated factor count (indices at or below it
    are factors, not residual directions).  If the fit removed all serial
    correlation, these projected series behave like white noise.
    """
    if model.eigenvectors is None:
        raise DomainError("model carries no eigenvectors; refit before projecting")
    p = model.eigenvectors.shape[0]
    if panel.p != p:
        raise DimensionError(f"panel has {panel.p} series but model was fit on {p}")
    directions = [int(d) for d in directions]
    for d in directions:
        if d <= model.r_hat:
            raise DomainError(
                f"direction {d} is a factor direction (r_hat = {model.r_hat}), not a residual one"
            )
        if d > p:
            raise DomainError(f"direction {d} exceeds the panel dimension {p}")
    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    basis = model.eigenvectors[:, [d - 1 for d in directions]]
    series = basis.T @ centered
    panel_rms = np.sqrt((centered**2).mean())
    series_rms = np.sqrt((series**2).mean(axis=1))
    for d, rms in zip(directions, series_rms):
        if rms <= 1e-12 * panel_rms:
            raise DomainError(
                f"projection on direction {d} has zero variance relative to the panel"
            )
    return cross_acf(series, max_lag, series_ids=[f"eig{d}" for d in directions])


def variance_explained(model: FactorModel, panel: Panel) -> np.ndarray:
    """Share of total variance carried by each estimated factor direction.

    The share of direction ``g`` is the quadratic form ``g' S g`` over the
    trace of S, where S is the lag-0 sample covariance of the centered
    panel.  Orthonormal directions make the shares sum to at most one.
    """
    if panel.p != model.loadings.shape[0]:
        raise DimensionError(
            f"panel has {panel.p} series but model was fit on {model.loadings.shape[0]}"
        )
    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    total = (centered**2).mean(axis=1).sum()
    if total == 0.0:
        raise DomainError("panel has zero total variance")
    projected = model.loadings.T @ centered
    return (projected**2).mean(axis=1) / total


def projection_residual_ratio(u, factors) -> float:
    """Fraction of an external series orthogonal to the factor-series span.

    Projects ``u`` (length n) onto the orthogonal complement of the row
    span of ``factors`` (r x n) inside R^n and returns the squared-norm
    ratio, a value in [0, 1]: zero means the series is a linear
    combination of the factor series, one means it is orthogonal to them.
    """
    u = np.asarray(u, dtype=float).ravel()
    f = np.asarray(factors, dtype=float)
    if f.ndim == 1:
        f = f[None, :]
    if f.shape[1] != u.size:
        raise DimensionError(
            f"series length {u.size} does not match factor length {f.shape[1]}"
        )
    norm_sq = float(u @ u)
    if norm_sq == 0.0:
        raise DomainError("cannot project a zero series")
    basis, sv, _ = np.linalg.svd(f.T, full_matrices=False)
    if np.any(sv <= 1e-10 * sv[0]):
        raise DomainError("factor rows are rank deficient; the projection is ill-defined")
    coef = basis.T @ u
    residual = u - basis @ coef
    return float(min(max(residual @ residual / norm_sq, 0.0), 1.0))
