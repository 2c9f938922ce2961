"""Core pipeline: lag autocovariances, pooled outer-product matrix, spectrum,
ratio-based factor counting, and factor/residual extraction.

The central object is the p x p matrix built by summing, over lags
k = 1..k0, the outer product of the lag-k sample autocovariance with
itself.  Directions orthogonal to the factor loading space are killed by
every lag-k autocovariance, so the nonzero-eigenvalue eigenspace of this
matrix estimates the loading space and the count of "large" eigenvalues
estimates the number of factors.  The count itself is chosen where the
ratio of consecutive eigenvalues is smallest, exploiting the faster decay
of the estimated zero-eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError
from .panel import Panel

__all__ = [
    "AutocovSet",
    "EigenSystem",
    "FactorModel",
    "sample_autocov",
    "build_m",
    "sym_eigen",
    "ratio_estimate",
    "estimate",
    "two_step_estimate",
    "population_m",
    "default_ratio_span",
    "m_eigenvalues",
]

DEFAULT_K0 = 5
RATIO_FLOOR = 1e-12        # eigenvalues below this fraction of the largest are treated as zero
SYMMETRY_RTOL = 1e-10
STEP2_FLAT_RATIO = 0.5     # reporting flag only: second pass shows no sharp minimum


@dataclass(frozen=True)
class AutocovSet:
    """Sample autocovariances at lags 0..k0 and their pooled matrix.

    Attributes
    ----------
    k0 : int
        Largest lag entering the pooled matrix.
    sigma : tuple of ndarray
        Lag-k sample autocovariance matrices for k = 0..k0.
    m_hat : ndarray, shape (p, p)
        Symmetrized sum over k = 1..k0 of ``sigma[k] @ sigma[k].T``.
    """

    k0: int
    sigma: tuple
    m_hat: np.ndarray

    def __post_init__(self):
        if len(self.sigma) != self.k0 + 1:
            raise DimensionError(
                f"expected {self.k0 + 1} autocovariance matrices, got {len(self.sigma)}"
            )
        scale = np.abs(self.m_hat).max()
        if scale > 0 and np.abs(self.m_hat - self.m_hat.T).max() > 1e-12 * scale:
            raise DomainError("pooled matrix is not symmetric")


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues with orthonormal, sign-normalized eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.eigenvalues) > 0):
            raise DomainError("eigenvalues must be in descending order")


@dataclass(frozen=True)
class FactorModel:
    """Fitted factor decomposition of a panel.

    ``loadings`` has orthonormal columns; ``factors`` is the projection of
    the centered panel onto them, and ``residuals`` is the remainder, so
    ``loadings @ factors + residuals`` reproduces the centered panel.

    For two-step fits, ``eigenvalues``/``ratios`` describe the first pass,
    the ``*_step2`` fields describe the second pass on the deflated panel,
    and ``r_hat == r1_hat + r2_hat``.  ``step2_no_sharp_minimum`` flags a
    second pass whose smallest eigenvalue ratio stays above 0.5, i.e. one
    offering no clear evidence of further factors; it is a report, not a
    decision rule.
    """

    r_hat: int
    loadings: np.ndarray
    factors: np.ndarray
    residuals: np.ndarray
    eigenvalues: np.ndarray
    ratios: np.ndarray
    k0: int
    ratio_span: int
    method: str = "one-step"
    r1_hat: Optional[int] = None
    r2_hat: Optional[int] = None
    eigenvalues_step2: Optional[np.ndarray] = None
    ratios_step2: Optional[np.ndarray] = None
    step2_no_sharp_minimum: Optional[bool] = None
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)


def _validate_lag(n: int, k: int, largest: bool = False) -> None:
    label = "k0" if largest else "lag k"
    low = 1 if largest else 0
    if int(k) != k or k < low or k > n - 2:
        raise DomainError(
            f"{label} must be an integer in [{low}, n-2] = [{low}, {n - 2}], got {k}"
        )


def _lag_cov(values: np.ndarray, k: int, window_centering: bool) -> np.ndarray:
    """Lag-k autocovariance of the columns of ``values`` with divisor n."""
    n = values.shape[1]
    if window_centering and k > 0:
        lead = values[:, k:] - values[:, k:].mean(axis=1, keepdims=True)
        lag = values[:, : n - k] - values[:, : n - k].mean(axis=1, keepdims=True)
    else:
        centered = values - values.mean(axis=1, keepdims=True)
        lead, lag = centered[:, k:], centered[:, : n - k]
    return lead @ lag.T / n


def sample_autocov(panel: Panel, k: int, *, window_centering: bool = False) -> np.ndarray:
    """Lag-k sample autocovariance matrix of the panel, divisor n.

    By default both windows are centered by the full-sample mean.  With
    ``window_centering`` each k-shifted window is centered by its own mean
    instead; the two differ by O(1/n).

    Raises
    ------
    DomainError
        If ``k`` is not in ``[0, n-2]`` (insufficient data).
    """
    _validate_lag(panel.n, k)
    return _lag_cov(panel.values, int(k), window_centering)


def _m_from_values(values: np.ndarray, k0: int, window_centering: bool = False) -> np.ndarray:
    p, n = values.shape
    m = np.zeros((p, p))
    for k in range(1, k0 + 1):
        sigma_k = _lag_cov(values, k, window_centering)
        m += sigma_k @ sigma_k.T
    return (m + m.T) / 2


def build_m(panel: Panel, k0: int, *, window_centering: bool = False) -> AutocovSet:
    """Assemble the pooled lag-autocovariance matrix for lags 1..k0.

    Each lag contributes the nonnegative-definite ``sigma_k @ sigma_k.T``
    so that information from different lags cannot cancel.  The sum is
    explicitly symmetrized to guard against floating-point asymmetry
    before the eigensolve.
    """
    _validate_lag(panel.n, k0, largest=True)
    k0 = int(k0)
    sigma = tuple(
        _lag_cov(panel.values, k, window_centering) for k in range(k0 + 1)
    )
    m = np.zeros((panel.p, panel.p))
    for k in range(1, k0 + 1):
        m += sigma[k] @ sigma[k].T
    m = (m + m.T) / 2
    return AutocovSet(k0=k0, sigma=sigma, m_hat=m)


def _normalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude (first on ties) is positive."""
    vectors = vectors.copy()
    lead = np.abs(vectors).argmax(axis=0)
    flip = vectors[lead, np.arange(vectors.shape[1])] < 0
    vectors[:, flip] *= -1
    return vectors


def sym_eigen(m: np.ndarray) -> EigenSystem:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    The sign of each eigenvector is fixed deterministically: its entry of
    largest magnitude (lowest index on ties) is made positive, so results
    are reproducible across runs and platforms.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    if scale > 0 and np.abs(m - m.T).max() > SYMMETRY_RTOL * scale:
        raise DomainError("matrix is not symmetric within 1e-10 relative tolerance")
    m = (m + m.T) / 2
    values, vectors = np.linalg.eigh(m)  # ascending
    values = values[::-1].copy()
    vectors = _normalize_signs(vectors[:, ::-1])
    return EigenSystem(eigenvalues=values, eigenvectors=vectors)


def _top_eigenvectors(m: np.ndarray, count: int) -> np.ndarray:
    """Sign-normalized eigenvectors of the ``count`` largest eigenvalues."""
    p = m.shape[0]
    _, vectors = scipy.linalg.eigh(m, subset_by_index=[p - count, p - 1])
    return _normalize_signs(vectors[:, ::-1])


def default_ratio_span(p: int) -> int:
    """Default search span for the ratio estimator: floor(p/2), capped at p-1."""
    return min(max(1, p // 2), p - 1)


def ratio_estimate(eigenvalues: Sequence[float], ratio_span: Optional[int] = None):
    """Estimate the number of factors from a descending spectrum.

    Returns ``(r_hat, ratios)`` where ``ratios[i-1]`` is the ratio of the
    (i+1)-th to the i-th largest eigenvalue for i = 1..ratio_span and
    ``r_hat`` is the index minimizing it.  Indices whose eigenvalue is
    numerically zero (below 1e-12 of the largest) are excluded from the
    search and carry NaN in the ratio trace; the minimum eigenvalue is
    expected to be practically zero in high dimensions, and dividing by it
    would produce spurious minima.  Ties go to the smallest index.

    Parameters
    ----------
    eigenvalues : sequence of float
        Descending, nonnegative up to solver roundoff; small negatives are
        clamped to zero.
    ratio_span : int, optional
        Largest index searched (the constant R).  Defaults to
        ``min(max(1, p // 2), p - 1)``.
    """
    lam = np.asarray(eigenvalues, dtype=float).copy()
    p = lam.size
    if p < 2:
        raise DimensionError("ratio estimation needs at least two eigenvalues")
    if np.any(np.diff(lam) > 1e-12 * max(abs(lam[0]), 1e-300)):
        raise DomainError("eigenvalues must be in descending order")
    if (lam[0] > 0 and lam.min() < -1e-8 * lam[0]) or lam[0] < -1e-300:
        raise DomainError("spectrum has a significantly negative eigenvalue; matrix is not PSD")
    np.clip(lam, 0.0, None, out=lam)
    if lam[0] < 1e-300:
        raise DomainError("degenerate spectrum: all eigenvalues are numerically zero")
    if ratio_span is None:
        ratio_span = default_ratio_span(p)
    ratio_span = int(ratio_span)
    if not 1 <= ratio_span <= p - 1:
        raise DomainError(f"ratio span must be in [1, p-1] = [1, {p - 1}], got {ratio_span}")

    floor = RATIO_FLOOR * lam[0]
    ratios = np.full(ratio_span, np.nan)
    eligible = lam[:ratio_span] > floor
    ratios[eligible] = lam[1 : ratio_span + 1][eligible] / lam[:ratio_span][eligible]
    r_hat = int(np.nanargmin(ratios)) + 1
    return r_hat, ratios


def m_eigenvalues(values: np.ndarray, k0: int, *, window_centering: bool = False) -> np.ndarray:
    """Descending spectrum of the pooled matrix, skipping eigenvector work.

    Fast path for Monte Carlo studies; agrees with the full decomposition
    in exact arithmetic.
    """
    m = _m_from_values(np.asarray(values, dtype=float), int(k0), window_centering)
    return np.linalg.eigvalsh(m)[::-1]


def _fit_from_spectrum(centered, eigen, r_hat, ratios, k0, span, **extra) -> FactorModel:
    loadings = eigen.eigenvectors[:, :r_hat]
    factors = loadings.T @ centered
    residuals = centered - loadings @ factors
    return FactorModel(
        r_hat=r_hat,
        loadings=loadings,
        factors=factors,
        residuals=residuals,
        eigenvalues=eigen.eigenvalues,
        ratios=ratios,
        k0=k0,
        ratio_span=span,
        eigenvectors=eigen.eigenvectors,
        **extra,
    )


def estimate(
    panel: Panel,
    k0: int = DEFAULT_K0,
    ratio_span: Optional[int] = None,
    *,
    window_centering: bool = False,
) -> FactorModel:
    """One-step fit: count factors and extract loadings, factors, residuals.

    The panel is centered internally; the loadings are the eigenvectors of
    the pooled lag-autocovariance matrix paired with its ``r_hat`` largest
    eigenvalues, the factor series is their projection of the centered
    panel, and the residuals are the orthogonal remainder.

    A univariate panel (p = 1) is a degenerate special case: the ratio
    search needs at least two eigenvalues, so the single direction is
    reported as the one factor with an empty ratio trace.
    """
    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    if panel.p == 1:
        _validate_lag(panel.n, k0, largest=True)
        variance = float(centered[0] @ centered[0] / panel.n)
        if variance < 1e-300:
            raise DomainError("degenerate spectrum: the single series has zero variance")
        return FactorModel(
            r_hat=1,
            loadings=np.ones((1, 1)),
            factors=centered.copy(),
            residuals=np.zeros_like(centered),
            eigenvalues=m_eigenvalues(panel.values, int(k0)),
            ratios=np.empty(0),
            k0=int(k0),
            ratio_span=0,
            eigenvectors=np.ones((1, 1)),
        )
    autocov = build_m(panel, k0, window_centering=window_centering)
    eigen = sym_eigen(autocov.m_hat)
    span = default_ratio_span(panel.p) if ratio_span is None else int(ratio_span)
    r_hat, ratios = ratio_estimate(eigen.eigenvalues, span)
    return _fit_from_spectrum(centered, eigen, r_hat, ratios, autocov.k0, span)


def two_step_estimate(
    panel: Panel,
    k0: int = DEFAULT_K0,
    ratio_span: Optional[int] = None,
    r1_override: Optional[int] = None,
    *,
    window_centering: bool = False,
) -> FactorModel:
    """Two-step fit for factors of mixed strength.

    Step one runs the one-step fit and keeps its ``r1`` leading directions
    (``r1_override`` replaces the estimated count when given).  Step two
    projects those directions out of the panel, reruns the same pipeline
    on the deflated data, and appends the ``r2`` leading directions found
    there.  The combined loading matrix stays orthonormal because the
    deflated panel lives in the orthogonal complement of the first-pass
    directions.
    """
    if panel.p == 1:
        raise DomainError("two-step estimation is degenerate for a univariate panel")
    first = estimate(panel, k0, ratio_span, window_centering=window_centering)
    r1 = first.r_hat if r1_override is None else int(r1_override)
    if not 1 <= r1 <= panel.p - 1:
        raise DomainError(f"first-pass factor count must be in [1, p-1], got {r1}")
    loadings1 = first.eigenvectors[:, :r1]

    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    deflated = centered - loadings1 @ (loadings1.T @ centered)
    m2 = _m_from_values(deflated, int(k0), window_centering)
    eigen2 = sym_eigen(m2)
    span = first.ratio_span
    r2, ratios2 = ratio_estimate(eigen2.eigenvalues, span)
    loadings2 = eigen2.eigenvectors[:, :r2]

    loadings = np.hstack([loadings1, loadings2])
    factors = loadings.T @ centered
    residuals = centered - loadings @ factors
    return FactorModel(
        r_hat=r1 + r2,
        loadings=loadings,
        factors=factors,
        residuals=residuals,
        eigenvalues=first.eigenvalues,
        ratios=first.ratios,
        k0=int(k0),
        ratio_span=span,
        method="two-step",
        r1_hat=r1,
        r2_hat=r2,
        eigenvalues_step2=eigen2.eigenvalues,
        ratios_step2=ratios2,
        step2_no_sharp_minimum=bool(np.nanmin(ratios2) > STEP2_FLAT_RATIO),
        eigenvectors=first.eigenvectors,
    )


def population_m(loadings: np.ndarray, ar_coeffs: Sequence[float], k0: int):
    """Population pooled matrix for a diagonal AR(1) factor process.

    With unit-variance innovations and factors uncorrelated with the
    noise, the lag-k model autocovariance is ``A diag(theta^k/(1-theta^2)) A'``
    and the pooled matrix has exactly ``r`` nonzero eigenvalues.  Used as
    the oracle in convergence-rate experiments.

    Returns
    -------
    (m, eigenvalues) : ndarray pair
        The p x p matrix and its descending spectrum.
    """
    loadings = np.asarray(loadings, dtype=float)
    if loadings.ndim == 1:
        loadings = loadings[:, None]
    theta = np.asarray(ar_coeffs, dtype=float)
    if theta.ndim != 1 or theta.size != loadings.shape[1]:
        raise DimensionError(
            f"need one AR coefficient per factor, got {theta.size} for {loadings.shape[1]} factors"
        )
    if np.any(np.abs(theta) >= 1):
        raise DomainError("AR coefficients must lie strictly inside (-1, 1)")
    if int(k0) != k0 or k0 < 1:
        raise DomainError(f"k0 must be a positive integer, got {k0}")
    var0 = 1.0 / (1.0 - theta**2)
    p = loadings.shape[0]
    m = np.zeros((p, p))
    for k in range(1, int(k0) + 1):
        sigma_k = (loadings * (theta**k * var0)) @ loadings.T
        m += sigma_k @ sigma_k.T
    m = (m + m.T) / 2
    return m, np.linalg.eigvalsh(m)[::-1]
