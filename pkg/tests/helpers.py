"""Shared scenario builders and brute-force oracles for the test suite."""

import numpy as np

from hdfactor import Scenario


def s1_scenario(n, p=None, seed=0):
    """Single strong factor: all-ones loadings, AR(1) coefficient 0.7."""
    return Scenario(
        n=n,
        p=n // 2 if p is None else p,
        r=1,
        deltas=(0.0,),
        ar_coeffs=(0.7,),
        k0=1,
        loading_scheme="all-ones",
        seed=seed,
    )


def table1_scenario(n, p, delta=0.0, seed=0):
    """Three equal-strength factors with AR coefficients (0.6, -0.5, 0.3)."""
    return Scenario(
        n=n,
        p=p,
        r=3,
        deltas=(delta, delta, delta),
        ar_coeffs=(0.6, -0.5, 0.3),
        k0=1,
        seed=seed,
    )


def s3_scenario(n, p, seed=0):
    """Two strong factors plus one weak (strength exponent 0.5)."""
    return Scenario(
        n=n,
        p=p,
        r=3,
        deltas=(0.0, 0.0, 0.5),
        ar_coeffs=(0.6, -0.5, 0.3),
        k0=1,
        seed=seed,
    )


def naive_autocov(values, k):
    """O(n p^2) double-loop lag-k autocovariance with full-sample centering."""
    values = np.asarray(values, dtype=float)
    p, n = values.shape
    mean = values.mean(axis=1)
    out = np.zeros((p, p))
    for t in range(n - k):
        lead = values[:, t + k] - mean
        lag = values[:, t] - mean
        for i in range(p):
            for j in range(p):
                out[i, j] += lead[i] * lag[j]
    return out / n


def random_orthogonal(size, seed):
    """Haar-ish orthogonal matrix from a QR factorization."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    return q * np.sign(np.diag(r))
