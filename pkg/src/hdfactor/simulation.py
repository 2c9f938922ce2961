"""Monte Carlo engine: data generation, factor-count frequency grids,
eigenvalue-error studies, ratio traces, and one-step vs two-step comparisons.

Replications are independent: each one draws its own generator seeded from
the base seed and the replication's coordinates (cell parameters and rep
index), so results do not depend on execution order or worker count, and
reruns are bit-identical.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import DimensionError, DomainError
from .estimation import (
    _m_from_values,
    _top_eigenvectors,
    default_ratio_span,
    m_eigenvalues,
    population_m,
    ratio_estimate,
)
from .panel import Panel

__all__ = [
    "Scenario",
    "SimulationTruth",
    "McResult",
    "EigenErrorStudy",
    "RatioTraceStudy",
    "TwoStepStudy",
    "SlopeFit",
    "generate",
    "run_table1",
    "eigen_error_study",
    "fit_error_slopes",
    "ratio_trace_study",
    "two_step_study",
    "derive_seed",
    "worker_count",
    "GENERATOR_ID",
    "FACTOR_BURN_IN",
]

FACTOR_BURN_IN = 200       # VAR(1) warm-up discarded so factors start stationary
GENERATOR_ID = "numpy.random.PCG64"
LOADING_SCHEMES = ("uniform-scaled", "all-ones")
TABLE1_AR_COEFFS = (0.6, -0.5, 0.3)


@dataclass(frozen=True)
class Scenario:
    """One simulation design: dimensions, factor strengths, dynamics, seed.

    ``deltas[j]`` is the strength exponent of factor j: its loading column
    is drawn entrywise from U[-1, 1] and divided by p**(delta/2), so the
    squared column norm grows like p**(1-delta).  Strength 0 is a strong
    factor loading on most series; larger deltas thin the loading out.
    The factor process is a diagonal VAR(1) with unit-variance Gaussian
    innovations, and the noise is i.i.d. Gaussian.
    """

    n: int
    p: int
    r: int
    deltas: tuple
    ar_coeffs: tuple
    noise_var: float = 1.0
    k0: int = 1
    loading_scheme: str = "uniform-scaled"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "ar_coeffs", tuple(float(a) for a in self.ar_coeffs))
        if self.n < 4:
            raise DomainError(f"need n >= 4, got {self.n}")
        if not 1 <= self.r <= self.p:
            raise DomainError(f"need p >= r >= 1, got p={self.p}, r={self.r}")
        if len(self.deltas) != self.r or len(self.ar_coeffs) != self.r:
            raise DimensionError("deltas and ar_coeffs must have one entry per factor")
        if any(not 0 <= d <= 1 for d in self.deltas):
            raise DomainError("factor strengths must lie in [0, 1]")
        if any(abs(a) >= 1 for a in self.ar_coeffs):
            raise DomainError("AR coefficients must lie strictly inside (-1, 1)")
        if self.noise_var < 0:
            raise DomainError("noise variance cannot be negative")
        if not 1 <= self.k0 <= self.n - 2:
            raise DomainError(f"k0 must be in [1, n-2] = [1, {self.n - 2}], got {self.k0}")
        if self.loading_scheme not in LOADING_SCHEMES:
            raise DomainError(f"loading scheme must be one of {LOADING_SCHEMES}")
        if self.loading_scheme == "all-ones" and self.r != 1:
            raise DomainError("all-ones loadings are rank one; they require r = 1")


@dataclass(frozen=True)
class SimulationTruth:
    """The latent quantities behind one generated panel."""

    loadings: np.ndarray
    factors: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True)
class McResult:
    """Replication summary: factor-count histogram and hit frequency."""

    scenario: Scenario
    reps: int
    r_hat_counts: dict
    freq_correct: float

    def __post_init__(self):
        if sum(self.r_hat_counts.values()) != self.reps:
            raise DomainError("histogram counts must sum to the replication count")
        if not 0.0 <= self.freq_correct <= 1.0:
            raise DomainError("frequency must lie in [0, 1]")


@dataclass(frozen=True)
class EigenErrorStudy:
    """Eigenvalue-estimation errors against the population oracle.

    ``errors[n]`` has one row per replication and one column per tracked
    eigenvalue index, holding estimated minus population value.
    """

    scenario: Scenario
    n_grid: tuple
    p_of_n: dict
    tracked_j: tuple
    errors: dict
    population: dict


@dataclass(frozen=True)
class RatioTraceStudy:
    """Per-replication eigenvalue-ratio sequences over a size grid."""

    scenario: Scenario
    n_grid: tuple
    p_of_n: dict
    traces: dict
    median_ratios: dict


@dataclass(frozen=True)
class TwoStepStudy:
    """One-step vs two-step factor counting on the same replications.

    ``freq_two`` counts replications where the first- and second-pass
    counts sum to the true number of factors.  ``freq_two_sharp`` only
    accepts the second-pass factors when that pass shows a sharp minimum
    (smallest ratio at most 0.5), mirroring how a practitioner reads the
    second-pass ratio plot before adding factors.
    """

    scenario: Scenario
    reps: int
    one_step_counts: dict
    pair_counts: dict
    freq_one: float
    freq_two: float
    freq_two_sharp: float


@dataclass(frozen=True)
class SlopeFit:
    """Log-log OLS slope of median absolute error against sample size."""

    j: int
    slope: float
    ci_low: float
    ci_high: float


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from integer coordinates.

    Built on the hash tree of ``numpy.random.SeedSequence`` so that
    replication streams are independent of grid order and worker count.
    """
    seq = np.random.SeedSequence(tuple(int(x) for x in parts))
    return int(seq.generate_state(1, np.uint64)[0])


def _delta_code(delta: float) -> int:
    return int(round(float(delta) * 1_000_000))


def worker_count(default: Optional[int] = None) -> int:
    """Worker cap for replication pools, from HDFACTOR_THREADS when set."""
    env = os.environ.get("HDFACTOR_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise DomainError(f"HDFACTOR_THREADS must be an integer, got {env!r}") from None
        return max(1, value)
    if default is not None:
        return max(1, default)
    return os.cpu_count() or 1


def _map_reps(task: Callable[[int], object], reps: int, workers: Optional[int]) -> list:
    """Run ``task(rep)`` for rep = 0..reps-1, results in rep order."""
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or reps <= 1:
        return [task(rep) for rep in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(reps)))


def generate(scenario: Scenario):
    """Draw one panel from the scenario, returning it with its truth.

    Draw order is fixed (loadings, factor innovations, noise) so a seed
    pins the panel bitwise.  The factor VAR(1) starts from zero and a
    200-step warm-up is discarded, leaving the retained stretch at the
    stationary distribution for practical purposes.
    """
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
    p, n, r = scenario.p, scenario.n, scenario.r
    if scenario.loading_scheme == "all-ones":
        loadings = np.ones((p, r))
    else:
        loadings = rng.uniform(-1.0, 1.0, size=(p, r))
        for j in range(r):
            loadings[:, j] /= p ** (scenario.deltas[j] / 2.0)
    innovations = rng.standard_normal((r, n + FACTOR_BURN_IN))
    factors = np.empty_like(innovations)
    for j in range(r):
        factors[j] = lfilter([1.0], [1.0, -scenario.ar_coeffs[j]], innovations[j])
    factors = factors[:, FACTOR_BURN_IN:]
    noise = rng.standard_normal((p, n)) * math.sqrt(scenario.noise_var)
    panel = Panel(loadings @ factors + noise)
    return panel, SimulationTruth(loadings=loadings, factors=factors, noise=noise)


def _replicated(scenario: Scenario, *coords: int) -> Scenario:
    return replace(scenario, seed=derive_seed(scenario.seed, *coords))


def _count_result(scenario: Scenario, reps: int, r_hats: Sequence[int]) -> McResult:
    counts: dict = {}
    for r_hat in r_hats:
        counts[int(r_hat)] = counts.get(int(r_hat), 0) + 1
    freq = sum(1 for r_hat in r_hats if r_hat == scenario.r) / reps
    return McResult(
        scenario=scenario,
        reps=reps,
        r_hat_counts=dict(sorted(counts.items())),
        freq_correct=freq,
    )


def run_table1(
    deltas: Sequence[float],
    n_grid: Sequence[int],
    p_rules: Sequence[float],
    reps: int,
    base_seed: int,
    *,
    r: int = 3,
    ar_coeffs: Sequence[float] = TABLE1_AR_COEFFS,
    noise_var: float = 1.0,
    k0: int = 1,
    workers: Optional[int] = None,
) -> list:
    """Frequency grid of correct factor counts over (delta, n, p-rule) cells.

    Each cell runs ``reps`` independent replications of generate-and-count
    with dimension ``p = round(rule * n)``; a cell's replication seeds are
    derived from the base seed and the cell coordinates, so any subset of
    cells can be recomputed in isolation.

    Returns a list of ``(delta, n, p, p_rule, McResult)`` tuples in grid
    order.
    """
    if reps < 1:
        raise DomainError("need at least one replication")
    cells = []
    for delta in deltas:
        for n in n_grid:
            for rule in p_rules:
                p = int(round(rule * n))
                cell = Scenario(
                    n=n,
                    p=p,
                    r=r,
                    deltas=(float(delta),) * r,
                    ar_coeffs=tuple(ar_coeffs),
                    noise_var=noise_var,
                    k0=k0,
                    seed=base_seed,
                )

                def one_rep(rep: int, cell=cell, delta=delta, n=n, p=p) -> int:
                    scn = _replicated(cell, _delta_code(delta), n, p, rep)
                    panel, _ = generate(scn)
                    lam = m_eigenvalues(panel.values, scn.k0)
                    r_hat, _ = ratio_estimate(lam, default_ratio_span(p))
                    return r_hat

                r_hats = _map_reps(one_rep, reps, workers)
                cells.append((float(delta), int(n), p, float(rule), _count_result(cell, reps, r_hats)))
    return cells


def _resolve_p(scenario: Scenario, n: int, p_coef: Optional[float]) -> int:
    return scenario.p if p_coef is None else int(round(p_coef * n))


def eigen_error_study(
    scenario: Scenario,
    n_grid: Sequence[int],
    tracked_j: Sequence[int],
    reps: int,
    *,
    p_coef: Optional[float] = None,
    workers: Optional[int] = None,
) -> EigenErrorStudy:
    """Errors of the leading eigenvalue estimates against the oracle.

    Requires the all-ones loading scheme: with a deterministic loading
    matrix the population spectrum is available in closed form, so each
    replication contributes exact errors rather than differences between
    two estimates.  ``p_coef`` scales the dimension with n (p = coef * n);
    when omitted, the scenario's fixed p is reused across the grid.
    """
    if scenario.loading_scheme != "all-ones":
        raise DomainError(
            "eigen-error study needs the all-ones loading scheme so the population spectrum is exact"
        )
    tracked_j = tuple(int(j) for j in tracked_j)
    errors: dict = {}
    p_of_n: dict = {}
    population: dict = {}
    for n in n_grid:
        p = _resolve_p(scenario, n, p_coef)
        if max(tracked_j) > p:
            raise DomainError(f"tracked index {max(tracked_j)} exceeds dimension {p}")
        cell = replace(scenario, n=int(n), p=p)
        _, lam_pop = population_m(np.ones((p, scenario.r)), cell.ar_coeffs, cell.k0)

        def one_rep(rep: int, cell=cell, n=n, p=p, lam_pop=lam_pop):
            scn = _replicated(cell, n, p, rep)
            panel, _ = generate(scn)
            lam = m_eigenvalues(panel.values, scn.k0)
            return np.array([lam[j - 1] - lam_pop[j - 1] for j in tracked_j])

        rows = _map_reps(one_rep, reps, workers)
        errors[int(n)] = np.vstack(rows)
        p_of_n[int(n)] = p
        population[int(n)] = lam_pop[[j - 1 for j in tracked_j]]
    return EigenErrorStudy(
        scenario=scenario,
        n_grid=tuple(int(n) for n in n_grid),
        p_of_n=p_of_n,
        tracked_j=tracked_j,
        errors=errors,
        population=population,
    )


def fit_error_slopes(study: EigenErrorStudy, confidence_z: float = 1.96) -> list:
    """OLS slope of log median absolute error against log n, per tracked j.

    Medians tame the heavy tails of eigenvalue errors; the interval is the
    usual OLS slope interval at the given normal quantile.
    """
    if len(study.n_grid) < 3:
        raise DomainError("need at least three grid points to fit a slope")
    log_n = np.log(np.asarray(study.n_grid, dtype=float))
    fits = []
    for col, j in enumerate(study.tracked_j):
        med = np.array([np.median(np.abs(study.errors[n][:, col])) for n in study.n_grid])
        if np.any(med <= 0):
            raise DomainError(f"median error for eigenvalue {j} is zero; cannot take logs")
        log_med = np.log(med)
        design = np.column_stack([np.ones_like(log_n), log_n])
        coef, *_ = np.linalg.lstsq(design, log_med, rcond=None)
        fitted = design @ coef
        dof = len(log_n) - 2
        resid_var = ((log_med - fitted) ** 2).sum() / max(dof, 1)
        slope_se = math.sqrt(resid_var / ((log_n - log_n.mean()) ** 2).sum())
        fits.append(
            SlopeFit(
                j=j,
                slope=float(coef[1]),
                ci_low=float(coef[1] - confidence_z * slope_se),
                ci_high=float(coef[1] + confidence_z * slope_se),
            )
        )
    return fits


def ratio_trace_study(
    scenario: Scenario,
    n_grid: Sequence[int],
    reps: int,
    *,
    p_coef: Optional[float] = None,
    workers: Optional[int] = None,
) -> RatioTraceStudy:
    """Full eigenvalue-ratio sequences per replication over a size grid."""
    traces: dict = {}
    medians: dict = {}
    p_of_n: dict = {}
    for n in n_grid:
        p = _resolve_p(scenario, n, p_coef)
        cell = replace(scenario, n=int(n), p=p)
        span = default_ratio_span(p)

        def one_rep(rep: int, cell=cell, n=n, p=p, span=span):
            scn = _replicated(cell, n, p, rep)
            panel, _ = generate(scn)
            lam = m_eigenvalues(panel.values, scn.k0)
            _, ratios = ratio_estimate(lam, span)
            return ratios

        rows = _map_reps(one_rep, reps, workers)
        traces[int(n)] = np.vstack(rows)
        medians[int(n)] = np.nanmedian(traces[int(n)], axis=0)
        p_of_n[int(n)] = p
    return RatioTraceStudy(
        scenario=scenario,
        n_grid=tuple(int(n) for n in n_grid),
        p_of_n=p_of_n,
        traces=traces,
        median_ratios=medians,
    )


def two_step_study(
    scenario: Scenario, reps: int, *, workers: Optional[int] = None
) -> TwoStepStudy:
    """Compare one-step and two-step factor counting replication by replication.

    Designed for scenarios mixing strong and weak factors, where the
    one-step ratio search tends to stop at the strong ones; it runs on any
    scenario.  Per replication the one-step count doubles as the first-pass
    count, the leading directions are projected out, and the ratio search
    reruns on the deflated panel.
    """
    def one_rep(rep: int):
        scn = _replicated(scenario, scenario.n, scenario.p, rep)
        panel, _ = generate(scn)
        values = panel.values - panel.values.mean(axis=1, keepdims=True)
        m = _m_from_values(values, scn.k0)
        lam = np.linalg.eigvalsh(m)[::-1]
        span = default_ratio_span(scn.p)
        r1, _ = ratio_estimate(lam, span)
        basis = _top_eigenvectors(m, r1)
        deflated = values - basis @ (basis.T @ values)
        lam2 = m_eigenvalues(deflated, scn.k0)
        r2, ratios2 = ratio_estimate(lam2, span)
        sharp = bool(np.nanmin(ratios2) <= 0.5)
        return r1, r2, sharp

    results = _map_reps(one_rep, reps, workers)
    one_counts: dict = {}
    pair_counts: dict = {}
    hits_one = hits_two = hits_sharp = 0
    for r1, r2, sharp in results:
        one_counts[r1] = one_counts.get(r1, 0) + 1
        pair_counts[(r1, r2)] = pair_counts.get((r1, r2), 0) + 1
        hits_one += r1 == scenario.r
        hits_two += r1 + r2 == scenario.r
        hits_sharp += (r1 + r2 if sharp else r1) == scenario.r
    return TwoStepStudy(
        scenario=scenario,
        reps=reps,
        one_step_counts=dict(sorted(one_counts.items())),
        pair_counts=dict(sorted(pair_counts.items())),
        freq_one=hits_one / reps,
        freq_two=hits_two / reps,
        freq_two_sharp=hits_sharp / reps,
    )
