"""Metrics, functionals and convergence-rate fits.

Transport distances: exact quantile coupling in 1d, random-projection
surrogate in higher dimension, and an exact linear program for the
bounded-Lipschitz metric on small supports.  Energy functionals follow the
gradient-flow structure of the system; the coupling constant and the
epsilon(N) schedule encode the particle-limit bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, StatisticsError, SupportSizeError
from .field import ScalarField, convolve, lp_norm
from .kernel import Mollifier
from .model import ModelParams
from .pde import FieldTrajectory

ENTROPY_FLOOR = 1e-300   # cells below this contribute 0 to rho*log(rho)
BL_MAX_SUPPORT = 200
OVERFLOW_EXPONENT = 700.0


@dataclass(frozen=True)
class MetricSeries:
    """Labelled (abscissa, value) series with optional standard errors."""

    label: str
    abscissae: tuple[float, ...]
    values: tuple[float, ...]
    stderrs: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.abscissae) != len(self.values):
            raise DomainError("abscissae and values must align")
        diffs = np.diff(np.asarray(self.abscissae))
        if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise DomainError("abscissae must be strictly monotone")
        if self.stderrs and len(self.stderrs) != len(self.values):
            raise DomainError("stderrs must align with values")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float


def fit_rate(series: MetricSeries) -> RateFit:
    """Least-squares slope on log-log data; needs >= 4 positive points."""
    x = np.asarray(series.abscissae, dtype=float)
    y = np.asarray(series.values, dtype=float)
    if len(x) < 4:
        raise StatisticsError("rate fit needs at least 4 points")
    if np.any(y <= 0) or np.any(x <= 0):
        raise DomainError("rate fit needs positive abscissae and values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), r2)


def w2_empirical_1d(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """Exact quadratic transport distance between equal-size 1d samples."""
    a = np.asarray(samples_a, dtype=float).reshape(-1)
    b = np.asarray(samples_b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise StatisticsError("sample counts must match")
    return float(np.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2)))


def w2_sliced(samples_a: np.ndarray, samples_b: np.ndarray,
              n_projections: int, rng: np.random.Generator) -> float:
    """Root-mean of squared 1d distances over random unit projections."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.shape != b.shape:
        raise StatisticsError("sample shapes must match")
    dim = a.shape[1]
    if dim < 2:
        raise DomainError("sliced distance needs dim >= 2; use the 1d version")
    dirs = rng.standard_normal((n_projections, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    return float(np.sqrt(np.mean((pa - pb) ** 2)))


def bl_distance(support_a: np.ndarray, weights_a: np.ndarray,
                support_b: np.ndarray, weights_b: np.ndarray) -> float:
    """Bounded-Lipschitz distance between small discrete measures.

    Maximizes sum f d(mu - nu) over |f| <= 1 with Lipschitz constant 1,
    solved as a linear program on the union of supports.
    """
    def as_support(x):
        arr = np.asarray(x, dtype=float)
        return arr.reshape(-1, 1) if arr.ndim == 1 else arr

    xa = as_support(support_a)
    xb = as_support(support_b)
    wa = np.asarray(weights_a, dtype=float)
    wb = np.asarray(weights_b, dtype=float)
    pts = np.vstack([xa, xb])
    signed = np.concatenate([wa, -wb])
    if pts.shape[0] > 2 * BL_MAX_SUPPORT:
        raise SupportSizeError(
            f"support of {pts.shape[0]} points exceeds the exact-solver limit")
    n = pts.shape[0]
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    iu = np.triu_indices(n, k=1)
    n_pairs = len(iu[0])
    # maximize signed . f -> minimize -signed . f, |f_i - f_j| <= d_ij
    rows = np.arange(n_pairs)
    a_ub = np.zeros((2 * n_pairs, n))
    a_ub[rows, iu[0]] = 1.0
    a_ub[rows, iu[1]] = -1.0
    a_ub[n_pairs + rows, iu[0]] = -1.0
    a_ub[n_pairs + rows, iu[1]] = 1.0
    b_ub = np.concatenate([dist[iu], dist[iu]])
    res = linprog(-signed, A_ub=a_ub, b_ub=b_ub, bounds=[(-1.0, 1.0)] * n,
                  method="highs")
    if not res.success:
        raise StatisticsError(f"linear program failed: {res.message}")
    return float(-res.fun)


def _entropy(values: np.ndarray, cell_volume: float) -> float:
    v = values[values > ENTROPY_FLOOR]
    return float(np.sum(v * np.log(v)) * cell_volume)


def energy_local(fields: list[ScalarField], params: ModelParams) -> float:
    """Free energy: pressure power term plus weighted entropy terms."""
    grid = fields[0].grid
    a = np.asarray(params.a)
    s = np.tensordot(a, np.stack([f.values for f in fields]), axes=(0, 0))
    vol = grid.cell_volume
    bulk = float(np.sum(np.maximum(s, 0.0) ** params.m_exponent) * vol) \
        / params.m_exponent
    ent = sum((params.a[k] / params.b[k]) * params.sigma
              * _entropy(fields[k].values, vol)
              for k in range(params.n_species))
    return bulk + ent


def energy_regularised(fields: list[ScalarField], params: ModelParams,
                       mol: Mollifier) -> float:
    """Same functional with the kernel-smoothed densities in the power term."""
    grid = fields[0].grid
    a = np.asarray(params.a)
    smoothed = np.stack([convolve(f, mol).values for f in fields])
    s = np.tensordot(a, smoothed, axes=(0, 0))
    vol = grid.cell_volume
    bulk = float(np.sum(np.maximum(s, 0.0) ** params.m_exponent) * vol) \
        / params.m_exponent
    ent = sum((params.a[k] / params.b[k]) * params.sigma
              * _entropy(fields[k].values, vol)
              for k in range(params.n_species))
    return bulk + ent


def coupling_constant(eps: float, t: float, d: int, m: float) -> float:
    """Pathwise-gap constant eps^(6+2d(m-1)) * exp(t / eps^(4+2d(m-1))).

    Prefactor-1 convention; returns +inf when the exponent overflows.
    """
    if eps <= 0 or t < 0:
        raise DomainError("eps must be positive and t nonnegative")
    p_out = 6.0 + 2.0 * d * (m - 1.0)
    p_in = 4.0 + 2.0 * d * (m - 1.0)
    arg = t / eps ** p_in
    if arg > OVERFLOW_EXPONENT:
        return float("inf")
    return eps ** p_out * np.exp(arg)


def eps_schedule(n_particles: int, t: float, d: int, m: float) -> float:
    """Kernel width shrinking logarithmically in N.

    Calibrated so the exponential factor of the coupling constant equals
    sqrt(N), which sends constant/N to zero along the schedule.
    """
    if n_particles < 3:
        raise DomainError("schedule needs N >= 3")
    p_in = 4.0 + 2.0 * d * (m - 1.0)
    return float((2.0 * t / np.log(n_particles)) ** (1.0 / p_in))


def chaos_gap(snapshots: np.ndarray, m_marginal: int = 2,
              n_projections: int = 64,
              rng: np.random.Generator | None = None) -> float:
    """Pair-law versus product-law distance from replica snapshots.

    ``snapshots`` has shape (replicas, N, dim).  The two-particle empirical
    law stacks disjoint particle pairs; the product law re-pairs the second
    components across replicas (cyclic shift), which breaks any within-replica
    dependence while keeping both marginals.
    """
    snaps = np.asarray(snapshots, dtype=float)
    if snaps.ndim != 3:
        raise StatisticsError("snapshots must have shape (replicas, N, dim)")
    if m_marginal == 1:
        return 0.0
    if m_marginal != 2:
        raise DomainError("only pair marginals are implemented")
    n_rep, n_part, dim = snaps.shape
    if n_part < 2:
        raise StatisticsError("need at least 2 particles per species")
    if n_rep < 100:
        raise StatisticsError("need at least 100 replicas")
    rng = rng or np.random.default_rng(0)
    n_pairs = n_part // 2
    first = snaps[:, 0:2 * n_pairs:2, :]
    second = snaps[:, 1:2 * n_pairs:2, :]
    paired = np.concatenate([first, second], axis=2).reshape(-1, 2 * dim)
    product = np.concatenate([first, np.roll(second, 1, axis=0)],
                             axis=2).reshape(-1, 2 * dim)
    return w2_sliced(paired, product, n_projections, rng)


def monotone_defect(values) -> float:
    """Largest rise above the running minimum; 0 for a nonincreasing series."""
    vals = np.asarray(values, dtype=float)
    running_min = np.minimum.accumulate(vals)
    return float(np.max(vals - running_min))


def energy_series(traj: FieldTrajectory, params: ModelParams,
                  mol: Mollifier | None = None,
                  label: str | None = None) -> MetricSeries:
    """Free energy along a trajectory; regularised version when mol is given."""
    vals = []
    for j in range(traj.n_steps + 1):
        fields = traj.snapshot(j)
        if mol is None:
            vals.append(energy_local(fields, params))
        else:
            vals.append(energy_regularised(fields, params, mol))
    name = label or ("energy_regularised" if mol else "energy_local")
    return MetricSeries(name, tuple(traj.times.tolist()), tuple(vals))


def apriori_series(traj: FieldTrajectory, params: ModelParams,
                   mol: Mollifier) -> MetricSeries:
    """m-th power of the L^m norm of the weighted smoothed sum over time."""
    a = np.asarray(params.a)
    vals = []
    for j in range(traj.n_steps + 1):
        smoothed = np.stack([convolve(f, mol).values for f in traj.snapshot(j)])
        s = np.tensordot(a, smoothed, axes=(0, 0))
        norm = lp_norm(ScalarField(traj.grid, s), params.m_exponent)
        vals.append(norm ** params.m_exponent)
    return MetricSeries("apriori_lm_power", tuple(traj.times.tolist()),
                        tuple(vals))


def l1_trajectory_gap(traj_a: FieldTrajectory, traj_b: FieldTrajectory) -> float:
    """Space-time L1 distance summed over species (trapezoid in time)."""
    if traj_a.densities.shape != traj_b.densities.shape:
        raise StatisticsError("trajectories must share shape")
    if np.max(np.abs(traj_a.times - traj_b.times)) > 1e-9:
        raise StatisticsError("trajectories must share output times")
    vol = traj_a.grid.cell_volume
    diff = np.abs(traj_a.densities - traj_b.densities)
    per_time = diff.reshape(diff.shape[0], -1).sum(axis=1) * vol
    return float(np.trapezoid(per_time, traj_a.times))
