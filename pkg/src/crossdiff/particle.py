"""Interacting-particle and mean-field ensembles with shared-noise coupling.

The interacting system drifts down the gradient of the kernel-smoothed
pressure built from its own empirical measure; the mean-field system reads
the same pipeline off a precomputed grid solution of the nonlocal equation.
Driving both with identical initial samples and identical Gaussian increments
realizes the synchronous coupling whose pathwise gap the experiments measure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BoundaryEscapeError, ConfigError
from .field import GridSpec, VectorField, deposit, interpolate
from .kernel import Mollifier
from .model import ModelParams, sample_initial
from .pde import FieldTrajectory, drift_field_from_smoothed, \
    mollified_pressure_gradient
from .rng import NoiseStream

__all__ = [
    "Ensemble", "CoupledState", "NoiseStream", "ParticleDump",
    "particle_drift", "meanfield_drift", "meanfield_drift_field", "em_step",
    "run_coupled", "sample_ensemble", "CoupledRunResult",
]


@dataclass
class Ensemble:
    """Positions of N particles per species plus the current time."""

    params: ModelParams
    positions: list[np.ndarray]   # per species, shape (N, dim)
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        if len(self.positions) != self.params.n_species:
            raise ConfigError("one position block per species required")
        counts = {p.shape[0] for p in self.positions}
        if len(counts) != 1:
            raise ConfigError("all species must hold the same particle count")
        for p in self.positions:
            if p.ndim != 2 or p.shape[1] != self.params.dim:
                raise ConfigError("positions must have shape (N, dim)")

    @property
    def count(self) -> int:
        return self.positions[0].shape[0]

    def copy(self) -> "Ensemble":
        return Ensemble(self.params, [p.copy() for p in self.positions],
                        self.time, self.step)


@dataclass
class CoupledState:
    """Synchronously coupled pair: interacting x-system, mean-field y-system.

    Both were built from the same initial samples and are advanced with the
    same Gaussian increments; ``drift_fields[j]`` holds the frozen mean-field
    drift for step j.
    """

    x: Ensemble
    y: Ensemble
    stream: NoiseStream
    mol: Mollifier
    grid: GridSpec
    drift_fields: list[VectorField]

    def __post_init__(self):
        if self.x.count != self.y.count or self.x.step != self.y.step:
            raise ConfigError("coupled ensembles out of sync")


def sample_ensemble(params: ModelParams, rho0s, count: int,
                    stream: NoiseStream) -> Ensemble:
    """Draw the i.i.d. initial positions of every species."""
    if len(rho0s) != params.n_species:
        raise ConfigError("one initial density per species required")
    positions = [sample_initial(rho0, count, stream.init_generator(k))
                 for k, rho0 in enumerate(rho0s)]
    return Ensemble(params, positions)


def _drift_from_field(g: VectorField, ens: Ensemble) -> list[np.ndarray]:
    out = []
    for k in range(ens.params.n_species):
        vals = interpolate(g, ens.positions[k])
        out.append(-ens.params.b[k] * np.atleast_2d(vals))
    return out


def particle_drift(ens: Ensemble, mol: Mollifier,
                   grid: GridSpec) -> list[np.ndarray]:
    """Empirical-measure drift: deposit, pressure power, gradient convolution."""
    block = np.stack([deposit(ens.positions[k], mol, grid).values
                      for k in range(ens.params.n_species)])
    g = drift_field_from_smoothed(block, ens.params, grid, mol)
    return _drift_from_field(g, ens)


def meanfield_drift_field(rho_eps_fields, params: ModelParams,
                          mol: Mollifier) -> VectorField:
    """Frozen drift field from nonlocal-PDE densities (before the -b_k scale)."""
    grid = rho_eps_fields[0].grid
    block = np.stack([f.values for f in rho_eps_fields])
    return mollified_pressure_gradient(block, params, grid, mol)


def meanfield_drift(positions, rho_eps_fields, mol: Mollifier,
                    params: ModelParams) -> list[np.ndarray]:
    """Mean-field drift per species at the given positions."""
    g = meanfield_drift_field(rho_eps_fields, params, mol)
    out = []
    for k in range(params.n_species):
        vals = interpolate(g, positions[k])
        out.append(-params.b[k] * np.atleast_2d(vals))
    return out


def _check_inside(positions, grid: GridSpec) -> None:
    for p in positions:
        if not np.all(grid.box.contains(p)):
            raise BoundaryEscapeError("particle left the simulation box")


def _advance(ens: Ensemble, drift: list[np.ndarray], dt: float,
             noise: list[np.ndarray], sigma: float) -> Ensemble:
    scale = np.sqrt(2.0 * sigma * dt)
    new_pos = [ens.positions[k] + drift[k] * dt + scale * noise[k]
               for k in range(ens.params.n_species)]
    return Ensemble(ens.params, new_pos, ens.time + dt, ens.step + 1)


def em_step(state: Ensemble | CoupledState, dt: float,
            noise: NoiseStream | None = None, *,
            mol: Mollifier | None = None,
            grid: GridSpec | None = None):
    """One Euler-Maruyama step.

    For a plain ensemble, ``noise``, ``mol`` and ``grid`` are required.  For a
    coupled state the same Gaussian block is applied to both members and the
    mean-field side reads its frozen drift field for the current step.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if isinstance(state, Ensemble):
        if noise is None or mol is None or grid is None:
            raise ConfigError("ensemble stepping needs noise, mol and grid")
        params = state.params
        drift = particle_drift(state, mol, grid)
        xi = [noise.increment_normals(k, state.step, state.count, params.dim)
              for k in range(params.n_species)]
        out = _advance(state, drift, dt, xi, params.sigma)
        _check_inside(out.positions, grid)
        return out

    cs = state
    params = cs.x.params
    step = cs.x.step
    drift_x = particle_drift(cs.x, cs.mol, cs.grid)
    g = cs.drift_fields[step]
    drift_y = _drift_from_field(g, cs.y)
    xi = [cs.stream.increment_normals(k, step, cs.x.count, params.dim)
          for k in range(params.n_species)]
    new_x = _advance(cs.x, drift_x, dt, xi, params.sigma)
    new_y = _advance(cs.y, drift_y, dt, xi, params.sigma)
    _check_inside(new_x.positions, cs.grid)
    _check_inside(new_y.positions, cs.grid)
    return replace(cs, x=new_x, y=new_y)


@dataclass
class CoupledRunResult:
    statistic: float                  # sum over species of max_t mean_i |X-Y|^2
    per_species: np.ndarray           # (n_species, steps+1) mean squared gaps
    times: np.ndarray

    @property
    def species_statistics(self) -> np.ndarray:
        return self.per_species.max(axis=1)


class ParticleDump:
    """CSV sink for per-step particle positions.

    Columns: replica, species, particle, step, time, x1[, x2].
    """

    def __init__(self, path, dim: int):
        self.path = Path(path)
        self.dim = dim
        cols = ["replica", "species", "particle", "step", "time", "x1"]
        if dim == 2:
            cols.append("x2")
        self._fh = open(self.path, "w", encoding="utf-8")
        self._fh.write(",".join(cols) + "\n")

    def record(self, ens: Ensemble, replica: int) -> None:
        for k, block in enumerate(ens.positions):
            for i in range(block.shape[0]):
                coords = ",".join(repr(float(c)) for c in block[i])
                self._fh.write(f"{replica},{k},{i},{ens.step},"
                               f"{repr(float(ens.time))},{coords}\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def precompute_meanfield_drifts(traj: FieldTrajectory, params: ModelParams,
                                mol: Mollifier) -> list[VectorField]:
    """Frozen drift field for every step of a nonlocal-PDE trajectory."""
    return [meanfield_drift_field(traj.snapshot(j), params, mol)
            for j in range(traj.n_steps + 1)]


def run_coupled(params: ModelParams, n_particles: int, dt: float, seed: int,
                rho_eps_trajectory: FieldTrajectory, rho0s,
                mol: Mollifier | None = None, replica: int = 0,
                drift_fields: list[VectorField] | None = None,
                dump: "ParticleDump | None" = None) -> CoupledRunResult:
    """Drive the coupled pair over the trajectory horizon.

    Returns the per-species mean squared particle gap at every step and the
    summed discrete-sup statistic.  ``drift_fields`` may carry the
    precomputed mean-field drifts (shared across replicas and N); ``dump``
    receives the interacting system's positions at every step.
    """
    traj = rho_eps_trajectory
    if abs(traj.dt - dt) > 1e-12 * max(dt, 1e-30):
        raise ConfigError(
            f"dt={dt} does not match the trajectory step {traj.dt}")
    mol = mol or Mollifier(params.dim, params.eps)
    grid = traj.grid
    grid.require_resolution(mol)
    if drift_fields is None:
        drift_fields = precompute_meanfield_drifts(traj, params, mol)
    if len(drift_fields) < traj.n_steps:
        raise ConfigError("drift fields do not cover the trajectory")

    stream = NoiseStream(seed, replica)
    x0 = sample_ensemble(params, rho0s, n_particles, stream)
    state = CoupledState(x0, x0.copy(), stream, mol, grid, drift_fields)

    n_steps = traj.n_steps
    gaps = np.zeros((params.n_species, n_steps + 1))
    if dump is not None:
        dump.record(state.x, replica)
    for j in range(n_steps):
        state = em_step(state, dt)
        for k in range(params.n_species):
            d = state.x.positions[k] - state.y.positions[k]
            gaps[k, j + 1] = float(np.mean(np.sum(d * d, axis=1)))
        if dump is not None:
            dump.record(state.x, replica)
    statistic = float(np.sum(gaps.max(axis=1)))
    return CoupledRunResult(statistic, gaps, traj.times.copy())
