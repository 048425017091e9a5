"""Finite-volume solvers for the PDE hierarchy.

All four solvers share one conservative update: explicit upwind advection on
face velocities plus explicit centered diffusion, with no-flux outer
boundaries.  They differ only in how the face velocities are produced:

* nonlocal system   v = -b_k * (gradient-kernel convolution of the mollified
                    pressure), averaged from cell centers to faces
* local system      v = -b_k * face differences of the pointwise pressure
* porous medium     the local system with a single species
* Fokker-Planck     frozen per-step pressure from a precomputed trajectory

Mass is conserved to roundoff per step and positivity is monitored: cells may
dip to -1e-12 (clamped, defect logged); anything worse is a scheme failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (BoundaryMassError, ConfigError, SchemeFailureError,
                     StepSizeError)
from .field import (GridSpec, ScalarField, VectorField, convolve,
                    convolve_bandlimited, convolve_gradient,
                    convolve_gradient_faces)
from .kernel import Mollifier
from .model import BOUNDARY_MASS_LIMIT, InitialDensity, ModelParams, \
    eval_initial_density

NEGATIVE_CELL_LIMIT = -1e-12   # below this the scheme has failed
CLAMP_DEFECT_LIMIT = 1e-9      # total clamped mass allowed over a run


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    dt: float | None = None          # derived from the stability bound when None
    cfl_safety: float = 0.5
    record_every: int = 1            # trajectory recording stride
    upwind_advection: bool = True
    explicit_diffusion: bool = True

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if not (self.upwind_advection and self.explicit_diffusion):
            raise ConfigError("only the upwind/explicit scheme is implemented")


@dataclass
class FieldTrajectory:
    """Uniform-step sequence of per-species density snapshots."""

    grid: GridSpec
    times: np.ndarray                # (steps+1,)
    densities: np.ndarray            # (steps+1, n_species, *grid.shape)
    clamp_defect: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ConfigError("trajectory needs at least two time points")
        steps = np.diff(self.times)
        if np.any(steps <= 0):
            raise ConfigError("trajectory times must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1e-30):
            raise ConfigError("trajectory times must be uniformly spaced")
        if self.densities.shape[0] != len(self.times):
            raise ConfigError("one snapshot per time point required")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_species(self) -> int:
        return self.densities.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def field(self, step: int, species: int) -> ScalarField:
        return ScalarField(self.grid, self.densities[step, species])

    def snapshot(self, step: int) -> list[ScalarField]:
        return [self.field(step, k) for k in range(self.n_species)]


def initial_grid_fields(rho0s, grid: GridSpec) -> np.ndarray:
    """Stack per-species initial data sampled at cell centers."""
    out = []
    for rho0 in rho0s:
        if isinstance(rho0, ScalarField):
            if rho0.grid != grid:
                raise ConfigError("initial field lives on a different grid")
            out.append(rho0.values)
        elif isinstance(rho0, InitialDensity):
            pts = grid.centers().reshape(-1, grid.dim)
            out.append(np.asarray(eval_initial_density(rho0, pts)).reshape(grid.shape))
        else:
            arr = np.asarray(rho0, dtype=float)
            if arr.shape != grid.shape:
                raise ConfigError("initial array does not match the grid shape")
            out.append(arr)
    return np.stack(out, axis=0)


def _pressure(rho_block: np.ndarray, params: ModelParams) -> np.ndarray:
    weighted = np.tensordot(np.asarray(params.a), rho_block, axes=(0, 0))
    return np.maximum(weighted, 0.0) ** (params.m_exponent - 1.0)


def _mollified_pressure(rho_block: np.ndarray, params: ModelParams,
                        grid: GridSpec, mol: Mollifier,
                        dealiased: bool = False) -> ScalarField:
    if dealiased:
        smoothed = [convolve_bandlimited(ScalarField(grid, rho_block[k]),
                                         mol).values
                    for k in range(rho_block.shape[0])]
    else:
        smoothed = [convolve(ScalarField(grid, rho_block[k]), mol).values
                    for k in range(rho_block.shape[0])]
    s = np.tensordot(np.asarray(params.a), np.stack(smoothed), axes=(0, 0))
    return ScalarField(grid, np.maximum(s, 0.0) ** (params.m_exponent - 1.0))


def drift_field_from_smoothed(u_block: np.ndarray, params: ModelParams,
                              grid: GridSpec, mol: Mollifier) -> VectorField:
    """Pressure power of already-smoothed densities, then the gradient kernel.

    Shared tail of the empirical and mean-field drift pipelines: both reduce
    to this once their smoothed per-species densities agree.
    """
    s = np.tensordot(np.asarray(params.a), u_block, axes=(0, 0))
    p = ScalarField(grid, np.maximum(s, 0.0) ** (params.m_exponent - 1.0))
    return convolve_gradient(p, mol)


def mollified_pressure_gradient(rho_block: np.ndarray, params: ModelParams,
                                grid: GridSpec, mol: Mollifier) -> VectorField:
    """Gradient-kernel convolution of (sum_l a_l V*rho_l)^(m-1) at centers."""
    u = np.stack([convolve(ScalarField(grid, rho_block[k]), mol).values
                  for k in range(rho_block.shape[0])])
    return drift_field_from_smoothed(u, params, grid, mol)


def mollified_pressure_gradient_faces(rho_block: np.ndarray,
                                      params: ModelParams, grid: GridSpec,
                                      mol: Mollifier) -> list[np.ndarray]:
    """Same convolution evaluated directly at interior face positions.

    The smoothing step also goes through the exact multiplier here: the
    solver must stay consistent as the width approaches the grid scale.
    """
    p = _mollified_pressure(rho_block, params, grid, mol, dealiased=True)
    return [convolve_gradient_faces(p, mol, ax) for ax in range(grid.dim)]


def _faces_from_centers(vals: np.ndarray, axis: int) -> np.ndarray:
    """Interior-face values by averaging the two adjacent cells."""
    lead = [slice(None)] * vals.ndim
    trail = [slice(None)] * vals.ndim
    lead[axis] = slice(1, None)
    trail[axis] = slice(None, -1)
    return 0.5 * (vals[tuple(lead)] + vals[tuple(trail)])


def _face_diff(vals: np.ndarray, axis: int, dx: float) -> np.ndarray:
    lead = [slice(None)] * vals.ndim
    trail = [slice(None)] * vals.ndim
    lead[axis] = slice(1, None)
    trail[axis] = slice(None, -1)
    return (vals[tuple(lead)] - vals[tuple(trail)]) / dx


def _upwind_flux(rho: np.ndarray, v_face: np.ndarray, axis: int) -> np.ndarray:
    lead = [slice(None)] * rho.ndim
    trail = [slice(None)] * rho.ndim
    lead[axis] = slice(1, None)
    trail[axis] = slice(None, -1)
    left = rho[tuple(trail)]
    right = rho[tuple(lead)]
    return np.where(v_face > 0.0, v_face * left, v_face * right)


def _apply_fluxes(rho: np.ndarray, fluxes: list[np.ndarray], dt: float,
                  dx: np.ndarray) -> np.ndarray:
    out = rho.copy()
    for axis, f in enumerate(fluxes):
        pad = [(0, 0)] * rho.ndim
        pad[axis] = (1, 1)
        f_all = np.pad(f, pad)  # zero flux through the outer boundary
        lead = [slice(None)] * rho.ndim
        trail = [slice(None)] * rho.ndim
        lead[axis] = slice(1, None)
        trail[axis] = slice(None, -1)
        out -= dt / dx[axis] * (f_all[tuple(lead)] - f_all[tuple(trail)])
    return out


class _Stepper:
    """Shared update loop; ``face_velocities`` is the per-solver strategy."""

    def __init__(self, params_sigma: float, grid: GridSpec, cfg: SolverConfig,
                 species_mass_scale: np.ndarray):
        self.sigma = params_sigma
        self.grid = grid
        self.cfg = cfg
        self.dx = grid.spacing
        self.dxmin = float(np.min(self.dx))
        self.clamp_defect = 0.0
        central = grid.box.shrunk(0.8)
        pts = grid.centers().reshape(-1, grid.dim)
        self.outer_mask = ~central.contains(pts).reshape(grid.shape)
        self.species_scale = species_mass_scale
        self.outer_initial: np.ndarray | None = None

    def cfl_bound(self, vmax: float) -> float:
        diff = np.inf if self.sigma == 0 else \
            self.dxmin ** 2 / (2.0 * self.grid.dim * self.sigma)
        if vmax <= 0:
            return self.cfg.cfl_safety * diff
        return self.cfg.cfl_safety * min(diff, self.dxmin / vmax)

    def check_dt(self, dt: float, vmax: float, diffusivity: float) -> None:
        if dt > self.cfl_bound(vmax) * (1 + 1e-12):
            raise StepSizeError(
                f"dt={dt:.3e} violates the CFL bound {self.cfl_bound(vmax):.3e} "
                f"(max |velocity| = {vmax:.3e})")
        # gradient-driven transport acts as nonlinear diffusion; the explicit
        # scheme must also resolve that rate or it blows up well before the
        # advective bound trips
        if diffusivity > 0:
            bound = self.cfg.cfl_safety * self.dxmin ** 2 \
                / (2.0 * self.grid.dim * (self.sigma + diffusivity))
            if dt > bound * (1 + 1e-12):
                raise StepSizeError(
                    f"dt={dt:.3e} violates the effective-diffusivity bound "
                    f"{bound:.3e} (diffusivity {diffusivity:.3e})")

    def advance(self, rho_block: np.ndarray, velocities, dt: float) -> np.ndarray:
        """One explicit step for every species; velocities[k] lists face arrays."""
        new_block = np.empty_like(rho_block)
        for k in range(rho_block.shape[0]):
            rho = rho_block[k]
            fluxes = []
            for axis in range(self.grid.dim):
                v = velocities[k][axis]
                adv = _upwind_flux(rho, v, axis)
                dif = -self.sigma * _face_diff(rho, axis, self.dx[axis])
                fluxes.append(adv + dif)
            out = _apply_fluxes(rho, fluxes, dt, self.dx)
            low = float(out.min())
            if low < NEGATIVE_CELL_LIMIT:
                raise SchemeFailureError(
                    f"cell value {low:.3e} below {NEGATIVE_CELL_LIMIT:.0e}")
            neg = out < 0.0
            if np.any(neg):
                self.clamp_defect += float(-out[neg].sum()) * self.grid.cell_volume
                if self.clamp_defect > CLAMP_DEFECT_LIMIT:
                    raise SchemeFailureError(
                        f"clamped mass defect {self.clamp_defect:.3e} exceeds "
                        f"{CLAMP_DEFECT_LIMIT:.0e}")
                out[neg] = 0.0
            new_block[k] = out
        return new_block

    def check_boundary_mass(self, rho_block: np.ndarray) -> None:
        """Abort once the outer 20% of the box accumulates real mass.

        Measured against the initial outer mass so that diagnostics with
        deliberately non-compact data (constants) stay runnable.
        """
        vol = self.grid.cell_volume
        outer = rho_block[:, self.outer_mask].reshape(
            rho_block.shape[0], -1).sum(axis=1) * vol
        if self.outer_initial is None:
            self.outer_initial = outer.copy()
            return
        growth = outer - self.outer_initial
        for k in range(rho_block.shape[0]):
            if growth[k] > BOUNDARY_MASS_LIMIT * self.species_scale[k]:
                raise BoundaryMassError(
                    f"species {k}: boundary mass grew by {growth[k]:.3e}, "
                    f"beyond {BOUNDARY_MASS_LIMIT:.0e} of the species mass")


def _resolve_steps(horizon: float, cfg: SolverConfig, dt_bound: float) -> tuple[int, float]:
    if cfg.dt is not None:
        steps = int(round(horizon / cfg.dt))
        if steps < 1 or abs(steps * cfg.dt - horizon) > 1e-9 * horizon:
            raise ConfigError("dt must divide the horizon into whole steps")
    else:
        steps = max(1, int(np.ceil(horizon / dt_bound)))
    if steps % cfg.record_every != 0:
        raise ConfigError("record_every must divide the step count")
    return steps, horizon / steps


def _stability_dt(sigma_eff: float, grid: GridSpec, vmax: float,
                  cfl_safety: float, v_margin: float = 1.5) -> float:
    """Step bound combining diffusion (possibly effective) and advection."""
    dxmin = float(np.min(grid.spacing))
    inv = 2.0 * grid.dim * sigma_eff / dxmin ** 2
    if vmax > 0:
        inv += 2.0 * v_margin * vmax / dxmin
    if inv == 0.0:
        raise ConfigError("no stability scale: zero diffusion and velocity")
    return cfl_safety / inv


def nonlinear_diffusivity(rho_block: np.ndarray, a, b, m_exponent: float) -> float:
    """Effective diffusion rate of the pressure-gradient transport.

    The drift velocity is a gradient of a pressure built from the solution,
    so the transport behaves like nonlinear diffusion with rate about
    b (m-1) S^(m-1) where S is the weighted density sum.
    """
    s_max = float(np.max(np.tensordot(np.asarray(a), rho_block, axes=(0, 0))))
    s_max = max(s_max, 0.0)
    return float(np.max(b)) * (m_exponent - 1.0) * s_max ** (m_exponent - 1.0)


_DIFFUSIVITY_MARGIN = 1.3


def _velocity_max(velocities) -> float:
    return max((float(np.max(np.abs(v))) if v.size else 0.0)
               for vel in velocities for v in vel)


def _run(initial: np.ndarray, cfg: SolverConfig, make_velocities,
         sigma: float, horizon: float, diffusivity_fn=None) -> FieldTrajectory:
    """Shared stepping loop.

    ``diffusivity_fn(rho_block) -> float`` supplies the effective nonlinear
    diffusion rate for solvers whose velocity is a gradient of the state
    (local/PME); the mollified solver passes None because its drift is smooth
    on the kernel scale and plain advective stability applies.
    """
    grid = cfg.grid
    scale = initial.reshape(initial.shape[0], -1).sum(axis=1) * grid.cell_volume
    stepper = _Stepper(sigma, grid, cfg, np.maximum(scale, 1e-300))

    stepper.check_boundary_mass(initial)
    vel0 = make_velocities(initial, 0)
    vmax0 = _velocity_max(vel0)
    diff0 = diffusivity_fn(initial) if diffusivity_fn else 0.0
    bound = _stability_dt(sigma + _DIFFUSIVITY_MARGIN * diff0, grid, vmax0,
                          cfg.cfl_safety)
    steps, dt = _resolve_steps(horizon, cfg, bound)

    every = cfg.record_every
    n_rec = steps // every
    times = np.arange(n_rec + 1) * (dt * every)
    out = np.empty((n_rec + 1,) + initial.shape)
    out[0] = initial
    rho = initial
    for j in range(steps):
        vel = vel0 if j == 0 else make_velocities(rho, j)
        diff = diffusivity_fn(rho) if diffusivity_fn else 0.0
        stepper.check_dt(dt, _velocity_max(vel), diff)
        rho = stepper.advance(rho, vel, dt)
        stepper.check_boundary_mass(rho)
        if (j + 1) % every == 0:
            out[(j + 1) // every] = rho
    return FieldTrajectory(grid, times, out, clamp_defect=stepper.clamp_defect)


def solve_nonlocal(params: ModelParams, rho0s, cfg: SolverConfig,
                   mol: Mollifier | None = None) -> FieldTrajectory:
    """Evolve the kernel-smoothed system at width params.eps."""
    grid = cfg.grid
    mol = mol or Mollifier(params.dim, params.eps)
    grid.require_resolution(mol)
    initial = initial_grid_fields(rho0s, grid)
    b = np.asarray(params.b)

    def make_velocities(rho_block, _step):
        base = mollified_pressure_gradient_faces(rho_block, params, grid, mol)
        return [[-bk * f for f in base] for bk in b]

    return _run(initial, cfg, make_velocities, params.sigma,
                params.horizon)


def solve_local(params: ModelParams, rho0s, cfg: SolverConfig) -> FieldTrajectory:
    """Evolve the local cross-diffusion system (pressure by face differences)."""
    grid = cfg.grid
    initial = initial_grid_fields(rho0s, grid)
    b = np.asarray(params.b)
    dx = grid.spacing

    def make_velocities(rho_block, _step):
        p = _pressure(rho_block, params)
        base = [_face_diff(p, ax, dx[ax]) for ax in range(grid.dim)]
        return [[-bk * f for f in base] for bk in b]

    def diffusivity(rho_block):
        return nonlinear_diffusivity(rho_block, params.a, params.b,
                                     params.m_exponent)

    return _run(initial, cfg, make_velocities, params.sigma,
                params.horizon, diffusivity_fn=diffusivity)


def solve_pme(b: float, sigma: float, m_exponent: float, u0,
              cfg: SolverConfig, horizon: float) -> FieldTrajectory:
    """Single-field viscous porous-medium flow; mass need not be 1."""
    params = ModelParams(n_species=1, dim=cfg.grid.dim, m_exponent=m_exponent,
                         a=(1.0,), b=(b,), sigma=sigma, eps=1.0,
                         horizon=horizon)
    return solve_local(params, [u0], cfg)


def solve_fokker_planck(b: float, sigma: float,
                        pressure_trajectory: FieldTrajectory, rho0s,
                        cfg: SolverConfig, horizon: float) -> FieldTrajectory:
    """Linear advection-diffusion along a frozen per-step pressure."""
    grid = cfg.grid
    if pressure_trajectory.grid != grid:
        raise ConfigError("pressure trajectory lives on a different grid")
    initial = initial_grid_fields(rho0s, grid)
    dx = grid.spacing
    n_needed = None
    if cfg.dt is not None:
        n_needed = int(round(horizon / cfg.dt))
        if abs(pressure_trajectory.dt - cfg.dt) > 1e-12 * max(cfg.dt, 1e-30) \
                or pressure_trajectory.n_steps < n_needed:
            raise ConfigError("pressure trajectory does not match the time steps")
    else:
        cfg = SolverConfig(grid, pressure_trajectory.dt, cfg.cfl_safety)
        n_needed = int(round(horizon / cfg.dt))
        if pressure_trajectory.n_steps < n_needed:
            raise ConfigError("pressure trajectory shorter than the horizon")

    pressures = pressure_trajectory.densities[:, 0]

    def make_velocities(_rho_block, step):
        base = [_face_diff(pressures[step], ax, dx[ax])
                for ax in range(grid.dim)]
        return [[-b * f for f in base] for _ in range(initial.shape[0])]

    return _run(initial, cfg, make_velocities, sigma, horizon)


def pme_pressure_trajectory(u_traj: FieldTrajectory,
                            m_exponent: float) -> FieldTrajectory:
    """Pointwise pressure u^(m-1) along a porous-medium trajectory."""
    p = np.maximum(u_traj.densities, 0.0) ** (m_exponent - 1.0)
    return FieldTrajectory(u_traj.grid, u_traj.times.copy(), p)


def heat_exact(rho0: ScalarField, sigma: float, t: float) -> ScalarField:
    """Spectral convolution with the Gaussian kernel of variance 2*sigma*t."""
    if t < 0:
        raise ConfigError("time must be nonnegative")
    if t == 0.0:
        return rho0.copy()
    grid = rho0.grid
    var = 2.0 * sigma * t
    axes = []
    for ax in range(grid.dim):
        n = grid.cells_per_axis
        dx = grid.spacing[ax]
        length = grid.box.widths[ax]
        delta = ((np.arange(n) * dx + 0.5 * length) % length) - 0.5 * length
        axes.append(delta)
    mesh = np.meshgrid(*axes, indexing="ij")
    r2 = sum(m * m for m in mesh)
    kern = np.exp(-0.5 * r2 / var)
    kern /= kern.sum()
    out = np.real(np.fft.ifftn(np.fft.fftn(rho0.values) * np.fft.fftn(kern)))
    if np.all(rho0.values >= 0):
        np.maximum(out, 0.0, out=out)
    return ScalarField(grid, out)


def save_trajectory(traj: FieldTrajectory, out_dir, prefix: str = "rho") -> "Path":
    """Write every recorded snapshot as a grid file plus an index CSV.

    The index lists (step, time, filename) per species snapshot; returns the
    index path.
    """
    from pathlib import Path

    from .field import save_field

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["step,time,filename"]
    for j in range(traj.n_steps + 1):
        t = float(traj.times[j])
        for k in range(traj.n_species):
            name = f"{prefix}_s{k + 1}_{j:06d}.grid"
            save_field(traj.field(j, k), out / name, time=t)
            lines.append(f"{j},{repr(t)},{name}")
    index = out / "index.csv"
    index.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return index


def stability_bound(params: ModelParams, grid: GridSpec, rho0s,
                    mol: Mollifier | None = None, cfl_safety: float = 0.5,
                    include_local: bool = False) -> float:
    """Raw stable step bound from the initial velocity scales with headroom.

    ``include_local`` adds the effective nonlinear diffusion rate and must be
    set whenever a local-type solver is driven at this step.
    """
    initial = initial_grid_fields(rho0s, grid)
    b = np.asarray(params.b)
    dx = grid.spacing
    p = _pressure(initial, params)
    vmax = max(float(np.max(np.abs(_face_diff(p, ax, dx[ax]))))
               for ax in range(grid.dim)) * float(np.max(b))
    if mol is not None:
        g = mollified_pressure_gradient(initial, params, grid, mol)
        vmax = max(vmax, float(np.max(np.abs(g.values))) * float(np.max(b)))
    sigma_eff = params.sigma
    if include_local:
        sigma_eff += _DIFFUSIVITY_MARGIN * nonlinear_diffusivity(
            initial, params.a, params.b, params.m_exponent)
    return _stability_dt(sigma_eff, grid, vmax, cfl_safety)


def stable_dt(params: ModelParams, grid: GridSpec, rho0s,
              mol: Mollifier | None = None, cfl_safety: float = 0.5,
              include_local: bool = False) -> float:
    """Stable step rounded so the horizon divides into whole steps."""
    dt = stability_bound(params, grid, rho0s, mol, cfl_safety, include_local)
    steps = max(1, int(np.ceil(params.horizon / dt)))
    return params.horizon / steps


@dataclass(frozen=True)
class TestFunction:
    """Analytic space-time test function with its needed derivatives."""

    name: str
    value: callable        # (t, pts) -> (n,)
    time_derivative: callable
    gradient: callable     # (t, pts) -> (n, dim)
    laplacian: callable


def make_test_library(box, dim: int) -> list[TestFunction]:
    """Polynomial and Gaussian test functions adapted to the box."""
    center = 0.5 * (np.asarray(box.lo) + np.asarray(box.hi))
    width = float(np.min(box.widths)) / 6.0

    def const(t, pts):
        return np.ones(pts.shape[0])

    def zero_s(t, pts):
        return np.zeros(pts.shape[0])

    def zero_v(t, pts):
        return np.zeros_like(pts)

    lib = [TestFunction("one", const, zero_s, zero_v, zero_s)]

    def coord(t, pts):
        return pts[:, 0]

    def coord_grad(t, pts):
        g = np.zeros_like(pts)
        g[:, 0] = 1.0
        return g

    lib.append(TestFunction("x1", coord, zero_s, coord_grad, zero_s))

    def quad_val(t, pts):
        return pts[:, 0] ** 2

    def quad_grad(t, pts):
        g = np.zeros_like(pts)
        g[:, 0] = 2.0 * pts[:, 0]
        return g

    def quad_lap(t, pts):
        return np.full(pts.shape[0], 2.0)

    lib.append(TestFunction("x1_squared", quad_val, zero_s, quad_grad, quad_lap))

    w2 = width * width

    def gauss(pts):
        r2 = np.sum((pts - center) ** 2, axis=-1)
        return np.exp(-0.5 * r2 / w2)

    def g_val(t, pts):
        return np.exp(-t) * gauss(pts)

    def g_dt(t, pts):
        return -np.exp(-t) * gauss(pts)

    def g_grad(t, pts):
        return (np.exp(-t) * gauss(pts))[:, None] * (-(pts - center) / w2)

    def g_lap(t, pts):
        r2 = np.sum((pts - center) ** 2, axis=-1)
        return np.exp(-t) * gauss(pts) * (r2 / w2 - dim) / w2

    lib.append(TestFunction("decaying_gaussian", g_val, g_dt, g_grad, g_lap))

    def xg_val(t, pts):
        return (1.0 + t) * pts[:, 0] * gauss(pts)

    def xg_dt(t, pts):
        return pts[:, 0] * gauss(pts)

    def xg_grad(t, pts):
        g = gauss(pts)
        out = (1.0 + t) * g[:, None] * (-(pts - center) / w2) * pts[:, :1]
        out[:, 0] += (1.0 + t) * g
        return out

    def xg_lap(t, pts):
        g = gauss(pts)
        r2 = np.sum((pts - center) ** 2, axis=-1)
        x1 = pts[:, 0]
        c1 = center[0]
        lap_g = g * (r2 / w2 - dim) / w2
        return (1.0 + t) * (x1 * lap_g + 2.0 * g * (-(x1 - c1) / w2))

    lib.append(TestFunction("linear_times_gaussian", xg_val, xg_dt, xg_grad,
                            xg_lap))
    return lib


def weak_form_residual(traj: FieldTrajectory, params: ModelParams,
                       test_functions) -> np.ndarray:
    """|time-integrated weak-form defect| per test function (max over species).

    Both sides of the distributional identity are evaluated by cell quadrature
    in space and the trapezoid rule in time along the trajectory.
    """
    grid = traj.grid
    pts = grid.centers().reshape(-1, grid.dim)
    vol = grid.cell_volume
    dx = grid.spacing
    times = traj.times
    n_sp = traj.n_species
    a = np.asarray(params.a)
    b = np.asarray(params.b)
    m = params.m_exponent

    grad_p = np.empty((len(times), grid.dim) + grid.shape)
    for j in range(len(times)):
        p = _pressure(traj.densities[j], params)
        for ax in range(grid.dim):
            grad_p[j, ax] = np.gradient(p, dx[ax], axis=ax, edge_order=2)

    out = np.empty(len(test_functions))
    for i, tf in enumerate(test_functions):
        worst = 0.0
        for k in range(n_sp):
            s_dt = np.empty(len(times))
            s_lap = np.empty(len(times))
            s_adv = np.empty(len(times))
            for j, t in enumerate(times):
                rho = traj.densities[j, k].reshape(-1)
                s_dt[j] = np.dot(tf.time_derivative(t, pts), rho) * vol
                s_lap[j] = np.dot(tf.laplacian(t, pts), rho) * vol
                gf = tf.gradient(t, pts)
                gp = grad_p[j].reshape(grid.dim, -1).T
                s_adv[j] = np.dot(np.sum(gf * gp, axis=1), rho) * vol
            end = np.dot(tf.value(times[-1], pts),
                         traj.densities[-1, k].reshape(-1)) * vol
            start = np.dot(tf.value(times[0], pts),
                           traj.densities[0, k].reshape(-1)) * vol
            lhs = end
            rhs = (start
                   + np.trapezoid(s_dt, times)
                   + params.sigma * np.trapezoid(s_lap, times)
                   - b[k] * np.trapezoid(s_adv, times))
            worst = max(worst, abs(lhs - rhs))
        out[i] = worst
    return out
