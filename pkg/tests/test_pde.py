import numpy as np
import pytest

from crossdiff.analysis import MetricSeries, fit_rate
from crossdiff.errors import ConfigError, SchemeFailureError, StepSizeError
from crossdiff.field import Box, GridSpec, ScalarField, field_from_function
from crossdiff.kernel import Mollifier
from crossdiff.model import InitialDensity, ModelParams
from crossdiff.pde import (FieldTrajectory, SolverConfig, _Stepper, heat_exact,
                           initial_grid_fields, make_test_library,
                           pme_pressure_trajectory, solve_fokker_planck,
                           solve_local, solve_nonlocal, solve_pme, stable_dt,
                           weak_form_residual)

BOX = Box((-2.0,), (3.0,))


def two_species(horizon=0.2, b=(1.0, 1.0), sigma=0.05):
    return ModelParams(2, 1, 2.0, (1.0, 1.0), b, sigma, 0.4, horizon)


def gauss_densities(n=2, sd=0.3):
    out = []
    for k in range(n):
        mean = 0.5 + (k - 0.5 * (n - 1)) * 0.5
        out.append(InitialDensity("gaussian_mixture", BOX, means=((mean,),),
                                  sds=(sd,), weights=(1.0,)))
    return out


def per_step_masses(traj):
    vol = traj.grid.cell_volume
    return traj.densities.reshape(traj.densities.shape[0],
                                  traj.n_species, -1).sum(axis=2) * vol


class TestStationarity:
    def test_constant_data_is_steady_nonlocal(self):
        grid = GridSpec(BOX, 128)
        p = two_species()
        const = [np.full(grid.shape, 0.2), np.full(grid.shape, 0.1)]
        traj = solve_nonlocal(p, const, SolverConfig(grid, 1e-3))
        drift = np.abs(traj.densities - traj.densities[0]).max()
        assert drift < 1e-10

    def test_constant_data_is_steady_local(self):
        grid = GridSpec(BOX, 128)
        p = two_species()
        const = [np.full(grid.shape, 0.2), np.full(grid.shape, 0.1)]
        traj = solve_local(p, const, SolverConfig(grid, 1e-4))
        assert np.abs(traj.densities - traj.densities[0]).max() < 1e-10

    def test_constant_data_is_steady_pme(self):
        grid = GridSpec(BOX, 128)
        u0 = ScalarField(grid, np.full(grid.shape, 0.7))
        traj = solve_pme(1.0, 0.05, 2.0, u0, SolverConfig(grid, 1e-4), 0.1)
        assert np.abs(traj.densities - traj.densities[0]).max() < 1e-10


class TestConservation:
    def test_mass_constant_every_step(self):
        grid = GridSpec(BOX, 256)
        p = two_species(horizon=0.1)
        traj = solve_nonlocal(p, gauss_densities(), SolverConfig(grid))
        masses = per_step_masses(traj)
        assert np.abs(masses - masses[0]).max() < 1e-10
        traj = solve_local(p, gauss_densities(), SolverConfig(grid))
        masses = per_step_masses(traj)
        assert np.abs(masses - masses[0]).max() < 1e-10

    def test_snapshots_stay_nonnegative(self):
        grid = GridSpec(BOX, 256)
        p = two_species(horizon=0.1)
        traj = solve_local(p, gauss_densities(), SolverConfig(grid))
        assert traj.densities.min() >= 0.0
        assert traj.clamp_defect < 1e-9


class TestHeatOracle:
    def test_zero_mobility_matches_heat_kernel(self):
        grid = GridSpec(BOX, 256)
        p = ModelParams(2, 1, 2.0, (1.0, 1.0), (0.0, 0.0), 0.05, 0.4, 0.1)
        traj = solve_nonlocal(p, gauss_densities(), SolverConfig(grid))
        vol = grid.cell_volume
        for k in range(2):
            exact = heat_exact(traj.field(0, k), p.sigma, 0.1)
            err = np.abs(traj.densities[-1, k] - exact.values).sum() * vol
            assert err < 1e-3

    def test_pme_zero_mobility_matches_heat_kernel(self):
        grid = GridSpec(BOX, 256)
        u0 = initial_grid_fields(gauss_densities(1), grid)[0]
        traj = solve_pme(0.0, 0.05, 2.0, u0, SolverConfig(grid), 0.1)
        exact = heat_exact(ScalarField(grid, u0), 0.05, 0.1)
        err = np.abs(traj.densities[-1, 0] - exact.values).sum() \
            * grid.cell_volume
        assert err < 1e-3


class TestHeatExact:
    def test_time_zero_is_identity(self):
        grid = GridSpec(BOX, 128)
        rng = np.random.default_rng(0)
        f = ScalarField(grid, rng.random(grid.shape))
        out = heat_exact(f, 0.05, 0.0)
        assert np.array_equal(out.values, f.values)

    def test_gaussian_spreads_analytically(self):
        grid = GridSpec(BOX, 512)
        s, sigma, t = 0.25, 0.05, 0.3

        def gauss(p, sd):
            return np.exp(-0.5 * (p[:, 0] - 0.5) ** 2 / sd ** 2) \
                / np.sqrt(2 * np.pi * sd ** 2)

        f = field_from_function(grid, lambda p: gauss(p, s))
        out = heat_exact(f, sigma, t)
        sd_t = np.sqrt(s ** 2 + 2 * sigma * t)
        target = field_from_function(grid, lambda p: gauss(p, sd_t))
        err = np.abs(out.values - target.values).sum() * grid.cell_volume
        assert err < 1e-6
        assert abs(out.mass - f.mass) < 1e-10


class TestReductions:
    def test_local_single_species_equals_pme(self):
        grid = GridSpec(BOX, 256)
        p = ModelParams(1, 1, 2.0, (1.0,), (1.0,), 0.05, 0.4, 0.1)
        dens = gauss_densities(1)
        cfg = SolverConfig(grid, 2e-5)
        a = solve_local(p, dens, cfg)
        u0 = initial_grid_fields(dens, grid)[0]
        b = solve_pme(1.0, 0.05, 2.0, u0, cfg, 0.1)
        assert np.abs(a.densities - b.densities).max() < 1e-12

    def test_symmetric_data_stays_symmetric(self):
        grid = GridSpec(BOX, 256)
        p = ModelParams(1, 1, 2.0, (1.0,), (1.0,), 0.05, 0.4, 0.1)
        rho = InitialDensity("gaussian_mixture", BOX, means=((0.5,),),
                             sds=(0.3,), weights=(1.0,))
        traj = solve_local(p, [rho], SolverConfig(grid))
        sym = np.abs(traj.densities - traj.densities[:, :, ::-1]).max()
        assert sym < 1e-10

    def test_same_mobility_sum_solves_pme(self):
        grid = GridSpec(BOX, 256)
        p = two_species(horizon=0.2)
        dens = gauss_densities()
        dt = stable_dt(p, grid, dens, None, 0.5, include_local=True)
        cfg = SolverConfig(grid, dt)
        coupled = solve_local(p, dens, cfg)
        u0 = initial_grid_fields(dens, grid).sum(axis=0)
        u = solve_pme(1.0, p.sigma, 2.0, u0, cfg, 0.2)
        summed = coupled.densities.sum(axis=1)
        gap = np.abs(summed - u.densities[:, 0]).reshape(len(u.times), -1) \
            .sum(axis=1).max() * grid.cell_volume
        assert gap < 5e-3

    def test_fokker_planck_recovers_species(self):
        grid = GridSpec(BOX, 256)
        p = two_species(horizon=0.2)
        dens = gauss_densities()
        dt = stable_dt(p, grid, dens, None, 0.5, include_local=True)
        cfg = SolverConfig(grid, dt)
        coupled = solve_local(p, dens, cfg)
        u0 = initial_grid_fields(dens, grid).sum(axis=0)
        u = solve_pme(1.0, p.sigma, 2.0, u0, cfg, 0.2)
        pressures = pme_pressure_trajectory(u, 2.0)
        fp = solve_fokker_planck(1.0, p.sigma, pressures, dens, cfg, 0.2)
        vol = grid.cell_volume
        masses = per_step_masses(fp)
        assert np.abs(masses - masses[0]).max() < 1e-10
        for k in range(2):
            gap = np.abs(coupled.densities[:, k] - fp.densities[:, k]) \
                .reshape(len(u.times), -1).sum(axis=1).max() * vol
            assert gap < 5e-3

    def test_fokker_planck_constant_pressure_is_heat(self):
        grid = GridSpec(BOX, 256)
        dens = gauss_densities(1)
        steps = 200
        dt = 0.1 / steps
        flat = FieldTrajectory(grid, np.arange(steps + 1) * dt,
                               np.full((steps + 1, 1) + grid.shape, 0.3))
        fp = solve_fokker_planck(1.0, 0.05, flat, dens,
                                 SolverConfig(grid, dt), 0.1)
        exact = heat_exact(fp.field(0, 0), 0.05, 0.1)
        err = np.abs(fp.densities[-1, 0] - exact.values).sum() \
            * grid.cell_volume
        assert err < 1e-3

    def test_fokker_planck_rejects_mismatched_steps(self):
        grid = GridSpec(BOX, 128)
        dens = gauss_densities(1)
        flat = FieldTrajectory(grid, np.arange(11) * 0.01,
                               np.full((11, 1) + grid.shape, 0.3))
        with pytest.raises(ConfigError):
            solve_fokker_planck(1.0, 0.05, flat, dens,
                                SolverConfig(grid, 0.005), 0.1)


class TestGuards:
    def test_cfl_violation_raises(self):
        grid = GridSpec(BOX, 256)
        p = two_species(horizon=0.2)
        with pytest.raises(StepSizeError):
            solve_local(p, gauss_densities(), SolverConfig(grid, 0.002))

    def test_negative_cell_is_scheme_failure(self):
        grid = GridSpec(BOX, 128)
        cfg = SolverConfig(grid, 0.01)
        stepper = _Stepper(0.0, grid, cfg, np.ones(1))
        rho = np.zeros((1,) + grid.shape)
        rho[0, 64] = 1.0
        wild = [[np.full(grid.cells_per_axis - 1, 50.0)]]
        with pytest.raises(SchemeFailureError):
            stepper.advance(rho, wild, 0.01)

    def test_dt_must_divide_horizon(self):
        grid = GridSpec(BOX, 128)
        p = two_species(horizon=0.1)
        with pytest.raises(ConfigError):
            solve_local(p, gauss_densities(), SolverConfig(grid, 0.0003))


@pytest.fixture(scope="module")
def local_run():
    grid = GridSpec(BOX, 256)
    p = two_species(horizon=0.2)
    traj = solve_local(p, gauss_densities(), SolverConfig(grid))
    return p, traj


class TestWeakForm:

    def test_constant_test_function_sees_mass_only(self, local_run):
        p, traj = local_run
        lib = [tf for tf in make_test_library(BOX, 1) if tf.name == "one"]
        res = weak_form_residual(traj, p, lib)
        assert res[0] < 1e-8

    def test_first_moment_under_pure_diffusion(self, local_run):
        grid = GridSpec(BOX, 256)
        p = ModelParams(1, 1, 2.0, (1.0,), (0.0,), 0.05, 0.4, 0.2)
        traj = solve_local(p, gauss_densities(1), SolverConfig(grid))
        lib = [tf for tf in make_test_library(BOX, 1) if tf.name == "x1"]
        res = weak_form_residual(traj, p, lib)
        assert res[0] < 1e-6

    def test_residual_refines_at_first_order(self):
        p = two_species(horizon=0.1)
        lib = make_test_library(BOX, 1)
        errs, hs = [], []
        for cells in (64, 128, 256):
            grid = GridSpec(BOX, cells)
            traj = solve_local(p, gauss_densities(), SolverConfig(grid))
            res = weak_form_residual(traj, p, lib)
            errs.append(float(np.max(res)))
            hs.append(float(grid.spacing[0]))
        assert errs[-1] < errs[0]
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 1.0


class TestTrajectoryValidation:
    def test_requires_uniform_increasing_times(self):
        grid = GridSpec(BOX, 128)
        good = np.linspace(0, 1, 11)
        FieldTrajectory(grid, good, np.zeros((11, 1) + grid.shape))
        with pytest.raises(ConfigError):
            FieldTrajectory(grid, good[::-1],
                            np.zeros((11, 1) + grid.shape))
        bad = good.copy()
        bad[5] += 0.03
        with pytest.raises(ConfigError):
            FieldTrajectory(grid, bad, np.zeros((11, 1) + grid.shape))

    def test_record_stride(self):
        grid = GridSpec(BOX, 128)
        p = two_species(horizon=0.1)
        dense = solve_local(p, gauss_densities(),
                            SolverConfig(grid, 1e-4))
        strided = solve_local(p, gauss_densities(),
                              SolverConfig(grid, 1e-4, record_every=100))
        assert strided.n_steps * 100 == dense.n_steps
        np.testing.assert_array_equal(strided.densities[-1],
                                      dense.densities[-1])


class TestTrajectoryExport:
    def test_index_and_snapshots(self, tmp_path):
        from crossdiff.field import load_field
        from crossdiff.pde import save_trajectory
        grid = GridSpec(BOX, 128)
        p = two_species(horizon=0.02)
        traj = solve_local(p, gauss_densities(),
                           SolverConfig(grid, 1e-4, record_every=50))
        index = save_trajectory(traj, tmp_path / "traj")
        lines = index.read_text().splitlines()
        assert lines[0] == "step,time,filename"
        assert len(lines) - 1 == (traj.n_steps + 1) * traj.n_species
        step, t, name = lines[-1].split(",")
        field, time = load_field(tmp_path / "traj" / name)
        assert time == float(t)
        np.testing.assert_array_equal(field.values,
                                      traj.densities[int(step), -1])


class TestTwoDimensional:
    def test_pme_mass_conserved(self):
        grid = GridSpec(BOX, 128)
        u0 = initial_grid_fields(gauss_densities(1), grid)[0] * 1.7
        traj = solve_pme(1.0, 0.05, 2.0, u0, SolverConfig(grid), 0.05)
        masses = per_step_masses(traj)
        assert np.abs(masses - masses[0]).max() < 1e-10

    def test_nonlocal_2d_smoke(self):
        box = Box((-2.0, -2.0), (2.0, 2.0))
        grid = GridSpec(box, 64)
        p = ModelParams(1, 2, 2.0, (1.0,), (1.0,), 0.05, 0.4, 0.01)
        rho = InitialDensity("gaussian_mixture", box, means=((0.0, 0.0),),
                             sds=(0.25,), weights=(1.0,))
        traj = solve_nonlocal(p, [rho], SolverConfig(grid))
        masses = per_step_masses(traj)
        assert np.abs(masses - masses[0]).max() < 1e-10
        assert traj.densities.min() >= 0.0
        # radially symmetric data stays symmetric under both axis reflections
        final = traj.densities[-1, 0]
        assert np.abs(final - final[::-1, :]).max() < 1e-10
        assert np.abs(final - final[:, ::-1]).max() < 1e-10

    def test_local_2d_smoke(self):
        box = Box((-2.0, -2.0), (2.0, 2.0))
        grid = GridSpec(box, 64)
        p = ModelParams(1, 2, 2.0, (1.0,), (1.0,), 0.05, 0.4, 0.01)
        rho = InitialDensity("gaussian_mixture", box, means=((0.0, 0.0),),
                             sds=(0.25,), weights=(1.0,))
        traj = solve_local(p, [rho], SolverConfig(grid))
        masses = per_step_masses(traj)
        assert np.abs(masses - masses[0]).max() < 1e-10
