"""crossdiff: interacting particles, nonlocal and local cross-diffusion PDEs,
and the convergence experiments connecting the three levels."""

from .analysis import (MetricSeries, RateFit, bl_distance, chaos_gap,
                       coupling_constant, energy_local, energy_regularised,
                       eps_schedule, fit_rate, w2_empirical_1d, w2_sliced)
from .field import (GridSpec, ScalarField, VectorField, convolve,
                    convolve_gradient, deposit, interpolate, load_field,
                    lp_norm, save_field)
from .kernel import Mollifier, eval_grad_v, eval_v
from .model import (Box, InitialDensity, ModelParams, eval_initial_density,
                    sample_initial)
from .particle import (CoupledState, Ensemble, NoiseStream, em_step,
                       meanfield_drift, particle_drift, run_coupled)
from .pde import (FieldTrajectory, SolverConfig, heat_exact, solve_fokker_planck,
                  solve_local, solve_nonlocal, solve_pme, weak_form_residual)

__version__ = "0.1.0"
