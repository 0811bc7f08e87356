"""Simulation and decay diagnostics for a 1D viscoelastic/elastic transmission wave system
with frictional damping, a delayed velocity feedback and a memory kernel."""
from ._accel import backend
from .diagnostics import (DecayFit, EnergyReport, decay_fit, energy, energy_rate_check,
                          lyapunov_D, lyapunov_F1, lyapunov_F2, lyapunov_F3, lyapunov_L)
from .errors import *  # noqa: F401,F403
from .kernels import (HistorySeries, KernelKind, RelaxationKernel, beta, check_product_rule, conv_diamond,
                      conv_square, conv_star, kernel_eval, recursive_conv_update)
from .problem import (Certificate, ProblemConfig, Profile, ValidationReport, find_certificate,
                      load_config, q_eval, save_config, validate, zeta_window)
from .solver import (Mesh, RunRecord, SimState, build_mesh, delayed_velocity, init_state,
                     interface_residual, run, step)

__version__ = "0.1.0"
