"""Simulation and verification toolkit for empirical processes of ergodic diffusions."""
from .empirical import (FunctionalSample, intermediate_H, kde_density, occupation_fraction,
                        smoothed_S, sup_occupation_grid, time_average_G)
from .functions import SupportedFunction, TestFunction, catalog
from .generator import (GaussLimitSpec, apply_generator, asymptotic_variance, carre_du_champ,
                        dynkin_residual, gauss_limit_spec, limit_covariance, metric_dG)
from .kernels import BandwidthSchedule, RadialKernel, convolve, make_kernel, schedule_eval
from .models import (DiffusionModel, make_langevin_model, make_ou_model, make_quartic_model,
                     make_reflected_model, modulus_of_continuity)
from .paths import (PathGrid, TimeChangeRecord, simulate_langevin, simulate_planar_bm,
                    simulate_reflected, time_change_isotropic)
from .verify import (ExperimentReport, TailCurve, bernstein_check, equicontinuity_diagnostic, mc_clt,
                     mc_clt_smoothed, occupation_scaling_planar, smoothing_bias_audit,
                     time_changed_occupation, zeta_scaling)

__version__ = "0.1.0"
