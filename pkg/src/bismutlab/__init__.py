"""Monte Carlo and grid verification of semigroup identities for diffusions
``L = X_0 + 1/2 sum X_i^2``: quasi-invariance, integration by parts, the
Bismut formula, nondegeneracy of the Malliavin matrix and densities."""

from .catalog import (CONTROL_MODELS, DICTIONARY, bump, constant, coordinate, gaussian_marginal, make_model,
                      model_names, parse_schedule, parse_test_function, square)
from .field_model import (AugmentationSpec, AugmentedSystem, BaseSystem, Kind, ModelError, PerturbationSchedule,
                          StateFeedbackSchedule, TestFunction, VectorFieldSet, apply_generator, augmented_dim,
                          build_augmentation, ellipticity_exact, ellipticity_margin, ito_drift, sphere_directions)
from .identity_suite import (EXPERIMENTS, ExperimentReport, check_bismut, check_density, check_elementary_ibp,
                             check_gradient_transfer, check_nondegeneracy, check_quasi_invariance, check_variation,
                             derive_seed, quasi_invariance_grid, run_suite)
from .mc_semigroup import (DensityEstimate, GrowthWarning, MomentReport, NondegeneracyError, SemigroupEstimate,
                           SmallBallReport, bismut_pair, density_estimate, estimate_gradient, estimate_moments,
                           estimate_semigroup, estimate_weighted, small_ball)
from .pde_oracle import (GridSolution, PDEError, base_coefficients, extended_coefficients, oracle_compare,
                         solve_extended, solve_parabolic)
from .sde_engine import (PathEnsemble, SimulationError, TimeGrid, inverse_residual, pathwise_functional, simulate,
                         variation_of_constants_residual, write_trajectories)

__version__ = "0.1.0"
