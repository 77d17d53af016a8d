"""difform: one-dimensional diffusions from scale/speed data.

Builds regular Dirichlet subspace families from characteristic sets,
discretizes their energy forms into tridiagonal generators, certifies Mosco
convergence through the semigroup characterization, and runs Monte-Carlo
weak-convergence diagnostics (fdd marginals, tightness moduli, quadratic
variation) on the associated jump chains.
"""

from .intervals import Domain, IntervalUnion, open_domain, set_op
from .scale import (CharacteristicFamily, CharacteristicReport, ScaleFunction,
                    SpeedMeasure, density_ratio, derive_subscale, dyadic_rationals,
                    example26_family, is_characteristic, monotone_family,
                    pointwise_scale_limit, single_removed_interval_family,
                    stieltjes_measure)
from .forms import (BoundaryClass, DiscreteForm, Grid, assemble_form, build_grid,
                    classify_boundary, energy)
from .semigroup import SemigroupEvolver, l2m_distance, l2m_norm
from .mosco import (CoreApproximation, MoscoReport, SmoothBump,
                    core_approximation_energy, freeze_check, mosco_certificate,
                    standard_dictionary, wide_sense_limit_distances)
from .paths import (InitialLaw, Path, PathEnsemble, QVReport,
                    ensemble_quadratic_variation, ensemble_snapshots,
                    map_ensemble_positions, phi_cell_values,
                    quadratic_variation_report, simulate_ensemble, simulate_path,
                    transform_ensemble)
from .stats import (FddOracle, FddReport, H2Report, KSResult, TightnessReport,
                    brownian_modulus_bound, fdd_convergence_suite, h2_check,
                    initial_tightness, ks_two_sample, modulus_statistic,
                    modulus_statistic_bruteforce)
from .scenario import ConfigError, Scenario, run_scenario, validate_config

__version__ = "0.1.0"
