"""Numerical laboratory for signal estimation under random cyclic shifts:
ring arithmetic, moment tensors, sparse generators, beltway recovery,
restricted-MLE EM, curvature probes, and an experiment harness.
"""

from .ring import GroupElement, Signal, align, reflect, rho, shift, varrho
from .spectral import (MomentTensor, Spectrum, autocorrelation, convolve,
                       delta_m, dft, idft, power_spectrum, second_moment,
                       toeplitz)
from .gensig import (DiluteClassSpec, GenericSignalSpec, cosine_functional,
                     difference_multiset, gen_collision_free,
                     gen_symm_bernoulli_gaussian, gen_symm_interval,
                     is_collision_free)
from .beltway import (DifferenceProfile, max_collision_free_size,
                      recover_from_power_spectrum, solve_beltway)
from .mra import (Dataset, MraConfig, RestrictedClass, em_restricted_mle,
                  kl_monte_carlo, log_density, log_likelihood, simulate)
from .probes import (FrequencySet, GoodSetParams, adversarial_direction,
                     dilute_lower_bound_check, good_set_report,
                     lambda_construct, moderate_curvature_check,
                     moment_sandwich_probe, uup_check, uup_sample)
from .experiments import (ExperimentConfig, ExperimentResult, run_experiment,
                          run_kl_curvature_scan, run_rate_scan,
                          run_sparsity_scan)

__version__ = "0.1.0"
