"""Spectra of dot-product kernels on the unit sphere, norm-constrained kernel
ridge regression, and desk-scale sup-norm learnability experiments."""

from .errors import (FitError, NonPsdKernelError, NumericalError,
                     QuadratureError, ValidationError, ZonalError)
from .orthopoly import (QuadratureRule, legendre_eval, legendre_table,
                        quadrature_rule, weighted_inner)
from .harmonics import (SpherePointSet, cumulative_dim, log_multiplicity,
                        multiplicity, sphere_sample, zonal_product_check)
from .spectra import (KernelSpec, RateModel, Spectrum, activation_coefficient,
                      builtin_kernel, compute_spectrum, fit_beta,
                      fit_tail_exponent, gaussian_dim_scan, kernel_profile,
                      mercer_reconstruct, predicted_rate, q_factor,
                      spectrum_to_csv, synth_activation, tail)
from .krr import (Dataset, KrrModel, NoiseModel, fit_constrained, gram,
                  predict, sample_target, sup_norm_estimate)
from .gap import (GapCertificate, delta_estimate, hard_function,
                  project_neuron, rf_ball_objective)
from .harness import (BoundTerms, ExperimentConfig, LearningCurveReport,
                      bound_curves, fit_rate, run_curve, write_report)

__version__ = "0.1.0"
