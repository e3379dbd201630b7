"""Exact and Monte Carlo tools for noisy broadcasting on trees, with checkable
certificates that the leaves carry vanishing information about the root."""

from .channels import (Channel, NoiseChannel, bsc, build_channel, custom_noise, erasure_noise,
                       identity_noise, mix_noise, power_noise, qsym, second_eigenvalue,
                       stationary_distribution)
from .trees import (Antichain, Tree, TreeFamily, bary_tree, build_tree, explicit_tree,
                    good_antichain_sequence, min_antichain_sum, spherical_tree, validate_antichain)
from .broadcast import RNG_ID, sample_configuration, sample_observation
from .exact import AtomSet, antichain_atoms, enumerate_oracle, level_atoms, recursion_step
from .inference import (census_separation, likelihood_vector, reconstruction_error_mc,
                        root_posterior, tv_mc)
from .discrepancy import (ContractionNorm, build_contraction_norm, discrepancy_constants,
                          discrepancy_mc, discrepancy_of_atoms, moment_tensor)
from .certify import (Certificate, certify_bary, certify_finite_tree, epsstar_erasure,
                      epsstar_mix, kstar, verify_decay, verify_file, verify_text)
from .errors import TreeBroadcastError

__version__ = "0.1.0"
