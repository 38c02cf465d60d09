"""Phaseless near-field to far-field transformation with partially coherent probe arrays."""

from .fields import Dipole, SingularPointError, SourceModel, assemble_forward, dipole_efield, dipole_farfield, evaluate_farfield
from .measurement import BCFactors, PCData, add_noise, build_bc, reduce_to_pc, simulate
from .metrics import align_global_phase, empirical_snr_db, ff_cut_error_db, nf_deviation_db, validity_mask
from .scenario import (ChannelSet, ConfigurationError, Pose, ProbeArray, TruncationSpec, make_aut_sources,
                       make_cylindrical_trajectory, probe_channels, sample_sphere_sources, standard_probe_array,
                       zero_region_samples)
from .solvers import (OperatorBundle, SolveReport, SolverOptions, augment_with_zero_samples, check_uniqueness,
                      decompose, lc_augment, reconstruct_sources, solve_linearized_pc, solve_magnitude_only,
                      spectral_init)

__version__ = "0.1.0"
