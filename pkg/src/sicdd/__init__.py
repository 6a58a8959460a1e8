"""Detection and rate estimation for oversampled direct-detection links:
exact trellis (FBA) and Gibbs-sampling APP detectors, SDD/SIC/MSD/JDD
information rates and polar-coded multilevel SIC."""
from .modem import Alphabet, build_alphabet, diff_encode, diff_decode, sp_split, ps_merge
from .linkmodel import LinkConfig, TapSet, derive_taps, make_frame, ObservationFrame
from .auxmodel import AuxChannel, truncate_taps, fit_moments
from .fba import run_fba, ConditioningMask, StateBudgetError, InconsistentContext
from .gibbs import GibbsConfig, estimate_apps
from .rates import (RateEstimate, estimate_jdd, estimate_sdd, estimate_sic, estimate_msd,
                    estimate_bsic, estimate_bsic_gibbs, exact_rates)

__version__ = "0.1.0"
