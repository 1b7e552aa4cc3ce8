"""Ball construction, comparison fields, renormalized energy and weak-L2 estimates for point vortices in the plane."""

from .annuli import Annulus, AnnuliCollection, McrPartition, annuli_from_trace, mcr_brute, mcr_exact, mcr_paper_partition
from .core import Ball, BackgroundMeasure, Cutoff, PointConfig, Region, make_standard_cutoff, separation
from .energy import EnergyReport, ExtrapolationError, energy_density, renormalized_energy
from .fields import AnalyticField, circulation, make_G, synthetic_j
from .geometry import GrowthTrace, collection_at, grow, growth_family, initial_collection, merge_balls, next_merge_scale
from .lorentz import SampledField, distribution_function, embedding_check, lorentz_norm, lp_norm, quasi_norm, sample_field
from .verify import (
    build_covering,
    check_annulus_bounds,
    check_corollary,
    check_theorem_main,
    localized_construction,
    scaling_study,
)

__version__ = "0.1.0"
