"""Hierarchical Ewens-Pitman partitions: samplers, exact laws and limit theorems."""
from .epm_core import EpmParams, PartitionStats, estimate_alpha, p_alpha_r, sample_partition
from .rng import RngSpec

__all__ = ["EpmParams", "PartitionStats", "RngSpec", "estimate_alpha", "p_alpha_r",
           "sample_partition"]
__version__ = "0.1.0"
