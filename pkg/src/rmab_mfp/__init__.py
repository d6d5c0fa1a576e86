"""Planning toolkit for clustered restless multi-armed bandits.

The fluid (mean-field) LP planner, Whittle index baselines, a seeded count
simulator and closed-form bound calculators.
"""
__version__ = "0.1.0"

from .core import InstanceError, RmabInstance, stationary_instance, validate_instance  # noqa: E402
from .lp import FluidPlan, LpFailure, build_meanfield_lp, mean_field_value  # noqa: E402
from .meanfield import MfpPolicy, OneShotPolicy, bucket_sample, mfp_step, round_counts  # noqa: E402
from .policies import NobodyPolicy, Policy, PriorityPolicy, RandomPolicy  # noqa: E402
from .sim import evaluate_policy, exact_optimal_value, run_replications, simulate_trajectory  # noqa: E402
from .whittle import WhittleFinitePolicy, WhittlePolicy, compute_index_table, whittle_index  # noqa: E402

__all__ = [
    "FluidPlan", "InstanceError", "LpFailure", "MfpPolicy", "NobodyPolicy", "OneShotPolicy", "Policy",
    "PriorityPolicy", "RandomPolicy", "RmabInstance", "WhittleFinitePolicy", "WhittlePolicy",
    "build_meanfield_lp", "bucket_sample", "compute_index_table", "evaluate_policy", "exact_optimal_value",
    "mean_field_value", "mfp_step", "round_counts", "run_replications", "simulate_trajectory",
    "stationary_instance", "validate_instance", "whittle_index",
]
