"""Preference-conditioned flow-matching policy over 2D point clouds: multi-
reward fine-tuning with per-channel group advantages, Pareto-front evaluation,
and a live slider inference service."""

__version__ = "0.1.0"

from .flowpolicy import (
    ConditionedVelocityNet,
    PolicyTriple,
    euler_sample,
    euler_sample_batch,
    forward_noise,
    make_velocity_net,
    velocity,
)
from .morl import LossMode, MorlConfig, train_step
from .pareto import FrontPoint, FrontReport, dominates, hypervolume, nondominated_filter
from .rewards import RewardSpec, default_registry, evaluate_vector
from .simplex import PreferenceVector, PrefSampleConfig, sample_preference, uniform_grid

__all__ = [
    "ConditionedVelocityNet",
    "PolicyTriple",
    "euler_sample",
    "euler_sample_batch",
    "forward_noise",
    "make_velocity_net",
    "velocity",
    "LossMode",
    "MorlConfig",
    "train_step",
    "FrontPoint",
    "FrontReport",
    "dominates",
    "hypervolume",
    "nondominated_filter",
    "RewardSpec",
    "default_registry",
    "evaluate_vector",
    "PreferenceVector",
    "PrefSampleConfig",
    "sample_preference",
    "uniform_grid",
    "__version__",
]
