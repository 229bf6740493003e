"""Cube-elimination bandit on [0,1]^d whose rewards arrive in committed batches."""
from .engine import RunConfig, RunTrace, run_blin, run_zooming_baseline
from .environments import (
    NoiseModel,
    RewardInstance,
    constant_instance,
    linear_instance,
    two_peak_instance,
)
from .geometry import CubeSet, StandardCube
from .sequences import ACEParams, EdgeLengthSchedule, LogBases

__all__ = [
    "ACEParams",
    "CubeSet",
    "EdgeLengthSchedule",
    "LogBases",
    "NoiseModel",
    "RewardInstance",
    "RunConfig",
    "RunTrace",
    "StandardCube",
    "constant_instance",
    "linear_instance",
    "run_blin",
    "run_zooming_baseline",
    "two_peak_instance",
]
