"""Indoor RF coverage maps: deterministic multipath ground truth plus a
conditional GAN that synthesizes maps for unseen rooms, base-station
positions, antenna arrays, and carrier frequencies."""

__version__ = "0.1.0"

from .antenna import UpaConfig, element_gain, array_factor, upa_gain, rasterize_pattern
from .dataset import (ConditioningSet, FrequencyCode, Sample, SweepConfig,
                      assemble_condition, encode_frequency, run_sweep, split_tasks)
from .propagation import RfMap, enumerate_paths, fresnel_reflection, generate_rf_map, received_power
from .scene import GridSpec, Scene, build_room, rasterize_semantic, room_layout, validate_scene

__all__ = [
    "UpaConfig", "element_gain", "array_factor", "upa_gain", "rasterize_pattern",
    "ConditioningSet", "FrequencyCode", "Sample", "SweepConfig",
    "assemble_condition", "encode_frequency", "run_sweep", "split_tasks",
    "RfMap", "enumerate_paths", "fresnel_reflection", "generate_rf_map", "received_power",
    "GridSpec", "Scene", "build_room", "rasterize_semantic", "room_layout", "validate_scene",
]
