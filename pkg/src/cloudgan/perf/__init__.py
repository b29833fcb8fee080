from .calibrate import (
    DATASET_SIZE, CalibrationError, CalibrationResult, NMResult, Preset, calibrate, gpu_preset, nelder_mead,
    per_core_epoch_seconds, preset, read_measured_csv, tpu_preset, weak_scaling_points,
)
from .model import (
    DEVICES, ClusterTopology, DeviceSpec, PerfParams, ScalingPoint, TimeBreakdown, TopologyError,
    epoch_time, profile_breakdown, ring_allreduce_time, scaling_curve, simulate_batches, step_time,
    steps_per_epoch,
)
