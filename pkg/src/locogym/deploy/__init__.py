"""Policy export, the fixed-rate runtime, parallel-mechanism conversion and latency measurement."""

from .latency import LatencyTrial, NoMovementDetected, measure_latency, summarize, write_report
from .mechanism import (
    IdentityMechanism,
    MotorCommand,
    ParallelMechanism,
    SingularJacobian,
    TwoRodAnkle,
    WorkspaceError,
    parallel_from_serial,
    serial_from_parallel,
)
from .runtime import (
    CommandFrame,
    InterfaceError,
    LoopReport,
    ObservationAssembler,
    RuntimeTick,
    SimulatedRobot,
    run_policy_loop,
)
from .snapshot import (
    PolicySnapshot,
    SnapshotChecksumError,
    SnapshotDimensionError,
    SnapshotError,
    SnapshotFormatError,
    SnapshotVersionError,
    export_snapshot,
    load_snapshot,
    snapshot_from_trainer,
)

__all__ = [
    "LatencyTrial", "NoMovementDetected", "measure_latency", "summarize", "write_report",
    "IdentityMechanism", "MotorCommand", "ParallelMechanism", "SingularJacobian", "TwoRodAnkle",
    "WorkspaceError", "parallel_from_serial", "serial_from_parallel",
    "CommandFrame", "InterfaceError", "LoopReport", "ObservationAssembler", "RuntimeTick", "SimulatedRobot",
    "run_policy_loop",
    "PolicySnapshot", "SnapshotChecksumError", "SnapshotDimensionError", "SnapshotError", "SnapshotFormatError",
    "SnapshotVersionError", "export_snapshot", "load_snapshot", "snapshot_from_trainer",
]
