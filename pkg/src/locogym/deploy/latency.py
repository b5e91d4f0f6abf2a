"""Command-to-motion latency measurement with a position step."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import IO, Sequence

import numpy as np

from .runtime import CommandFrame, SimulatedRobot

DEFAULT_STEP = 0.1  # rad


class NoMovementDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class LatencyTrial:
    trial: int
    publish_time: float
    first_change_time: float
    latency_ms: float


def measure_latency(robot: SimulatedRobot, step_magnitude: float = DEFAULT_STEP, *, trials: int = 10,
                    joint: int = 0, threshold: float = 1e-9, timeout: float = 0.5,
                    settle: float = 0.05) -> list[LatencyTrial]:
    """Publish a step on one joint and time the first feedback sample that moved.

    Feedback is sampled every physics tick and stamped with the robot clock
    at the moment of sampling, so the resolution is one tick.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    out = []
    for k in range(trials):
        robot.reset()
        robot.advance(settle)
        rest = robot.read_sensors().joint_pos[joint]
        q_des = robot.model.q0.copy()
        q_des[joint] += step_magnitude
        publish = robot.time
        robot.send_command(CommandFrame(q_des, publish, k))
        limit = robot.tick + int(round(timeout / robot.dt))
        while True:
            robot.advance_ticks(1)
            frame = robot.read_sensors()
            if abs(frame.joint_pos[joint] - rest) > threshold:
                out.append(LatencyTrial(k, publish, frame.timestamp, 1000.0 * (frame.timestamp - publish)))
                break
            if robot.tick >= limit:
                raise NoMovementDetected(f"trial {k}: joint {joint} did not move within {timeout} s")
    return out


def summarize(trials: Sequence[LatencyTrial]) -> dict:
    lat = np.array([t.latency_ms for t in trials])
    return {"trials": len(trials), "mean_ms": float(lat.mean()), "std_ms": float(lat.std()),
            "min_ms": float(lat.min()), "median_ms": float(np.median(lat)), "max_ms": float(lat.max())}


def write_report(trials: Sequence[LatencyTrial], stream: IO[str]) -> None:
    """JSON lines: one object per trial with trial, publish_time, first_change_time, latency_ms."""
    for t in trials:
        stream.write(json.dumps(asdict(t)) + "\n")
