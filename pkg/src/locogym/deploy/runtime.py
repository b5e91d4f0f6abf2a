"""Fixed-rate inference loop and the robot-interface boundary.

A robot interface exchanges two message shapes with the loop:

``SensorFrame`` (robot -> loop), see ``locogym.env.observations``:
    joint_pos (n,) rad, joint_vel (n,) rad/s, base_ang_vel (3,) rad/s in the
    base frame, gravity (3,) unit vector in the base frame, timestamp s.

``CommandFrame`` (loop -> robot):
    q_des (n,) rad joint targets for the on-board PD, timestamp s, tick.

Any object with ``read_sensors() -> SensorFrame`` and
``send_command(CommandFrame)`` can be driven. Simulated interfaces also expose
``advance(seconds)``; for hardware the loop sleeps on a monotonic clock.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..dynamics import ActuatorConfig, ContactParams, PhysicsState, RobotModel, pack_model, planar_biped, step
from ..env.commands import CommandVector, GaitClock
from ..env.delay import DelayLine
from ..env.observations import SensorFrame, actor_observation
from .snapshot import PolicySnapshot


class InterfaceError(RuntimeError):
    """A sensor read or command write failed."""


@dataclass(frozen=True)
class CommandFrame:
    q_des: np.ndarray
    timestamp: float
    tick: int = 0


@dataclass(frozen=True)
class RuntimeTick:
    tick: int
    ingest_time: float
    inference_duration: float
    q_des: np.ndarray
    deadline_met: bool


@dataclass
class LoopReport:
    ticks: list[RuntimeTick] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class SimulatedRobot:
    """Robot interface backed by the rigid-body simulator.

    ``delay`` seconds separate a command write from the moment the joint PD
    starts tracking it. With ``bench=True`` the base is clamped in place and
    gravity is off, which isolates the actuator response for latency tests.
    """

    def __init__(self, model: RobotModel | None = None, *, delay: float = 0.0, physics_dt: float = 0.001,
                 actuator: ActuatorConfig | None = None, contact: ContactParams | None = None,
                 bench: bool = False, base_height: float | None = None):
        model = model or planar_biped()
        if bench:
            import dataclasses
            model = dataclasses.replace(model, fixed_base=True, gravity=0.0)
        self.model = model
        self.arrays = pack_model(model)
        self.dt = physics_dt
        self.delay_ticks = int(round(delay / physics_dt))
        self.actuator = actuator or ActuatorConfig.from_model(model)
        self.contact = contact or ContactParams()
        self.bench = bench
        self._base_height = base_height
        self.reset()

    def reset(self, q_joints=None) -> None:
        from ..dynamics import standing_height
        qj = self.model.q0 if q_joints is None else np.asarray(q_joints, dtype=np.float64)
        z = 1.0 if self.bench else (self._base_height or standing_height(self.model, qj))
        self.state = PhysicsState(q=np.concatenate([[0.0, z, 0.0], qj]), v=np.zeros(self.model.ndof))
        self.tick = 0
        self.delay = DelayLine(qj)

    @property
    def time(self) -> float:
        return self.tick * self.dt

    def read_sensors(self) -> SensorFrame:
        q, v = self.state.q, self.state.v
        return SensorFrame(joint_pos=q[3:].copy(), joint_vel=v[3:].copy(), base_ang_vel=np.array([0.0, v[2], 0.0]),
                           gravity=np.array([np.sin(q[2]), 0.0, -np.cos(q[2])]), timestamp=self.time)

    def send_command(self, frame: CommandFrame) -> None:
        q_des = np.asarray(frame.q_des, dtype=np.float64)
        if q_des.shape != (self.model.num_joints,):
            raise InterfaceError(f"command has {q_des.shape} targets, robot has {self.model.num_joints} joints")
        self.delay.push(q_des, self.tick, self.delay_ticks)

    def advance_ticks(self, n: int) -> None:
        if n <= 0:
            return
        sched = self.delay.schedule(self.tick, n)
        out = step(self.model, self.state, sched, self.actuator, self.contact, n, self.dt, arrays=self.arrays)
        if not out.ok:
            raise InterfaceError("simulated robot state became non-finite")
        self.state = out.state
        self.tick += n

    def advance(self, seconds: float) -> None:
        self.advance_ticks(int(round(seconds / self.dt)))


class ObservationAssembler:
    """Builds actor observations exactly as the training env does, from raw sensor frames."""

    def __init__(self, snap: PolicySnapshot, command: CommandVector | None = None):
        self.snap = snap
        self.command = command or CommandVector()
        self.gait = GaitClock(snap.gait_frequency)
        self.gait.set_active(not self.command.stand_still)
        self.prev_action = np.zeros(snap.num_joints)

    def set_command(self, command: CommandVector) -> None:
        self.command = command
        self.gait.set_active(not command.stand_still)

    def observe(self, sensors: SensorFrame) -> np.ndarray:
        return actor_observation(self.snap.layout, self.command.as_array(), self.gait.observation(), sensors,
                                 self.snap.q0, self.prev_action)

    def after_action(self, action: np.ndarray, dt: float) -> None:
        self.prev_action = np.clip(action, -self.snap.clip_actions, self.snap.clip_actions)
        self.gait.advance(dt)


def run_policy_loop(snap: PolicySnapshot, robot, num_ticks: int, *, command: CommandVector | None = None,
                    command_schedule: Optional[Callable[[int], CommandVector]] = None,
                    clock: Callable[[], float] = time.perf_counter,
                    realtime: Optional[bool] = None) -> LoopReport:
    """Run ``num_ticks`` control ticks of read, infer, write.

    A tick whose inference overruns ``control_dt`` is flagged and the previous
    command is re-sent instead of the late one. Interface failures end the
    loop; the report keeps the ticks completed before the failure.
    """
    dt = snap.control_dt
    assembler = ObservationAssembler(snap, command)
    held = snap.q0.copy()
    report = LoopReport()
    if realtime is None:
        realtime = not hasattr(robot, "advance")
    next_deadline = clock()
    for k in range(num_ticks):
        if command_schedule is not None:
            cmd = command_schedule(k)
            if cmd != assembler.command:
                assembler.set_command(cmd)
        try:
            ingest = clock()
            sensors = robot.read_sensors()
            obs = assembler.observe(sensors)
            action = snap.act(obs)
            q_des = snap.joint_targets(action)
            duration = clock() - ingest
            met = duration < dt
            if met:
                held = q_des
            robot.send_command(CommandFrame(held.copy(), sensors.timestamp, k))
        except InterfaceError as exc:
            report.error = f"tick {k}: {exc}"
            return report
        assembler.after_action(action, dt)
        report.ticks.append(RuntimeTick(k, ingest, duration, held.copy(), met))
        try:
            if realtime:
                next_deadline += dt
                pause = next_deadline - clock()
                if pause > 0:
                    time.sleep(pause)
            else:
                robot.advance(dt)
        except InterfaceError as exc:
            report.error = f"tick {k}: {exc}"
            return report
    return report
