"""Conversion between motor space and the virtual serial joints a policy was trained on.

The bundled mechanism is an illustrative two-pushrod ankle: two crank motors
drive rods attached to the foot plate, and the plate's pitch and roll follow
from the two rod constraints in closed form. Its dimensions are made up for
desk testing; they do not describe any particular robot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class WorkspaceError(ValueError):
    pass


class SingularJacobian(ArithmeticError):
    pass


@dataclass(frozen=True)
class MotorCommand:
    torque: np.ndarray
    held: bool = False  # True when the Jacobian was singular and the previous command was kept


class ParallelMechanism:
    """Forward map ``q_s = f(m)`` with analytic Jacobian ``J = df/dm`` and motor-space limits."""

    num_motors: int
    motor_limit: np.ndarray
    torque_limit: np.ndarray
    kp: np.ndarray
    kd: np.ndarray

    def forward(self, m) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, m) -> np.ndarray:
        raise NotImplementedError

    def check(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (self.num_motors,):
            raise WorkspaceError(f"expected {self.num_motors} motor positions, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(np.abs(m) > self.motor_limit):
            raise WorkspaceError(f"motor position {m} outside the workspace |m| <= {self.motor_limit}")
        return m

    def inverse(self, q_s, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
        """Motor positions for serial coordinates ``q_s`` by damped Newton iteration from m = 0."""
        q_s = np.asarray(q_s, dtype=np.float64)
        m = np.zeros(self.num_motors)
        err = self.forward(m) - q_s
        for _ in range(max_iter):
            if np.max(np.abs(err)) < tol:
                return m
            step = np.linalg.solve(self.jacobian(m), err)
            alpha = 1.0
            while True:
                trial = np.clip(m - alpha * step, -self.motor_limit, self.motor_limit)
                trial_err = self.forward(trial) - q_s
                if np.linalg.norm(trial_err) < np.linalg.norm(err) or alpha < 1e-6:
                    break
                alpha *= 0.5
            m, err = trial, trial_err
        if np.max(np.abs(err)) > 1e-9:
            raise WorkspaceError(f"serial target {q_s} is not reachable inside the motor workspace")
        return m


@dataclass
class IdentityMechanism(ParallelMechanism):
    """Motors are the serial joints."""

    num_motors: int = 1
    motor_limit: np.ndarray = None  # type: ignore[assignment]
    torque_limit: np.ndarray = None  # type: ignore[assignment]
    kp: np.ndarray = None  # type: ignore[assignment]
    kd: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        n = self.num_motors
        self.motor_limit = np.full(n, np.inf) if self.motor_limit is None else np.asarray(self.motor_limit, float)
        self.torque_limit = np.full(n, np.inf) if self.torque_limit is None else np.asarray(self.torque_limit, float)
        self.kp = np.zeros(n) if self.kp is None else np.asarray(self.kp, float)
        self.kd = np.zeros(n) if self.kd is None else np.asarray(self.kd, float)

    def forward(self, m) -> np.ndarray:
        return np.array(m, dtype=np.float64)

    def jacobian(self, m) -> np.ndarray:
        return np.eye(self.num_motors)


@dataclass
class TwoRodAnkle(ParallelMechanism):
    """Pitch/roll ankle driven by two cranks of radius ``crank`` through vertical rods.

    The rods attach to the foot plate at ``+-rod_spacing`` laterally and
    ``lever`` ahead of the pitch axis. Crank angles ``m1, m2`` lift the rods
    by ``crank * sin(m)``; the plate answers with

        pitch = asin(crank (sin m1 + sin m2) / (2 lever))
        roll  = asin(crank (sin m1 - sin m2) / (2 rod_spacing cos pitch))
    """

    lever: float = 0.05
    rod_spacing: float = 0.04
    crank: float = 0.035
    num_motors: int = 2
    motor_limit: np.ndarray = field(default_factory=lambda: np.full(2, 0.6))
    torque_limit: np.ndarray = field(default_factory=lambda: np.full(2, 40.0))
    kp: np.ndarray = field(default_factory=lambda: np.full(2, 150.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(2, 6.0))

    def _terms(self, m):
        m1, m2 = float(m[0]), float(m[1])
        s1, s2, c1, c2 = math.sin(m1), math.sin(m2), math.cos(m1), math.cos(m2)
        sp = self.crank * (s1 + s2) / (2.0 * self.lever)
        pitch = math.asin(sp)
        cp = math.cos(pitch)
        sr = self.crank * (s1 - s2) / (2.0 * self.rod_spacing * cp)
        return s1, s2, c1, c2, sp, pitch, cp, sr

    def forward(self, m) -> np.ndarray:
        *_, pitch, _, sr = self._terms(m)
        return np.array([pitch, math.asin(sr)])

    def jacobian(self, m) -> np.ndarray:
        _, _, c1, c2, sp, pitch, cp, sr = self._terms(m)
        k_p = self.crank / (2.0 * self.lever * math.sqrt(1.0 - sp * sp))
        dp = np.array([k_p * c1, k_p * c2])
        k_r = self.crank / (2.0 * self.rod_spacing * cp)
        # sr depends on m directly and through 1/cos(pitch)
        dsr = np.array([k_r * c1, -k_r * c2]) + sr * math.tan(pitch) * dp
        dr = dsr / math.sqrt(1.0 - sr * sr)
        return np.vstack([dp, dr])


def serial_from_parallel(mech: ParallelMechanism, m, mdot) -> tuple[np.ndarray, np.ndarray]:
    """Virtual serial joint position and velocity from motor feedback."""
    m = mech.check(m)
    mdot = np.asarray(mdot, dtype=np.float64)
    return mech.forward(m), mech.jacobian(m) @ mdot


def parallel_from_serial(mech: ParallelMechanism, q_s_des, m, mdot, hold=None,
                         min_det: float = 1e-9) -> MotorCommand:
    """Serial-space PD mapped to motor torques through the transposed Jacobian, then clamped."""
    m = mech.check(m)
    mdot = np.asarray(mdot, dtype=np.float64)
    q_s_des = np.asarray(q_s_des, dtype=np.float64)
    if isinstance(mech, IdentityMechanism):
        tau = mech.kp * (q_s_des - m) - mech.kd * mdot
        return MotorCommand(np.clip(tau, -mech.torque_limit, mech.torque_limit))
    J = mech.jacobian(m)
    if not np.all(np.isfinite(J)) or abs(np.linalg.det(J)) < min_det:
        held = np.zeros(mech.num_motors) if hold is None else np.asarray(hold, dtype=np.float64)
        return MotorCommand(held.copy(), held=True)
    tau_s = mech.kp * (q_s_des - mech.forward(m)) - mech.kd * (J @ mdot)
    return MotorCommand(np.clip(J.T @ tau_s, -mech.torque_limit, mech.torque_limit))
