"""Value-semantics simulator API on top of the selected kernel backend."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache
from types import ModuleType
from typing import Optional

import numpy as np

from .backend import kernels as _default_kernels
from .errors import SingularMassMatrix
from .model import ModelArrays, RobotModel, pack_model


@dataclass(frozen=True)
class PhysicsState:
    q: np.ndarray  # (x, z, pitch, joints...)
    v: np.ndarray
    t: float = 0.0
    ext_force: np.ndarray = field(default_factory=lambda: np.zeros(2))
    ext_torque: float = 0.0
    ext_time_left: float = 0.0

    @property
    def joint_pos(self) -> np.ndarray:
        return self.q[3:]

    @property
    def joint_vel(self) -> np.ndarray:
        return self.v[3:]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v)))

    def copy(self, **changes) -> "PhysicsState":
        base = dict(q=self.q.copy(), v=self.v.copy(), ext_force=self.ext_force.copy())
        base.update(changes)
        return dataclasses.replace(self, **base)


@dataclass(frozen=True)
class ActuatorConfig:
    kp: np.ndarray
    kd: np.ndarray
    friction: np.ndarray
    tau_max: np.ndarray

    def __post_init__(self):
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("PD gains must be non-negative")
        if np.any(self.tau_max <= 0):
            raise ValueError("torque limits must be positive")

    @classmethod
    def from_model(cls, model: RobotModel, kp=None, kd=None) -> "ActuatorConfig":
        n = model.num_joints
        kp_arr = np.array([j.kp for j in model.joints], dtype=np.float64) if kp is None else np.broadcast_to(np.asarray(kp, float), (n,)).copy()
        kd_arr = np.array([j.kd for j in model.joints], dtype=np.float64) if kd is None else np.broadcast_to(np.asarray(kd, float), (n,)).copy()
        return cls(kp_arr, kd_arr, np.array([j.friction for j in model.joints], dtype=np.float64), model.tau_max())


@dataclass(frozen=True)
class ContactParams:
    mu: float = 1.0
    stiffness: float = 1.0e5
    damping: float = 1000.0
    restitution: float = 0.0
    tangential_damping: float = 1000.0
    terrain_x: np.ndarray = field(default_factory=lambda: np.array([-1.0, 1.0]))
    terrain_z: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("friction coefficient must be >= 0")
        if self.stiffness <= 0:
            raise ValueError("contact stiffness must be > 0")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        tx = np.asarray(self.terrain_x, dtype=np.float64)
        if tx.shape[0] < 2 or np.any(np.diff(tx) <= 0):
            raise ValueError("terrain breakpoints must be strictly increasing (>= 2)")

    @classmethod
    def sloped(cls, slope: float, **kw) -> "ContactParams":
        """Plane through the origin inclined by ``slope`` radians (uphill toward +x)."""
        t = float(np.tan(slope))
        return cls(terrain_x=np.array([-1.0, 1.0]), terrain_z=np.array([-t, t]), **kw)

    def packed(self) -> np.ndarray:
        return np.array([self.mu, self.stiffness, self.damping, self.restitution, self.tangential_damping])

    def ground_height(self, x):
        tx = np.asarray(self.terrain_x, dtype=np.float64)
        tz = np.asarray(self.terrain_z, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        k = np.clip(np.searchsorted(tx, x, side="left") - 1, 0, tx.shape[0] - 2)
        slope = (tz[k + 1] - tz[k]) / (tx[k + 1] - tx[k])
        return tz[k] + slope * (x - tx[k])


@dataclass(frozen=True)
class FootState:
    """Per-foot arrays, leading dimension = number of feet."""

    position: np.ndarray  # (nf, 3) world x, lateral y, z
    velocity: np.ndarray  # (nf, 3)
    pitch: np.ndarray  # (nf,) absolute foot angle
    height: np.ndarray  # (nf,) site z minus ground height at site x
    in_contact: np.ndarray  # (nf,) bool, height <= 0


@dataclass(frozen=True)
class ContactReport:
    body_forces: np.ndarray  # (nb, 2) world force on each body
    touching: np.ndarray  # (nb,) bool
    n_collision: int


@dataclass(frozen=True)
class StepOutput:
    state: PhysicsState
    feet: FootState
    contacts: ContactReport
    mean_torque: np.ndarray
    ok: bool


@lru_cache(maxsize=256)
def _packed(model: RobotModel) -> ModelArrays:
    return pack_model(model)


def _arrays(model: RobotModel, arrays: Optional[ModelArrays]) -> ModelArrays:
    return arrays if arrays is not None else _packed(model)


def _tz(contact: ContactParams):
    return (np.ascontiguousarray(contact.terrain_x, dtype=np.float64),
            np.ascontiguousarray(contact.terrain_z, dtype=np.float64))


def pd_torque(cfg: ActuatorConfig, q_des, q, qdot) -> np.ndarray:
    """Joint-space PD with zero desired velocity, dry friction, and saturation."""
    q_des, q, qdot = (np.asarray(a, dtype=np.float64) for a in (q_des, q, qdot))
    if not (q_des.shape == q.shape == qdot.shape == cfg.kp.shape):
        raise ValueError(f"dimension mismatch: q_des {q_des.shape}, q {q.shape}, qdot {qdot.shape}, gains {cfg.kp.shape}")
    tau = cfg.kp * (q_des - q) - cfg.kd * qdot - cfg.friction * np.sign(qdot)
    return np.clip(tau, -cfg.tau_max, cfg.tau_max)


def mass_matrix(model: RobotModel, q, *, kernels: ModuleType = _default_kernels) -> np.ndarray:
    return kernels.mass_matrix(_packed(model), np.ascontiguousarray(q, dtype=np.float64))


def bias_forces(model: RobotModel, q, v, *, kernels: ModuleType = _default_kernels) -> np.ndarray:
    return kernels.bias_forces(_packed(model), np.ascontiguousarray(q, dtype=np.float64),
                               np.ascontiguousarray(v, dtype=np.float64))


def forward_dynamics(model: RobotModel, state: PhysicsState, joint_torques, contact: ContactParams,
                     *, kernels: ModuleType = _default_kernels) -> np.ndarray:
    """Generalized acceleration including contacts and the active external wrench."""
    if not state.is_finite():
        raise ValueError("state must be finite")
    ext = np.zeros(3)
    if state.ext_time_left > 0:
        ext[:2] = state.ext_force
        ext[2] = state.ext_torque
    tx, tz = _tz(contact)
    return kernels.forward_dynamics(
        _packed(model), np.ascontiguousarray(state.q, dtype=np.float64),
        np.ascontiguousarray(state.v, dtype=np.float64),
        np.ascontiguousarray(joint_torques, dtype=np.float64), contact.packed(), tx, tz, ext)


def kinetic_energy(model: RobotModel, state: PhysicsState, **kw) -> float:
    return 0.5 * float(state.v @ mass_matrix(model, state.q, **kw) @ state.v)


def potential_energy(model: RobotModel, state: PhysicsState, *, kernels: ModuleType = _default_kernels) -> float:
    _, _, com, _, _ = kernels.body_kinematics(_packed(model), np.ascontiguousarray(state.q, dtype=np.float64),
                                              np.zeros_like(state.v))
    masses = np.array([b.mass for b in model.bodies])
    return float(model.gravity * masses @ com[:, 1])


def foot_states(model: RobotModel, state: PhysicsState, contact: ContactParams, *,
                arrays: Optional[ModelArrays] = None, kernels: ModuleType = _default_kernels) -> FootState:
    arr = _arrays(model, arrays)
    bodies = np.array([f.body for f in model.feet], dtype=np.int64)
    local = np.ascontiguousarray(np.array([f.local for f in model.feet], dtype=np.float64).reshape(-1, 2))
    pos2, vel2, ang = kernels.point_kinematics(arr, np.ascontiguousarray(state.q), np.ascontiguousarray(state.v),
                                               bodies, local)
    nf = len(model.feet)
    lateral = np.array([f.lateral for f in model.feet])
    position = np.column_stack([pos2[:, 0], lateral, pos2[:, 1]]) if nf else np.zeros((0, 3))
    velocity = np.column_stack([vel2[:, 0], np.zeros(nf), vel2[:, 1]]) if nf else np.zeros((0, 3))
    height = pos2[:, 1] - contact.ground_height(pos2[:, 0]) if nf else np.zeros(0)
    return FootState(position, velocity, ang, height, height <= 0.0)


def _collisions(model: RobotModel, touching: np.ndarray) -> int:
    feet = model.foot_bodies
    return int(sum(1 for b, t in enumerate(touching) if t and b not in feet))


def step(model: RobotModel, state: PhysicsState, q_des, actuator: ActuatorConfig, contact: ContactParams,
         substeps: int, dt: float, *, arrays: Optional[ModelArrays] = None,
         kernels: ModuleType = _default_kernels) -> StepOutput:
    """Advance ``substeps`` physics ticks of length ``dt``, re-evaluating PD every tick.

    ``q_des`` is either one joint vector held for all ticks or a ``(substeps, n)``
    per-tick schedule (how the environment applies actuation delay). A
    non-finite result is reported through ``ok=False`` rather than raised.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    n = model.num_joints
    sched = np.asarray(q_des, dtype=np.float64)
    if sched.ndim == 1:
        sched = np.broadcast_to(sched, (substeps, n))
    if sched.shape != (substeps, n):
        raise ValueError(f"q_des must have shape ({n},) or ({substeps}, {n}), got {sched.shape}")
    sched = np.ascontiguousarray(sched)
    arr = _arrays(model, arrays)
    q = np.array(state.q, dtype=np.float64)
    v = np.array(state.v, dtype=np.float64)
    ext = np.array([state.ext_force[0], state.ext_force[1], state.ext_torque])
    ext_ticks = int(round(state.ext_time_left / dt)) if state.ext_time_left > 0 else 0
    tx, tz = _tz(contact)
    ticks_left, mean_tau, body_force, touching, ok = kernels.simulate(
        arr, q, v, sched, actuator.kp, actuator.kd, actuator.friction, actuator.tau_max,
        contact.packed(), tx, tz, ext, ext_ticks, dt)
    new_state = PhysicsState(
        q=q, v=v, t=state.t + substeps * dt,
        ext_force=state.ext_force.copy() if ticks_left > 0 else np.zeros(2),
        ext_torque=state.ext_torque if ticks_left > 0 else 0.0,
        ext_time_left=ticks_left * dt,
    )
    ok = bool(ok) and new_state.is_finite()
    feet = foot_states(model, new_state, contact, arrays=arr, kernels=kernels) if ok else _nan_feet(model)
    touching = touching.astype(bool)
    report = ContactReport(body_force, touching, _collisions(model, touching))
    return StepOutput(new_state, feet, report, mean_tau, ok)


def _nan_feet(model: RobotModel) -> FootState:
    nf = len(model.feet)
    nan2 = np.full((nf, 3), np.nan)
    return FootState(nan2, nan2.copy(), np.full(nf, np.nan), np.full(nf, np.nan), np.zeros(nf, bool))


def apply_external_wrench(model: RobotModel, state: PhysicsState, force, torque: float, duration: float,
                          *, kernels: ModuleType = _default_kernels) -> PhysicsState:
    """Register a base wrench for ``duration`` seconds, or apply it as an impulse.

    With ``duration == 0`` the wrench is an impulse (N s, N m s) at the base
    origin: ``dv = M^-1 J_base^T impulse``. For a single free body with its CoM
    at the base origin this is exactly ``impulse / mass``.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    force = np.asarray(force, dtype=np.float64).reshape(2)
    if duration == 0:
        if not np.any(force) and torque == 0:
            return state.copy()
        if model.fixed_base:
            return state.copy()
        M = mass_matrix(model, state.q, kernels=kernels)
        rhs = np.zeros(model.ndof)
        rhs[:2] = force
        rhs[2] = torque
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise SingularMassMatrix("mass matrix is not positive definite") from exc
        dv = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        return state.copy(v=state.v + dv)
    return state.copy(ext_force=force.copy(), ext_torque=float(torque), ext_time_left=float(duration))


def initial_state(model: RobotModel, q_joints=None, *, base_z: float = 0.0, base_x: float = 0.0,
                  pitch: float = 0.0) -> PhysicsState:
    q = np.zeros(model.ndof)
    q[0], q[1], q[2] = base_x, base_z, pitch
    q[3:] = model.q0 if q_joints is None else q_joints
    return PhysicsState(q=q, v=np.zeros(model.ndof))


def standing_height(model: RobotModel, q_joints=None, pitch: float = 0.0, *,
                    kernels: ModuleType = _default_kernels) -> float:
    """Base height at which the lowest contact point just touches flat ground at z=0."""
    st = initial_state(model, q_joints, pitch=pitch)
    arr = _packed(model)
    if arr.cp_body.shape[0] == 0:
        return 0.0
    pos, _, _ = kernels.point_kinematics(arr, st.q, st.v, arr.cp_body, arr.cp_local)
    return float(-pos[:, 1].min())
