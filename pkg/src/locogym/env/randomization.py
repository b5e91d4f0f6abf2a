"""Per-episode physical, actuator, contact and latency parameter draws."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..config import RandomizationConfig
from ..dynamics import ActuatorConfig, ContactParams, RobotModel


@dataclass(frozen=True)
class RandomizationSample:
    mass_scale: np.ndarray  # (nb,)
    com_offset: np.ndarray  # (nb, 2)
    kp_scale: np.ndarray  # (n,)
    kd_scale: np.ndarray  # (n,)
    joint_friction: np.ndarray  # (n,)
    contact_friction: float
    contact_stiffness: float
    restitution: float
    delay: float  # seconds
    delay_ticks: int  # whole physics ticks
    terrain_slope: float
    next_push_time: float  # seconds since reset; inf when pushes are off

    def apply(self, model: RobotModel, base_actuator: ActuatorConfig, base_contact: ContactParams):
        """Return (model, actuator, contact) for one env with this draw applied."""
        m = model.randomized(self.mass_scale, self.com_offset)
        act = ActuatorConfig(base_actuator.kp * self.kp_scale, base_actuator.kd * self.kd_scale,
                             self.joint_friction.copy(), base_actuator.tau_max.copy())
        contact = dataclasses.replace(
            ContactParams.sloped(self.terrain_slope, damping=base_contact.damping,
                                 tangential_damping=base_contact.tangential_damping),
            mu=self.contact_friction, stiffness=self.contact_stiffness, restitution=self.restitution)
        return m, act, contact


def _u(rng: np.random.Generator, rng_range, size=None):
    lo, hi = rng_range
    return lo + (hi - lo) * rng.random(size)


def sample_randomization(cfg: RandomizationConfig, model: RobotModel, rng: np.random.Generator,
                         physics_dt: float, nominal_contact: ContactParams | None = None) -> RandomizationSample:
    """Draw every randomized quantity; with ``cfg.enabled`` false return the nominal sample."""
    nb, n = len(model.bodies), model.num_joints
    if not cfg.enabled:
        return nominal_sample(model, nominal_contact or ContactParams())
    delay = float(_u(rng, cfg.delay))
    return RandomizationSample(
        mass_scale=_u(rng, cfg.mass_scale, nb),
        com_offset=_u(rng, cfg.com_offset, (nb, 2)),
        kp_scale=_u(rng, cfg.kp_scale, n),
        kd_scale=_u(rng, cfg.kd_scale, n),
        joint_friction=_u(rng, cfg.joint_friction, n),
        contact_friction=float(_u(rng, cfg.contact_friction)),
        contact_stiffness=float(_u(rng, cfg.contact_stiffness)),
        restitution=float(_u(rng, cfg.restitution)),
        delay=delay,
        delay_ticks=int(round(delay / physics_dt)),
        terrain_slope=float(_u(rng, cfg.terrain_slope)),
        next_push_time=float(_u(rng, cfg.push_interval)) if cfg.pushes else float("inf"),
    )


def nominal_sample(model: RobotModel, contact: ContactParams) -> RandomizationSample:
    nb, n = len(model.bodies), model.num_joints
    return RandomizationSample(
        mass_scale=np.ones(nb), com_offset=np.zeros((nb, 2)), kp_scale=np.ones(n), kd_scale=np.ones(n),
        joint_friction=np.array([j.friction for j in model.joints], dtype=np.float64),
        contact_friction=contact.mu, contact_stiffness=contact.stiffness, restitution=contact.restitution,
        delay=0.0, delay_ticks=0, terrain_slope=0.0, next_push_time=float("inf"),
    )


def sample_within(sample: RandomizationSample, cfg: RandomizationConfig) -> bool:
    """Audit: every drawn value lies inside its configured range."""
    if not cfg.enabled:
        return True

    def inside(x, r):
        x = np.asarray(x)
        return bool(np.all((x >= r[0]) & (x <= r[1])))

    checks = [
        inside(sample.mass_scale, cfg.mass_scale),
        inside(sample.com_offset, cfg.com_offset),
        inside(sample.kp_scale, cfg.kp_scale),
        inside(sample.kd_scale, cfg.kd_scale),
        inside(sample.joint_friction, cfg.joint_friction),
        inside(sample.contact_friction, cfg.contact_friction),
        inside(sample.contact_stiffness, cfg.contact_stiffness),
        inside(sample.restitution, cfg.restitution),
        inside(sample.delay, cfg.delay),
        inside(sample.terrain_slope, cfg.terrain_slope),
    ]
    if cfg.pushes:
        checks.append(inside(sample.next_push_time, cfg.push_interval))
    return all(checks)
