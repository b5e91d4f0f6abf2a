"""Planar robot description and its packed array form.

Conventions (sagittal x-z plane, y into the page):

* a body at angle ``theta`` maps a local point ``p`` to ``R(theta) @ p`` with
  ``R = [[cos, sin], [-sin, cos]]``, so positive pitch tilts the body x axis
  downward (rotation about +y);
* body 0 is the floating base with generalized coordinates ``(x, z, pitch)``;
  body ``i >= 1`` hangs off joint ``i - 1`` whose coordinate is ``q_gen[2 + i]``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import yaml


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Body:
    name: str
    mass: float
    com: tuple[float, float]
    inertia: float
    length: float = 0.0
    parent: int = -1


@dataclass(frozen=True)
class Joint:
    """Revolute joint attaching body ``index + 1`` to its parent."""

    name: str
    offset: tuple[float, float]  # joint location in the parent body frame
    q_min: float
    q_max: float
    tau_max: float
    q0: float = 0.0
    kp: float = 0.0
    kd: float = 0.0
    friction: float = 0.0


@dataclass(frozen=True)
class ContactPoint:
    body: int
    local: tuple[float, float]


@dataclass(frozen=True)
class FootSite:
    name: str
    body: int
    local: tuple[float, float]
    lateral: float = 0.0  # fixed out-of-plane offset, only used for feet distance


@dataclass(frozen=True)
class RobotModel:
    bodies: tuple[Body, ...]
    joints: tuple[Joint, ...]
    contacts: tuple[ContactPoint, ...] = ()
    feet: tuple[FootSite, ...] = ()
    fixed_base: bool = False
    gravity: float = 9.81
    name: str = "robot"

    def __post_init__(self):
        if len(self.bodies) != len(self.joints) + 1:
            raise ModelError("need exactly one joint per non-base body")
        if self.bodies[0].parent != -1:
            raise ModelError("body 0 must be the base (parent -1)")
        for i, b in enumerate(self.bodies):
            if not b.mass > 0:
                raise ModelError(f"body {b.name}: mass must be > 0")
            if not b.inertia > 0:
                raise ModelError(f"body {b.name}: inertia must be > 0")
            if i > 0 and not 0 <= b.parent < i:
                raise ModelError(f"body {b.name}: parent must precede it (tree order)")
        for j in self.joints:
            if not j.q_min < j.q_max:
                raise ModelError(f"joint {j.name}: q_min must be < q_max")
            if not j.tau_max > 0:
                raise ModelError(f"joint {j.name}: tau_max must be > 0")
        for c in self.contacts:
            if not 0 <= c.body < len(self.bodies):
                raise ModelError("contact point references a missing body")
        for f in self.feet:
            if not 0 <= f.body < len(self.bodies):
                raise ModelError(f"foot {f.name} references a missing body")

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def ndof(self) -> int:
        return 3 + len(self.joints)

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))

    @property
    def q0(self) -> np.ndarray:
        return np.array([j.q0 for j in self.joints], dtype=np.float64)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def foot_bodies(self) -> set[int]:
        return {f.body for f in self.feet}

    def q_limits(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([j.q_min for j in self.joints]), np.array([j.q_max for j in self.joints]))

    def tau_max(self) -> np.ndarray:
        return np.array([j.tau_max for j in self.joints], dtype=np.float64)

    def randomized(self, mass_scale: Sequence[float], com_offset: np.ndarray) -> "RobotModel":
        """Copy with per-body mass scaling and CoM offsets (inertia scales with mass)."""
        com_offset = np.asarray(com_offset, dtype=np.float64).reshape(len(self.bodies), 2)
        bodies = tuple(
            dataclasses.replace(
                b,
                mass=b.mass * float(s),
                inertia=b.inertia * float(s),
                com=(b.com[0] + float(d[0]), b.com[1] + float(d[1])),
            )
            for b, s, d in zip(self.bodies, mass_scale, com_offset)
        )
        return dataclasses.replace(self, bodies=bodies)

    def pack(self) -> "ModelArrays":
        return pack_model(self)


class ModelArrays(NamedTuple):
    """Contiguous arrays consumed by the kernels."""

    parent: np.ndarray  # int64 (nb,)
    joint_offset: np.ndarray  # (nb, 2); row 0 unused
    com: np.ndarray  # (nb, 2)
    mass: np.ndarray  # (nb,)
    inertia: np.ndarray  # (nb,)
    cp_body: np.ndarray  # int64 (nc,)
    cp_local: np.ndarray  # (nc, 2)
    fixed_base: int
    gravity: float


def pack_model(model: RobotModel) -> ModelArrays:
    nb = len(model.bodies)
    offsets = np.zeros((nb, 2))
    for i, j in enumerate(model.joints):
        offsets[i + 1] = j.offset
    cp_body = np.array([c.body for c in model.contacts], dtype=np.int64)
    cp_local = np.array([c.local for c in model.contacts], dtype=np.float64).reshape(-1, 2)
    return ModelArrays(
        parent=np.array([b.parent for b in model.bodies], dtype=np.int64),
        joint_offset=np.ascontiguousarray(offsets),
        com=np.ascontiguousarray(np.array([b.com for b in model.bodies], dtype=np.float64)),
        mass=np.array([b.mass for b in model.bodies], dtype=np.float64),
        inertia=np.array([b.inertia for b in model.bodies], dtype=np.float64),
        cp_body=cp_body,
        cp_local=np.ascontiguousarray(cp_local),
        fixed_base=int(model.fixed_base),
        gravity=float(model.gravity),
    )


# ---------------------------------------------------------------- bundled models

THIGH = 0.33
SHANK = 0.33
FOOT_DROP = 0.05
HEEL = -0.09
TOE = 0.13
HIP_WIDTH = 0.10


def planar_biped() -> RobotModel:
    """The bundled planar biped: trunk + (hip, knee, ankle) per leg, 9 generalized DOF.

    Geometry and inertias are illustrative desk-scale values, not a real robot.
    """
    bodies = [Body("trunk", 12.0, (0.0, 0.20), 0.40, 0.45)]
    joints = []
    contacts = [ContactPoint(0, (0.0, 0.0)), ContactPoint(0, (0.0, 0.45))]
    feet = []
    for side, lateral in (("left", HIP_WIDTH), ("right", -HIP_WIDTH)):
        thigh = len(bodies)
        bodies.append(Body(f"{side}_thigh", 3.0, (0.0, -0.15), 0.03, THIGH, parent=0))
        joints.append(Joint(f"{side}_hip", (0.0, 0.0), -1.6, 1.0, 60.0, q0=-0.25, kp=400.0, kd=12.0))
        shank = len(bodies)
        bodies.append(Body(f"{side}_shank", 2.0, (0.0, -0.15), 0.02, SHANK, parent=thigh))
        joints.append(Joint(f"{side}_knee", (0.0, -THIGH), 0.0, 2.2, 80.0, q0=0.5, kp=400.0, kd=12.0))
        foot = len(bodies)
        bodies.append(Body(f"{side}_foot", 0.8, (0.02, -0.03), 0.006, TOE - HEEL, parent=shank))
        joints.append(Joint(f"{side}_ankle", (0.0, -SHANK), -0.8, 0.8, 40.0, q0=-0.25, kp=250.0, kd=8.0))
        contacts.append(ContactPoint(shank, (0.0, 0.0)))  # knee
        contacts.append(ContactPoint(foot, (HEEL, -FOOT_DROP)))  # heel
        contacts.append(ContactPoint(foot, (TOE, -FOOT_DROP)))  # toe
        feet.append(FootSite(side, foot, (0.5 * (HEEL + TOE), -FOOT_DROP), lateral))
    return RobotModel(tuple(bodies), tuple(joints), tuple(contacts), tuple(feet), name="planar_biped")


def model_from_dict(data: dict) -> RobotModel:
    """Build a model from link/joint tables (the YAML model-file layout)."""
    try:
        raw_bodies = data["bodies"]
    except (KeyError, TypeError) as exc:
        raise ModelError("model file needs a 'bodies' list") from exc
    names: dict[str, int] = {}
    bodies, joints = [], []
    for i, rb in enumerate(raw_bodies):
        name = rb["name"]
        parent = -1 if i == 0 else names[rb["parent"]]
        bodies.append(Body(name, float(rb["mass"]), tuple(map(float, rb.get("com", (0.0, 0.0)))),
                           float(rb["inertia"]), float(rb.get("length", 0.0)), parent))
        names[name] = i
        if i > 0:
            rj = rb["joint"]
            joints.append(Joint(
                rj.get("name", name + "_joint"), tuple(map(float, rj.get("offset", (0.0, 0.0)))),
                float(rj["q_min"]), float(rj["q_max"]), float(rj["tau_max"]),
                float(rj.get("q0", 0.0)), float(rj.get("kp", 0.0)), float(rj.get("kd", 0.0)),
                float(rj.get("friction", 0.0)),
            ))
    contacts = tuple(ContactPoint(names[c["body"]], tuple(map(float, c["local"])))
                     for c in data.get("contacts", ()))
    feet = tuple(FootSite(f["name"], names[f["body"]], tuple(map(float, f["local"])),
                          float(f.get("lateral", 0.0))) for f in data.get("feet", ()))
    return RobotModel(tuple(bodies), tuple(joints), contacts, feet,
                      fixed_base=bool(data.get("fixed_base", False)),
                      gravity=float(data.get("gravity", 9.81)), name=str(data.get("name", "robot")))


def load_model(path: str | os.PathLike) -> RobotModel:
    return model_from_dict(yaml.safe_load(Path(path).read_text()))
