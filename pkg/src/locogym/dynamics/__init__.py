"""Planar floating-base rigid-body simulator with penalty contacts and PD actuation."""

from .backend import BACKEND, available_backends, load_backend
from .errors import SingularMassMatrix
from .model import (
    Body,
    ContactPoint,
    FootSite,
    Joint,
    ModelArrays,
    ModelError,
    RobotModel,
    load_model,
    model_from_dict,
    pack_model,
    planar_biped,
)
from .sim import (
    ActuatorConfig,
    ContactParams,
    ContactReport,
    FootState,
    PhysicsState,
    StepOutput,
    apply_external_wrench,
    bias_forces,
    foot_states,
    forward_dynamics,
    initial_state,
    kinetic_energy,
    mass_matrix,
    pd_torque,
    potential_energy,
    standing_height,
    step,
)

__all__ = [
    "BACKEND", "available_backends", "load_backend", "SingularMassMatrix",
    "Body", "ContactPoint", "FootSite", "Joint", "ModelArrays", "ModelError", "RobotModel",
    "load_model", "model_from_dict", "pack_model", "planar_biped",
    "ActuatorConfig", "ContactParams", "ContactReport", "FootState", "PhysicsState", "StepOutput",
    "apply_external_wrench", "bias_forces", "foot_states", "forward_dynamics", "initial_state",
    "kinetic_energy", "mass_matrix", "pd_torque", "potential_energy", "standing_height", "step",
]
