"""Locomotion RL stack: planar biped simulator, PPO trainer, deployment runtime."""

__version__ = "0.1.0"
