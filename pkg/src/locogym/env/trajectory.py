"""JSON-lines trajectory dump: one record per control step per env.

Record keys, in order:

    source       free-form label of the producing run ("train", "eval", ...)
    env          env index within the batch
    episode      per-env episode counter, starting at 0
    step         control step within the episode, starting at 1
    time         seconds since the episode started
    q_gen        generalized positions after the step (before any auto-reset)
    v_gen        generalized velocities after the step
    command      [v_x, v_y, yaw rate] in force during the step
    action       clipped policy action that was applied
    reward       total reward
    rewards      {component name: weighted value}
    done, early, timeout, truncated
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from .base import StepResult

RECORD_KEYS = ("source", "env", "episode", "step", "time", "q_gen", "v_gen", "command", "action",
               "reward", "rewards", "done", "early", "timeout", "truncated")


class TrajectoryFormatError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class TrajectoryWriter:
    """Append step results to an open text stream."""

    def __init__(self, stream: IO[str], source: str = "env", num_envs: int = 1):
        self.stream = stream
        self.source = source
        self.episode = [0] * num_envs

    def write(self, result: StepResult, mask=None) -> None:
        """Write one record per env, or only for envs where ``mask`` is true."""
        if len(self.episode) < result.num_envs:
            self.episode.extend([0] * (result.num_envs - len(self.episode)))
        for i in range(result.num_envs):
            if mask is not None and not mask[i]:
                continue
            rec = {
                "source": self.source,
                "env": i,
                "episode": self.episode[i],
                "step": int(result.episode_step[i]),
                "time": float(result.time[i]),
                "q_gen": [float(x) for x in result.q[i]],
                "v_gen": [float(x) for x in result.v[i]],
                "command": [float(x) for x in result.command[i]],
                "action": [float(x) for x in result.action[i]],
                "reward": float(result.reward[i]),
                "rewards": {k: float(v[i]) for k, v in result.breakdown.items()},
                "done": bool(result.done[i]),
                "early": bool(result.early[i]),
                "timeout": bool(result.timeout[i]),
                "truncated": bool(result.truncated[i]),
            }
            # non-finite states are written as null rather than invalid JSON
            self.stream.write(json.dumps(rec if _finite(rec) else _nulled(rec), allow_nan=False))
            self.stream.write("\n")
            if result.done[i]:
                self.episode[i] += 1


def _finite(rec: dict) -> bool:
    return all(np.all(np.isfinite(rec[k])) for k in ("q_gen", "v_gen", "action"))


def _nulled(rec: dict) -> dict:
    out = dict(rec)
    for k in ("q_gen", "v_gen", "action"):
        out[k] = [x if np.isfinite(x) else None for x in rec[k]]
    return out


def read_trajectory(path: str | Path) -> Iterator[dict]:
    """Yield records, raising ``TrajectoryFormatError`` with the 1-based line of the first bad one."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryFormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise TrajectoryFormatError("record is not an object", lineno)
            missing = [k for k in ("q_gen", "v_gen", "time") if k not in rec]
            if missing:
                raise TrajectoryFormatError(f"missing keys {missing}", lineno)
            if not isinstance(rec["q_gen"], list) or not isinstance(rec["v_gen"], list):
                raise TrajectoryFormatError("q_gen and v_gen must be lists", lineno)
            yield rec
