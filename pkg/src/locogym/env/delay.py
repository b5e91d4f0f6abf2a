"""Sensor-to-actuator latency as a queue of commands with release ticks."""

from __future__ import annotations

from collections import deque

import numpy as np


class DelayLine:
    """Commands become active at their release tick and stay active until the next release.

    An action sent at tick ``t`` with a delay of ``d`` ticks first affects the
    torque at tick ``t + d``. Release ticks never decrease, so actions are
    applied in the order they were sent.
    """

    def __init__(self, initial):
        self.reset(initial)

    def reset(self, initial) -> None:
        self.active = np.array(initial, dtype=np.float64)
        self._queue: deque[tuple[int, np.ndarray]] = deque()
        self._last_release = -1

    def push(self, command, send_tick: int, delay_ticks: int) -> int:
        if delay_ticks < 0:
            raise ValueError("delay must be >= 0 ticks")
        release = max(send_tick + delay_ticks, self._last_release)
        self._last_release = release
        self._queue.append((release, np.array(command, dtype=np.float64)))
        return release

    def schedule(self, start_tick: int, num_ticks: int) -> np.ndarray:
        """The command in force at each tick of ``[start_tick, start_tick + num_ticks)``."""
        out = np.empty((num_ticks, self.active.shape[0]))
        for k in range(num_ticks):
            tick = start_tick + k
            while self._queue and self._queue[0][0] <= tick:
                self.active = self._queue.popleft()[1]
            out[k] = self.active
        return out

    def __len__(self) -> int:
        return len(self._queue)
