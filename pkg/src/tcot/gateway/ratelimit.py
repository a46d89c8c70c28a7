"""Sliding-window rate limiter with injectable clock for testing."""

from __future__ import annotations

import threading
import time
from collections import deque
from typing import Callable


class RateLimiter:
    """At most ``requests_per_minute`` dispatches in any sliding 60 s window."""

    def __init__(
        self,
        requests_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if requests_per_minute < 1:
            raise ValueError("requests_per_minute must be >= 1")
        self.requests_per_minute = requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._dispatched: deque[float] = deque()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._dispatched and now - self._dispatched[0] >= 60.0:
                    self._dispatched.popleft()
                if len(self._dispatched) < self.requests_per_minute:
                    self._dispatched.append(now)
                    return
                wait = 60.0 - (now - self._dispatched[0])
            self._sleep(max(wait, 0.001))
