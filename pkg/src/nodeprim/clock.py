"""Clock abstraction: wall time for live runs, virtual time for tests.

Every duration-sensitive component (replay scheduling, action durations,
poll windows, result watchdogs) takes a clock.  ``WallClock`` wraps the
OS clock.  ``VirtualClock`` is a harness-driven logical clock: worker
threads register with it, park in ``sleep``/``wait_for``, and the
harness advances time stepwise with ``run``.  Time only moves when the
whole process group is quiescent - every registered thread parked and
no message in flight (tracked by ``work_started``/``work_finished``
tokens) - which makes scenario transcripts deterministic even though
messages travel over real loopback sockets.

Connection management (master registration, connect retries, handshake
probes) deliberately stays on real time in all modes; only behavior
semantics consume clock time.
"""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from typing import Callable, Optional


class DeadlockError(RuntimeError):
    """The virtual scheduler found all threads parked with no pending deadline."""


class HorizonExceeded(RuntimeError):
    """The virtual scheduler hit its time horizon before the stop condition."""


class WallClock:
    """The OS clock.  Tokens and registration are no-ops."""

    def __init__(self):
        self._cond = threading.Condition()

    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def lock(self):
        return self._cond

    def kick(self) -> None:
        # Call with the lock held after mutating waiter-visible state.
        self._cond.notify_all()

    def wait_for(self, predicate: Callable[[], bool], timeout: Optional[float] = None) -> bool:
        with self._cond:
            return self._cond.wait_for(predicate, timeout)

    def register(self) -> None:
        pass

    def unregister(self) -> None:
        pass

    @contextmanager
    def registered(self):
        yield self

    def work_started(self) -> None:
        pass

    def work_finished(self) -> None:
        pass


#: Process-wide default used when no clock is injected.
WALL = WallClock()


class VirtualClock:
    """Harness-stepped logical time shared by one process group.

    Worker threads must ``register()`` (or wrap their body in
    ``registered()``) before using ``sleep``/``wait_for``.  The harness
    thread calls ``run`` to advance: it waits until every registered
    thread is parked and no work tokens are outstanding, then jumps to
    the earliest pending deadline.  All state that waiter predicates
    read must be mutated under ``lock()`` followed by ``kick()``.
    """

    def __init__(self, start: float = 0.0):
        self._cond = threading.Condition()
        self._now = start
        self._pending = 0
        self._threads: set[int] = set()
        self._waiting: dict[int, tuple[Optional[float], Optional[Callable[[], bool]]]] = {}

    def now(self) -> float:
        with self._cond:
            return self._now

    def lock(self):
        return self._cond

    def kick(self) -> None:
        self._cond.notify_all()

    def register(self) -> None:
        with self._cond:
            self._threads.add(threading.get_ident())

    def unregister(self) -> None:
        with self._cond:
            self._threads.discard(threading.get_ident())
            self._waiting.pop(threading.get_ident(), None)
            self._cond.notify_all()

    @contextmanager
    def registered(self):
        ident = threading.get_ident()
        with self._cond:
            added = ident not in self._threads
            self._threads.add(ident)
        try:
            yield self
        finally:
            if added:
                self.unregister()

    def work_started(self) -> None:
        with self._cond:
            self._pending += 1

    def work_finished(self) -> None:
        with self._cond:
            self._pending -= 1
            self._cond.notify_all()

    def sleep(self, seconds: float) -> None:
        self.wait_for(None, timeout=seconds)

    def wait_for(self, predicate: Optional[Callable[[], bool]], timeout: Optional[float] = None) -> bool:
        """Park until the predicate holds or virtual time reaches the deadline.

        Returns True if the predicate was satisfied, False on deadline.
        ``predicate=None`` waits purely on the deadline (a sleep).
        """
        ident = threading.get_ident()
        with self._cond:
            if ident not in self._threads:
                raise RuntimeError("wait on a VirtualClock from an unregistered thread")
            deadline = None if timeout is None else self._now + timeout
            while True:
                if predicate is not None and predicate():
                    return True
                if deadline is not None and self._now >= deadline:
                    return predicate() if predicate is not None else False
                self._waiting[ident] = (deadline, predicate)
                self._cond.notify_all()
                self._cond.wait()
                self._waiting.pop(ident, None)
                # The scheduler tracks the waiting set; tell it we left.
                self._cond.notify_all()

    def _quiescent(self) -> bool:
        if self._pending != 0:
            return False
        if not self._threads:
            return True
        if set(self._waiting) != self._threads:
            return False
        return not any(pred() for _, pred in self._waiting.values() if pred is not None)

    def run(
        self,
        until: Optional[Callable[[], bool]] = None,
        horizon: Optional[float] = None,
        settle_timeout: float = 30.0,
    ) -> float:
        """Advance virtual time until ``until()`` holds at a quiescent point.

        With ``until=None``, runs until the group is fully idle (no
        deadlines left).  ``horizon`` bounds virtual time;
        ``settle_timeout`` bounds the real seconds spent waiting for any
        single quiescent point (a stuck socket or leaked token
        otherwise hangs the harness).  Returns the final virtual time.
        """
        with self._cond:
            while True:
                settle_end = time.monotonic() + settle_timeout
                while not self._quiescent():
                    if not self._cond.wait(timeout=settle_end - time.monotonic()):
                        raise DeadlockError(
                            f"virtual group never settled: pending={self._pending}, "
                            f"waiting {len(self._waiting)}/{len(self._threads)} threads"
                        )
                if until is not None and until():
                    return self._now
                deadlines = [d for d, _ in self._waiting.values() if d is not None]
                if not deadlines:
                    if until is None:
                        return self._now
                    raise DeadlockError("all threads parked forever before stop condition")
                nxt = min(deadlines)
                if horizon is not None and nxt > horizon:
                    raise HorizonExceeded(f"next deadline {nxt} past horizon {horizon}")
                if nxt > self._now:
                    self._now = nxt
                self._cond.notify_all()
                # Let woken threads leave the waiting set before re-checking.
                while any(
                    d is not None and d <= self._now and (p is None or not p())
                    for d, p in self._waiting.values()
                ):
                    self._cond.wait()


Clock = WallClock  # structural alias for annotations; VirtualClock matches the surface
