"""Future-event calendar and dispatch loop.

Events are ordered by ``(time, seq)``; ``seq`` is a per-calendar insertion
counter so simultaneous events (common with GE zero-length delays) fire in
the order they were scheduled. ``EventCalendar`` and ``run`` serve general
Python handlers; compiled kernels use the array heap (``heap_push`` /
``heap_pop``) with the same ordering.
"""
import heapq
from dataclasses import dataclass, field

import numpy as np

from ._jit import jit


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock (engine bug)."""


# kinds understood by the network kernel
EXTERNAL_ARRIVAL = 0
SERVICE_COMPLETION = 1
END_OF_WARMUP = 2
END_OF_RUN = 3


@dataclass(order=True)
class Event:
    time: float
    seq: int = -1
    kind: int = field(default=EXTERNAL_ARRIVAL, compare=False)
    payload: tuple = field(default=(), compare=False)


class EventCalendar:
    def __init__(self):
        self._heap = []
        self._seq = 0
        self.clock = 0.0

    def __len__(self):
        return len(self._heap)

    def schedule(self, event):
        if event.time < self.clock:
            raise SchedulingError(f"event at t={event.time} scheduled at clock {self.clock}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, event)
        return self

    def pop_next(self):
        event = heapq.heappop(self._heap)
        self.clock = event.time
        return event

    def peek_time(self):
        return self._heap[0].time if self._heap else float("inf")


def run(cal, handlers, horizon, max_events=None):
    """Dispatch events until the calendar empties or the next event lies past ``horizon``.

    ``handlers`` maps an event kind to ``handler(cal, event)``. A handler
    that schedules into the past aborts the run with ``SchedulingError``.
    Returns the final clock.
    """
    if not len(cal):
        raise ValueError("calendar is empty")
    dispatched = 0
    while len(cal) and cal.peek_time() <= horizon:
        event = cal.pop_next()
        handler = handlers.get(event.kind)
        if handler is not None:
            handler(cal, event)
        dispatched += 1
        if max_events is not None and dispatched >= max_events:
            break
    return cal.clock


# Array-backed calendar for compiled kernels: ``ht`` holds times, ``hi`` rows of
# ``(seq, kind, a, b, gen)``, ``n`` the live size.


@jit
def _before(ht, hi, i, j):
    return ht[i] < ht[j] or (ht[i] == ht[j] and hi[i, 0] < hi[j, 0])


@jit
def _swap(ht, hi, i, j):
    t = ht[i]
    ht[i] = ht[j]
    ht[j] = t
    for k in range(5):
        x = hi[i, k]
        hi[i, k] = hi[j, k]
        hi[j, k] = x


@jit
def heap_grow(ht, hi):
    nt = np.empty(2 * ht.shape[0])
    ni = np.empty((2 * ht.shape[0], 5), np.int64)
    nt[: ht.shape[0]] = ht
    ni[: ht.shape[0]] = hi
    return nt, ni


@jit
def heap_push(ht, hi, n, now, seq, time, kind, a, b, gen):
    """Insert an event stamped ``seq``; returns ``(size, next seq)``. Caller guarantees room."""
    if time < now:
        raise SchedulingError("event scheduled before the current clock")
    ht[n] = time
    hi[n, 0] = seq
    hi[n, 1] = kind
    hi[n, 2] = a
    hi[n, 3] = b
    hi[n, 4] = gen
    i = n
    while i > 0:
        p = (i - 1) >> 1
        if _before(ht, hi, i, p):
            _swap(ht, hi, i, p)
            i = p
        else:
            break
    return n + 1, seq + 1


@jit
def heap_pop(ht, hi, n):
    """Remove the earliest event; returns ``(time, seq, kind, a, b, gen, new_size)``."""
    t, seq, kind, a, b, gen = ht[0], hi[0, 0], hi[0, 1], hi[0, 2], hi[0, 3], hi[0, 4]
    n -= 1
    if n > 0:
        _swap(ht, hi, 0, n)
        i = 0
        while True:
            l = 2 * i + 1
            if l >= n:
                break
            m = l
            if l + 1 < n and _before(ht, hi, l + 1, l):
                m = l + 1
            if _before(ht, hi, m, i):
                _swap(ht, hi, m, i)
                i = m
            else:
                break
    return t, seq, kind, a, b, gen, n
