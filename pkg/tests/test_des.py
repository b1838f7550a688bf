import heapq
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crnsim.des import (END_OF_RUN, EXTERNAL_ARRIVAL, Event, EventCalendar, SchedulingError,
                        heap_grow, heap_pop, heap_push, run)
from crnsim.ge import RngStream, exp_sample


def test_pop_single():
    cal = EventCalendar()
    e = Event(1.0)
    cal.schedule(e)
    assert cal.pop_next() is e


def test_pop_by_time():
    cal = EventCalendar()
    e1, e2 = Event(2.0), Event(1.0)
    cal.schedule(e1).schedule(e2)
    assert [cal.pop_next(), cal.pop_next()] == [e2, e1]


def test_equal_times_fifo():
    cal = EventCalendar()
    e1, e2 = Event(1.0), Event(1.0)
    cal.schedule(e1).schedule(e2)
    assert e1.seq < e2.seq
    assert cal.pop_next() is e1 and cal.pop_next() is e2


def test_schedule_in_past_is_fatal():
    cal = EventCalendar()
    cal.schedule(Event(5.0))
    cal.pop_next()
    with pytest.raises(SchedulingError):
        cal.schedule(Event(4.0))


def test_run_end_of_run():
    cal = EventCalendar()
    cal.schedule(Event(100.0, kind=END_OF_RUN))
    assert run(cal, {}, horizon=1e9) == 100.0


def test_run_requires_an_event():
    with pytest.raises(ValueError):
        run(EventCalendar(), {}, 10.0)


def test_handler_scheduling_in_past_aborts():
    cal = EventCalendar()
    cal.schedule(Event(1.0))

    def bad(cal, ev):
        cal.schedule(Event(ev.time - 0.5))

    with pytest.raises(SchedulingError):
        run(cal, {EXTERNAL_ARRIVAL: bad}, 10.0)


def test_poisson_arrival_count():
    rng = RngStream(2024, 1)
    cal = EventCalendar()
    count = [0]

    def arrival(cal, ev):
        count[0] += 1
        cal.schedule(Event(ev.time + exp_sample(13.0, rng)))

    cal.schedule(Event(exp_sample(13.0, rng)))
    run(cal, {EXTERNAL_ARRIVAL: arrival}, horizon=1e4)
    assert abs(count[0] - 13e4) / 13e4 < 0.02


def test_equal_time_events_seen_in_order():
    seen = []
    cal = EventCalendar()
    for tag in "ab":
        cal.schedule(Event(3.0, payload=(tag,)))
    run(cal, {EXTERNAL_ARRIVAL: lambda c, e: seen.append((c.clock, e.payload[0]))}, 10)
    assert seen == [(3.0, "a"), (3.0, "b")]


def test_max_events_cap():
    cal = EventCalendar()

    def again(cal, ev):
        cal.schedule(Event(ev.time))  # zero-delay loop

    cal.schedule(Event(0.0))
    run(cal, {EXTERNAL_ARRIVAL: again}, 1.0, max_events=500)
    assert len(cal) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=60),
       st.integers(0, 1000))
def test_clock_is_monotone(delays, seed):
    r = random.Random(seed)
    cal = EventCalendar()
    seen = []
    pending = list(delays)

    def h(cal, ev):
        seen.append(cal.clock)
        if pending:
            cal.schedule(Event(cal.clock + pending.pop() * r.random()))

    cal.schedule(Event(0.0))
    run(cal, {EXTERNAL_ARRIVAL: h}, horizon=1e9)
    assert seen == sorted(seen)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.sampled_from([0.0, 0.5, 1.0, 2.5])),
                min_size=1, max_size=300))
def test_array_heap_matches_heapq(ops):
    ht, hi = np.empty(4), np.empty((4, 5), np.int64)
    n = seq = 0
    ref = []
    now = 0.0
    out_a, out_b = [], []
    for push, dt in ops:
        if push or not ref:
            if n + 1 > ht.shape[0]:
                ht, hi = heap_grow(ht, hi)
            heapq.heappush(ref, (now + dt, seq))
            n, seq = heap_push(ht, hi, n, now, seq, now + dt, 0, seq, 0, 0)
        else:
            t, s, *_rest, n = heap_pop(ht, hi, n)
            out_a.append((t, s))
            out_b.append(heapq.heappop(ref))
            now = t
    assert out_a == out_b


def test_array_heap_rejects_past_events():
    ht, hi = np.empty(4), np.empty((4, 5), np.int64)
    with pytest.raises(Exception):
        heap_push(ht, hi, 0, 5.0, 0, 4.0, 0, 0, 0, 0)
