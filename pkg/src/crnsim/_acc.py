"""Accumulator layout and update rules shared by the kernel and trace replay."""
from ._jit import jit

PU, SU = 0, 1
SEC, AC, CH = 0, 1, 2
CLASS_NAMES = ("PU", "SU")
STATION_NAMES = ("SEC", "AC", "CH")

# station counters  [class, station, k]
OFFERED, LOST, DEPARTED, PREEMPTED = 0, 1, 2, 3
N_ST_CNT = 4
# station sums      [class, station, k]
WQ_SUM, W_SUM, Q_AREA, BUSY_AREA = 0, 1, 2, 3
N_ST_F = 4
# end-to-end counters [class, k]; whole-run counters share the layout plus IN_SYSTEM
ARRIVED, E_DEPARTED, E_LOST, SEC_DROP, ADM_DROP, IN_SYSTEM = 0, 1, 2, 3, 4, 5
N_E_CNT = 6
# end-to-end sums   [class, k]
E_WQ_SUM, E_W_SUM = 0, 1
N_E_F = 2
# diagnostics
D_CLOCK, D_EVENTS, D_VIOLATIONS, D_TRUNCATED, D_STALE, D_PR_DEV, D_PRI_DEV, D_FATAL = range(8)
N_DIAG = 8


@jit
def advance_area(area, last, level, now, warmup):
    """Integrate ``level`` over ``[max(last, warmup), now]`` into ``area``; move ``last`` to ``now``."""
    t0 = last if last > warmup else warmup
    if now > t0:
        area += level * (now - t0)
    return area, now


@jit
def bump(sums, k, last, level, c, s, now, warmup, delta):
    """Close the current level's interval into ``sums[c, s, k]`` then shift ``level[c, s]`` by ``delta``."""
    sums[c, s, k], last[c, s] = advance_area(sums[c, s, k], last[c, s], level[c, s], now, warmup)
    level[c, s] += delta
