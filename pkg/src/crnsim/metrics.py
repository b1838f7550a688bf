"""Per-replication statistics and cross-replication confidence intervals.

Conventions:

* waiting time is time spent in a waiting buffer; response time adds every
  in-service segment (including work later discarded under PRI);
* queue length counts waiting jobs only, time-averaged over the observed
  window ``[warmup, horizon]``;
* utilization is busy-server time over ``servers * window``;
* station loss probability is ``lost / offered`` at that station; the
  per-class and ``total`` loss is lost requests over external arrivals.

Metrics are keyed by ``(metric, class_scope, station_scope)``. A class with
no departures yields NaN ("no data") instead of zero.
"""
from collections import defaultdict
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats as sps

from . import _acc as A

CLASS_SCOPES = ("PU", "SU", "total")
NO_DATA = float("nan")


class StatisticsError(ValueError):
    pass


def _ratio(num, den):
    return num / den if den > 0 else NO_DATA


@dataclass
class RunStats:
    config: object
    replication: int
    window: float
    station_counts: np.ndarray   # [class, station, OFFERED/LOST/DEPARTED/PREEMPTED]
    station_sums: np.ndarray     # [class, station, WQ_SUM/W_SUM/Q_AREA/BUSY_AREA]
    e2e_counts: np.ndarray       # [class, ARRIVED/E_DEPARTED/E_LOST/SEC_DROP/ADM_DROP]
    e2e_sums: np.ndarray         # [class, E_WQ_SUM/E_W_SUM]
    whole_run: np.ndarray        # like e2e_counts over the whole run, plus IN_SYSTEM
    diagnostics: np.ndarray
    servers: np.ndarray
    stations_used: tuple = (A.SEC, A.AC, A.CH)
    _metrics: dict = field(default=None, init=False, repr=False)

    @property
    def no_data(self):
        """Classes with no post-warmup departures."""
        return {A.CLASS_NAMES[c] for c in range(2) if self.e2e_counts[c, A.E_DEPARTED] == 0}

    def conservation_residual(self):
        """Per class: arrivals - (departures + losses + drops + in-system). Zero when consistent."""
        w = self.whole_run
        return (w[:, A.ARRIVED] - w[:, A.E_DEPARTED] - w[:, A.E_LOST] - w[:, A.SEC_DROP]
                - w[:, A.ADM_DROP] - w[:, A.IN_SYSTEM])

    def station_wq(self, c, s):
        return _ratio(self.station_sums[c, s, A.WQ_SUM], self.station_counts[c, s, A.DEPARTED])

    def station_w(self, c, s):
        return _ratio(self.station_sums[c, s, A.W_SUM], self.station_counts[c, s, A.DEPARTED])

    def queue_length(self, c, s):
        return self.station_sums[c, s, A.Q_AREA] / self.window

    def littles_residual(self, c, s):
        """``|L - lambda_eff * Wq| / L`` with lambda_eff the accepted arrival rate."""
        L = self.queue_length(c, s)
        accepted = self.station_counts[c, s, A.OFFERED] - self.station_counts[c, s, A.LOST]
        wq = self.station_wq(c, s)
        if not L > 0 or math.isnan(wq):
            return NO_DATA
        return abs(L - accepted / self.window * wq) / L

    def metrics(self):
        if self._metrics is None:
            self._metrics = self._compute()
        return self._metrics

    def _compute(self):
        m = {}
        cnt, sums, ec, es = self.station_counts, self.station_sums, self.e2e_counts, self.e2e_sums
        both = slice(None)
        for scope, cs in zip(CLASS_SCOPES, (0, 1, both)):
            dep = ec[cs, A.E_DEPARTED].sum()
            arrived = ec[cs, A.ARRIVED].sum()
            for s in self.stations_used:
                sn = A.STATION_NAMES[s]
                d = cnt[cs, s, A.DEPARTED].sum()
                m["mean_waiting_time", scope, sn] = _ratio(sums[cs, s, A.WQ_SUM].sum(), d)
                m["mean_response_time", scope, sn] = _ratio(sums[cs, s, A.W_SUM].sum(), d)
                m["mean_queue_length", scope, sn] = sums[cs, s, A.Q_AREA].sum() / self.window
                m["utilization", scope, sn] = (sums[cs, s, A.BUSY_AREA].sum()
                                               / (self.servers[s] * self.window))
                m["loss_probability", scope, sn] = _ratio(cnt[cs, s, A.LOST].sum(),
                                                          cnt[cs, s, A.OFFERED].sum())
                m["preemptions", scope, sn] = float(cnt[cs, s, A.PREEMPTED].sum())
            m["mean_waiting_time", scope, "end_to_end"] = _ratio(es[cs, A.E_WQ_SUM].sum(), dep)
            m["mean_response_time", scope, "end_to_end"] = _ratio(es[cs, A.E_W_SUM].sum(), dep)
            m["mean_queue_length", scope, "total"] = sum(
                m["mean_queue_length", scope, A.STATION_NAMES[s]] for s in self.stations_used)
            m["loss_probability", scope, "total"] = _ratio(ec[cs, A.E_LOST].sum(), arrived)
            m["throughput", scope, "end_to_end"] = dep / self.window
            m["security_drops", scope, "total"] = float(ec[cs, A.SEC_DROP].sum())
            m["admission_drops", scope, "total"] = float(ec[cs, A.ADM_DROP].sum())
            m["preemptions", scope, "total"] = float(cnt[cs, :, A.PREEMPTED].sum())
        for c, scope in enumerate(("PU", "SU")):
            if ec[c, A.E_DEPARTED] == 0:
                for key in m:
                    if key[1] == scope:
                        m[key] = NO_DATA
        return m

    def check_invariants(self, little_tol=None):
        """Raise ``StatisticsError`` if a metric leaves its domain."""
        m = self.metrics()
        for (name, cls, st), v in m.items():
            if math.isnan(v):
                continue
            if v < 0:
                raise StatisticsError(f"negative {name} for {cls}/{st}: {v}")
            if name in ("utilization", "loss_probability") and v > 1 + 1e-12:
                raise StatisticsError(f"{name} above one for {cls}/{st}: {v}")
        for cls in CLASS_SCOPES:
            for st in [A.STATION_NAMES[s] for s in self.stations_used] + ["end_to_end"]:
                w, wq = m["mean_response_time", cls, st], m["mean_waiting_time", cls, st]
                if not math.isnan(w) and w + 1e-12 < wq:
                    raise StatisticsError(f"response below waiting for {cls}/{st}")
        if little_tol is not None:
            for c in range(2):
                for s in self.stations_used:
                    r = self.littles_residual(c, s)
                    if not math.isnan(r) and r > little_tol:
                        raise StatisticsError(
                            f"Little's law residual {r:.4f} at {A.CLASS_NAMES[c]}/"
                            f"{A.STATION_NAMES[s]}")


# ----------------------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    half_width: float
    reps: int

    @property
    def low(self):
        return self.mean - self.half_width

    @property
    def high(self):
        return self.mean + self.half_width


def summarize(values, confidence=0.95):
    x = np.asarray(values, dtype=float)
    r = len(x)
    if r < 2:
        raise StatisticsError("need at least two replications for an interval")
    if np.isnan(x).any():
        return Summary(NO_DATA, NO_DATA, NO_DATA, r)
    mean = math.fsum(x) / r  # exact for constant input, so the interval collapses to zero
    std = math.sqrt(math.fsum((x - mean) ** 2) / (r - 1))
    t = sps.t.ppf(0.5 + confidence / 2, r - 1)
    return Summary(mean, std, float(t * std / math.sqrt(r)), r)


class AggregateStats(dict):
    """Mapping ``(metric, class_scope, station_scope) -> Summary``."""

    def __init__(self, items, reps):
        super().__init__(items)
        self.reps = reps

    def mean(self, metric, cls="total", station="end_to_end"):
        return self[metric, cls, station].mean


def aggregate(runs, confidence=0.95):
    runs = list(runs)
    if len(runs) < 2:
        raise StatisticsError("need at least two replications")
    ref = runs[0].config
    if any(r.config != ref for r in runs[1:]):
        raise StatisticsError("replications come from different configurations")
    if len({r.replication for r in runs}) != len(runs):
        raise StatisticsError("duplicate replication index")
    keys = runs[0].metrics().keys()
    return AggregateStats({k: summarize([r.metrics()[k] for r in runs], confidence)
                           for k in keys}, len(runs))


# ----------------------------------------------------------------------------- trace replay


def stats_from_trace(trace, config, warmup=None, horizon=None):
    """Recompute the kernel's accumulators from a debug trace alone.

    Independent of the kernel's bookkeeping; used to cross-check it and to
    re-evaluate a finished run under a different warmup.
    """
    from .network import (TR_ADM_DROP, TR_ARRIVE, TR_COMPLETE, TR_DEPART, TR_ENQUEUE,
                          TR_EXT, TR_LOSS, TR_PREEMPT, TR_SEC_DROP, TR_START)

    warmup = config.warmup if warmup is None else warmup
    horizon = config.horizon if horizon is None else horizon
    st_cnt = np.zeros((2, 3, A.N_ST_CNT), np.int64)
    st_f = np.zeros((2, 3, A.N_ST_F))
    e_cnt = np.zeros((2, A.N_E_CNT), np.int64)
    e_f = np.zeros((2, A.N_E_F))
    whole = np.zeros((2, A.N_E_CNT), np.int64)

    qlen = np.zeros((2, 3), np.int64)
    busy = np.zeros((2, 3), np.int64)
    q_last = np.zeros((2, 3))
    b_last = np.zeros((2, 3))
    ext = {}
    st_arr = {}
    inserv = defaultdict(float)
    seg_start = {}
    queued = set()
    wq_total = defaultdict(float)

    def bump_q(c, s, t, d):
        st_f[c, s, A.Q_AREA], q_last[c, s] = A.advance_area(
            st_f[c, s, A.Q_AREA], q_last[c, s], qlen[c, s], t, warmup)
        qlen[c, s] += d

    def bump_b(c, s, t, d):
        st_f[c, s, A.BUSY_AREA], b_last[c, s] = A.advance_area(
            st_f[c, s, A.BUSY_AREA], b_last[c, s], busy[c, s], t, warmup)
        busy[c, s] += d

    for t, row in zip(trace.time.tolist(), trace.ints.tolist()):
        _, kind, job, s, c, _srv = row
        post = t >= warmup
        if kind == TR_EXT:
            ext[job] = t
            whole[c, A.ARRIVED] += 1
            e_cnt[c, A.ARRIVED] += post
        elif kind == TR_ARRIVE:
            st_arr[job] = t
            inserv[job] = 0.0
            st_cnt[c, s, A.OFFERED] += post
        elif kind == TR_ENQUEUE:
            queued.add(job)
            bump_q(c, s, t, 1)
        elif kind == TR_START:
            if job in queued:
                queued.discard(job)
                bump_q(c, s, t, -1)
            seg_start[job] = t
            bump_b(c, s, t, 1)
        elif kind == TR_PREEMPT:
            inserv[job] += t - seg_start.pop(job)
            bump_b(c, s, t, -1)
            queued.add(job)
            bump_q(c, s, t, 1)
            st_cnt[c, s, A.PREEMPTED] += post
        elif kind == TR_COMPLETE:
            inserv[job] += t - seg_start.pop(job)
            bump_b(c, s, t, -1)
            sojourn = t - st_arr[job]
            wq = max(sojourn - inserv[job], 0.0)
            wq_total[job] += wq
            if post:
                st_cnt[c, s, A.DEPARTED] += 1
                st_f[c, s, A.WQ_SUM] += wq
                st_f[c, s, A.W_SUM] += sojourn
        elif kind == TR_LOSS:
            whole[c, A.E_LOST] += 1
            st_cnt[c, s, A.LOST] += post
            e_cnt[c, A.E_LOST] += post
        elif kind in (TR_SEC_DROP, TR_ADM_DROP):
            k = A.SEC_DROP if kind == TR_SEC_DROP else A.ADM_DROP
            whole[c, k] += 1
            e_cnt[c, k] += post
        elif kind == TR_DEPART:
            whole[c, A.E_DEPARTED] += 1
            if post:
                e_cnt[c, A.E_DEPARTED] += 1
                e_f[c, A.E_WQ_SUM] += wq_total[job]
                e_f[c, A.E_W_SUM] += t - ext[job]

    for c in range(2):
        for s in range(3):
            bump_q(c, s, horizon, 0)
            bump_b(c, s, horizon, 0)
    whole[:, A.IN_SYSTEM] = (whole[:, A.ARRIVED] - whole[:, A.E_DEPARTED] - whole[:, A.E_LOST]
                             - whole[:, A.SEC_DROP] - whole[:, A.ADM_DROP])
    return RunStats(config=config.fingerprint(), replication=-1, window=horizon - warmup,
                    station_counts=st_cnt, station_sums=st_f, e2e_counts=e_cnt, e2e_sums=e_f,
                    whole_run=whole, diagnostics=np.zeros(A.N_DIAG),
                    servers=np.array([s.servers for s in config.stations]),
                    stations_used=(A.SEC, A.AC, A.CH) if config.security_enabled
                    else (A.AC, A.CH))


# ----------------------------------------------------------------------------- observe API


class Accumulator:
    """Incremental observer with the kernel's update rules, for hand-built traces.

    ``queue(t, level)`` and ``busy(t, level)`` report a new level at time ``t``;
    ``depart(arrival, start, end)`` records one job with a single service segment.
    """

    def __init__(self, warmup=0.0, servers=1):
        self.warmup = warmup
        self.servers = servers
        self.q_area = self.b_area = 0.0
        self._q = self._b = 0
        self._q_last = self._b_last = 0.0
        self.waits = []
        self.responses = []

    def queue(self, t, level):
        self.q_area, self._q_last = A.advance_area(self.q_area, self._q_last, self._q, t,
                                                   self.warmup)
        self._q = level

    def busy(self, t, level):
        self.b_area, self._b_last = A.advance_area(self.b_area, self._b_last, self._b, t,
                                                   self.warmup)
        self._b = level

    def depart(self, arrival, start, end):
        wq = start - arrival
        if wq < 0:
            raise StatisticsError(f"negative waiting time {wq}")
        if end >= self.warmup:
            self.waits.append(wq)
            self.responses.append(end - arrival)

    def finalize(self, horizon):
        if not horizon > self.warmup:
            raise StatisticsError("observed window must be positive")
        self.queue(horizon, self._q)
        self.busy(horizon, self._b)
        window = horizon - self.warmup
        n = len(self.waits)
        return {
            "mean_waiting_time": sum(self.waits) / n if n else NO_DATA,
            "mean_response_time": sum(self.responses) / n if n else NO_DATA,
            "mean_queue_length": self.q_area / window,
            "utilization": self.b_area / (self.servers * window),
        }
