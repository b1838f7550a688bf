"""Two-class tandem queueing network: security (SEC) -> admission control (AC) -> channel (CH).

Primary users (PU) preempt secondary users (SU) at every station. Under
preemptive resume (PR) a preempted SU keeps the work already done; under
preemptive repeat identical (PRI) it restarts the same service demand from
scratch. Each station keeps a separate waiting buffer of ``capacity`` slots
per class; a preempted SU goes back to the head of its buffer and is never
lost, even when that buffer is full.

The whole replication runs inside one compiled kernel (``_simulate``); see
``crnsim._jit`` for the switch that runs it as plain Python instead.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import _acc as A
from ._jit import jit
from .des import (END_OF_RUN, END_OF_WARMUP, EXTERNAL_ARRIVAL, SERVICE_COMPLETION,
                  heap_grow, heap_pop, heap_push)
from .ge import (ARRIVALS, COIN, N_PURPOSES, GEParams, ParameterError,
                 ge_from_uniform, stream_id, stream_key, uniform_draw)

PR = "PR"
PRI = "PRI"

# job record columns
F_EXT, F_ST_ARR, F_REMAIN, F_INSERV, F_WQ, F_COIN, F_DEM = 0, 1, 2, 3, 4, 5, 6
N_JF = 9
I_ID, I_CLS, I_ST, I_PRE, I_ALIVE = 0, 1, 2, 3, 4
N_JI = 5

# trace record kinds
TR_EXT, TR_ARRIVE, TR_ENQUEUE, TR_START, TR_PREEMPT, TR_COMPLETE = 0, 1, 2, 3, 4, 5
TR_LOSS, TR_SEC_DROP, TR_ADM_DROP, TR_DEPART, TR_WARMUP, TR_END = 6, 7, 8, 9, 10, 11
TRACE_KINDS = ("EXT", "ARRIVE", "ENQUEUE", "START", "PREEMPT", "COMPLETE",
               "LOSS", "SEC_DROP", "ADM_DROP", "DEPART", "WARMUP", "END")
# trace int columns
T_SEQ, T_KIND, T_JOB, T_ST, T_CLS, T_SRV = 0, 1, 2, 3, 4, 5

# upper bound on trace rows, queue pushes or calendar entries added by one event
_SLACK = 16


class SimulationError(RuntimeError):
    """The kernel detected an internal inconsistency."""


# ----------------------------------------------------------------------------- kernel


@jit
def _trace(tr_f, tr_i, ntr, t, seq, kind, job, st, cls, srv):
    tr_f[ntr] = t
    tr_i[ntr, T_SEQ] = seq
    tr_i[ntr, T_KIND] = kind
    tr_i[ntr, T_JOB] = job
    tr_i[ntr, T_ST] = st
    tr_i[ntr, T_CLS] = cls
    tr_i[ntr, T_SRV] = srv
    return ntr + 1


@jit
def _grow_rows(a):
    out = np.zeros((a.shape[0] * 2,) + a.shape[1:], a.dtype)
    out[: a.shape[0]] = a
    return out


@jit
def _grow_queues(qbuf, qhead, qlen):
    cap = qbuf.shape[2]
    out = np.empty((qbuf.shape[0], qbuf.shape[1], cap * 2), np.int64)
    for s in range(qbuf.shape[0]):
        for c in range(qbuf.shape[1]):
            for i in range(qlen[s, c]):
                out[s, c, i] = qbuf[s, c, (qhead[s, c] + i) % cap]
            qhead[s, c] = 0
    return out


@jit
def _release(slot, ji, free, nfree):
    ji[slot, I_ALIVE] = 0
    free[nfree] = slot
    return nfree + 1


@jit
def _simulate(fp, ip, keys, st_cnt, st_f, e_cnt, e_f, whole, diag):
    """Run one replication. Accumulators are filled in place; returns the trace buffers.

    fp: arrival rate[2], arrival tau[2], service rate[3], service tau[3],
        p_malicious, p_admission_reject, horizon, warmup
    ip: servers[3], capacity[3], security, resume, max_events, tracing

    Kept as a single loop body: helper calls taking many arrays cost a
    reference-count round trip per array per call.
    """
    p_malicious = fp[10]
    p_reject = fp[11]
    horizon = fp[12]
    warmup = fp[13]
    security = ip[6] != 0
    resume = ip[7] != 0
    max_events = ip[8]
    tracing = ip[9] != 0

    counters = np.zeros(keys.shape[0], np.int64)
    cmax = max(ip[0], max(ip[1], ip[2]))
    srv_job = -np.ones((3, cmax), np.int64)
    srv_gen = np.zeros((3, cmax), np.int64)
    srv_start = np.zeros((3, cmax))
    busy = np.zeros((2, 3), np.int64)
    busy_last = np.zeros((2, 3))
    q_last = np.zeros((2, 3))
    qbuf = np.empty((2, 3, 64), np.int64)
    qhead = np.zeros((2, 3), np.int64)
    qlen = np.zeros((2, 3), np.int64)
    jf = np.zeros((256, N_JF))
    ji = np.zeros((256, N_JI), np.int64)
    free = np.arange(255, -1, -1).astype(np.int64)
    nfree = 256
    ordinal = np.zeros(2, np.int64)
    tr_f = np.zeros(1024 if tracing else 1)
    tr_i = np.zeros((tr_f.shape[0], 6), np.int64)
    ntr = 0
    ht = np.empty(64)
    hi = np.empty((64, 5), np.int64)
    hn = 0

    now = 0.0
    seq = 0
    for c in range(2):
        if fp[c] > 0.0:
            u = uniform_draw(keys, counters, c * N_PURPOSES + ARRIVALS)
            hn, seq = heap_push(ht, hi, hn, now, seq, ge_from_uniform(u, fp[c], fp[2 + c]),
                                EXTERNAL_ARRIVAL, c, 0, 0)
    if warmup > 0.0:
        hn, seq = heap_push(ht, hi, hn, now, seq, warmup, END_OF_WARMUP, 0, 0, 0)
    hn, seq = heap_push(ht, hi, hn, now, seq, horizon, END_OF_RUN, 0, 0, 0)
    first = A.SEC if security else A.AC

    n_events = 0
    finished = False
    while hn > 0:
        if n_events >= max_events:
            diag[A.D_TRUNCATED] = 1.0
            break
        # room for everything one event can add
        if tracing and ntr + _SLACK > tr_f.shape[0]:
            tr_f = _grow_rows(tr_f)
            tr_i = _grow_rows(tr_i)
        if nfree < 2:
            old = jf.shape[0]
            jf = _grow_rows(jf)
            ji = _grow_rows(ji)
            grown = np.empty(old * 2, np.int64)
            grown[:nfree] = free[:nfree]
            for i in range(old):
                grown[nfree + i] = 2 * old - 1 - i
            free = grown
            nfree += old
        if qlen.max() + 4 > qbuf.shape[2]:
            qbuf = _grow_queues(qbuf, qhead, qlen)
        if hn + _SLACK > ht.shape[0]:
            ht, hi = heap_grow(ht, hi)

        now, evseq, kind, a, b, gen, hn = heap_pop(ht, hi, hn)
        n_events += 1
        post = now >= warmup
        arr_slot = -1  # job entering station arr_st
        arr_st = 0
        go_st = -1     # job go_slot to start on server go_k of station go_st
        go_k = 0
        go_slot = 0

        if kind == EXTERNAL_ARRIVAL:
            c = a
            u = uniform_draw(keys, counters, c * N_PURPOSES + ARRIVALS)
            hn, seq = heap_push(ht, hi, hn, now, seq, now + ge_from_uniform(u, fp[c], fp[2 + c]),
                                EXTERNAL_ARRIVAL, c, 0, 0)
            nfree -= 1
            slot = free[nfree]
            jid = 2 * ordinal[c] + c
            ordinal[c] += 1
            ji[slot, I_ID] = jid
            ji[slot, I_CLS] = c
            ji[slot, I_PRE] = 0
            ji[slot, I_ALIVE] = 1
            jf[slot, F_EXT] = now
            jf[slot, F_WQ] = 0.0
            # every demand is drawn up front so a job's samples never depend on its route
            for s in range(3):
                u = uniform_draw(keys, counters, c * N_PURPOSES + 1 + s)
                jf[slot, F_DEM + s] = ge_from_uniform(u, fp[4 + s], fp[7 + s])
            jf[slot, F_COIN] = uniform_draw(keys, counters, c * N_PURPOSES + COIN)
            whole[c, A.ARRIVED] += 1
            if post:
                e_cnt[c, A.ARRIVED] += 1
            if tracing:
                ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_EXT, jid, -1, c, -1)
            arr_slot = slot
            arr_st = first

        elif kind == SERVICE_COMPLETION:
            st = a
            k = b
            if srv_gen[st, k] != gen:
                diag[A.D_STALE] += 1.0
                continue
            slot = srv_job[st, k]
            if slot < 0:
                diag[A.D_FATAL] = 1.0
                break
            c = ji[slot, I_CLS]
            seg = now - srv_start[st, k]
            jf[slot, F_INSERV] += seg
            dem = jf[slot, F_DEM + st]
            if resume:
                dev = abs(jf[slot, F_INSERV] - dem)
                if dev > diag[A.D_PR_DEV]:
                    diag[A.D_PR_DEV] = dev
            else:
                dev = abs(seg - dem)
                if dev > diag[A.D_PRI_DEV]:
                    diag[A.D_PRI_DEV] = dev
            A.bump(st_f, A.BUSY_AREA, busy_last, busy, c, st, now, warmup, -1)
            srv_job[st, k] = -1
            srv_gen[st, k] += 1
            sojourn = now - jf[slot, F_ST_ARR]
            wq = sojourn - jf[slot, F_INSERV]
            if wq < 0.0:
                wq = 0.0
            jf[slot, F_WQ] += wq
            if post:
                st_cnt[c, st, A.DEPARTED] += 1
                st_f[c, st, A.WQ_SUM] += wq
                st_f[c, st, A.W_SUM] += sojourn
            if tracing:
                ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_COMPLETE, ji[slot, I_ID], st, c, k)
            for qc in range(2):
                if qlen[qc, st] > 0:
                    A.bump(st_f, A.Q_AREA, q_last, qlen, qc, st, now, warmup, -1)
                    go_slot = qbuf[qc, st, qhead[qc, st]]
                    qhead[qc, st] = (qhead[qc, st] + 1) % qbuf.shape[2]
                    go_st = st
                    go_k = k
                    break
            if st < A.CH:
                arr_slot = slot
                arr_st = st + 1
            else:
                whole[c, A.E_DEPARTED] += 1
                if post:
                    e_cnt[c, A.E_DEPARTED] += 1
                    e_f[c, A.E_WQ_SUM] += jf[slot, F_WQ]
                    e_f[c, A.E_W_SUM] += now - jf[slot, F_EXT]
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_DEPART, ji[slot, I_ID], -1, c,
                                 -1)
                nfree = _release(slot, ji, free, nfree)

        elif kind == END_OF_WARMUP:
            if tracing:
                ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_WARMUP, -1, -1, -1, -1)

        else:
            if tracing:
                ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_END, -1, -1, -1, -1)
            finished = True
            break

        # step 0: refill the freed server, then admit the routed job;
        # step 1: start the routed job if admission found it a server
        for step in range(2):
            if go_st >= 0:
                s = go_st
                c = ji[go_slot, I_CLS]
                A.bump(st_f, A.BUSY_AREA, busy_last, busy, c, s, now, warmup, 1)
                srv_job[s, go_k] = go_slot
                srv_gen[s, go_k] += 1
                srv_start[s, go_k] = now
                hn, seq = heap_push(ht, hi, hn, now, seq, now + jf[go_slot, F_REMAIN],
                                    SERVICE_COMPLETION, s, go_k, srv_gen[s, go_k])
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_START, ji[go_slot, I_ID], s, c,
                                 go_k)
                go_st = -1
            if step == 1 or arr_slot < 0:
                continue

            slot = arr_slot
            st = arr_st
            c = ji[slot, I_CLS]
            jid = ji[slot, I_ID]
            if st == A.SEC and c == A.PU and jf[slot, F_COIN] <= p_malicious:
                whole[c, A.SEC_DROP] += 1
                if post:
                    e_cnt[c, A.SEC_DROP] += 1
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_SEC_DROP, jid, st, c, -1)
                nfree = _release(slot, ji, free, nfree)
                continue
            if st == A.AC and c == A.SU and jf[slot, F_COIN] <= p_reject:
                whole[c, A.ADM_DROP] += 1
                if post:
                    e_cnt[c, A.ADM_DROP] += 1
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_ADM_DROP, jid, st, c, -1)
                nfree = _release(slot, ji, free, nfree)
                continue

            ji[slot, I_ST] = st
            jf[slot, F_ST_ARR] = now
            jf[slot, F_INSERV] = 0.0
            jf[slot, F_REMAIN] = jf[slot, F_DEM + st]
            if post:
                st_cnt[c, st, A.OFFERED] += 1
            if tracing:
                ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_ARRIVE, jid, st, c, -1)

            for k in range(ip[st]):
                if srv_job[st, k] < 0:
                    go_st = st
                    go_k = k
                    go_slot = slot
                    break
            if go_st >= 0:
                continue

            victim = -1
            if c == A.PU:
                # most recently started SU, ties to the younger job
                for k in range(ip[st]):
                    v = srv_job[st, k]
                    if ji[v, I_CLS] != A.SU:
                        continue
                    if victim < 0 or srv_start[st, k] > srv_start[st, victim] or (
                            srv_start[st, k] == srv_start[st, victim]
                            and ji[v, I_ID] > ji[srv_job[st, victim], I_ID]):
                        victim = k
            if victim >= 0:
                v = srv_job[st, victim]
                elapsed = now - srv_start[st, victim]
                jf[v, F_INSERV] += elapsed
                if resume:
                    rem = jf[v, F_REMAIN] - elapsed
                    jf[v, F_REMAIN] = rem if rem > 0.0 else 0.0
                else:
                    jf[v, F_REMAIN] = jf[v, F_DEM + st]
                ji[v, I_PRE] += 1
                if post:
                    st_cnt[A.SU, st, A.PREEMPTED] += 1
                A.bump(st_f, A.BUSY_AREA, busy_last, busy, A.SU, st, now, warmup, -1)
                srv_job[st, victim] = -1
                srv_gen[st, victim] += 1
                # back to the head of the SU buffer, allowed to exceed capacity
                A.bump(st_f, A.Q_AREA, q_last, qlen, A.SU, st, now, warmup, 1)
                cap = qbuf.shape[2]
                qhead[A.SU, st] = (qhead[A.SU, st] - 1 + cap) % cap
                qbuf[A.SU, st, qhead[A.SU, st]] = v
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_PREEMPT, ji[v, I_ID], st, A.SU,
                                 victim)
                go_st = st
                go_k = victim
                go_slot = slot
            elif qlen[c, st] < ip[3 + st]:
                cap = qbuf.shape[2]
                qbuf[c, st, (qhead[c, st] + qlen[c, st]) % cap] = slot
                A.bump(st_f, A.Q_AREA, q_last, qlen, c, st, now, warmup, 1)
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_ENQUEUE, jid, st, c, -1)
            else:
                whole[c, A.E_LOST] += 1
                if post:
                    st_cnt[c, st, A.LOST] += 1
                    e_cnt[c, A.E_LOST] += 1
                if tracing:
                    ntr = _trace(tr_f, tr_i, ntr, now, evseq, TR_LOSS, jid, st, c, -1)
                nfree = _release(slot, ji, free, nfree)

        if tracing:
            # priority and work-conservation audit after every event
            for s in range(3):
                idle = False
                su_busy = False
                for k in range(ip[s]):
                    if srv_job[s, k] < 0:
                        idle = True
                    elif ji[srv_job[s, k], I_CLS] == A.SU:
                        su_busy = True
                if qlen[A.PU, s] > 0 and (idle or su_busy):
                    diag[A.D_VIOLATIONS] += 1.0
                if qlen[A.SU, s] > 0 and idle:
                    diag[A.D_VIOLATIONS] += 1.0

    end = horizon if finished else now
    for c in range(2):
        for s in range(3):
            A.bump(st_f, A.Q_AREA, q_last, qlen, c, s, end, warmup, 0)
            A.bump(st_f, A.BUSY_AREA, busy_last, busy, c, s, end, warmup, 0)
    for slot in range(ji.shape[0]):
        if ji[slot, I_ALIVE] != 0:
            whole[ji[slot, I_CLS], A.IN_SYSTEM] += 1
    diag[A.D_CLOCK] = end
    diag[A.D_EVENTS] = n_events
    return tr_f[:ntr].copy(), tr_i[:ntr].copy()


# ----------------------------------------------------------------------------- config


@dataclass(frozen=True)
class StationConfig:
    servers: int = 1
    capacity: int = 20
    service: GEParams = field(default_factory=lambda: GEParams(13.0, 1.0))

    def __post_init__(self):
        if self.servers < 1:
            raise ParameterError(f"servers must be >= 1, got {self.servers}")
        if self.capacity < 0:
            raise ParameterError(f"capacity must be >= 0, got {self.capacity}")


@dataclass(frozen=True)
class NetworkConfig:
    """One scenario. ``stations`` always lists SEC, AC and CH; SEC is bypassed when security is off."""

    pu_arrival: GEParams | None
    su_arrival: GEParams | None
    stations: tuple = (StationConfig(), StationConfig(), StationConfig())
    security_enabled: bool = True
    discipline: str = PR
    p_malicious: float = 0.0
    p_admission_reject: float = 0.0
    seed: int = 0
    horizon: float = 2e5
    warmup: float = 2e4
    max_events: int = 2**62

    def __post_init__(self):
        if self.discipline not in (PR, PRI):
            raise ParameterError(f"discipline must be PR or PRI, got {self.discipline!r}")
        if len(self.stations) != 3:
            raise ParameterError("stations must list SEC, AC and CH")
        for p in (self.p_malicious, self.p_admission_reject):
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"probability out of range: {p}")
        if not self.horizon > 0 or not 0 <= self.warmup < self.horizon:
            raise ParameterError("need 0 <= warmup < horizon")

    @classmethod
    def build(cls, pu_rate, su_rate, *, mu=13.0, scv_arrival=1.0, scv_service=1.0,
              servers=1, capacity=20, **kw):
        """Scenario with SEC and AC single-server and ``servers`` channels at CH."""
        service = GEParams(mu, scv_service)
        stations = (StationConfig(1, capacity, service), StationConfig(1, capacity, service),
                    StationConfig(servers, capacity, service))
        return cls(pu_arrival=GEParams(pu_rate, scv_arrival) if pu_rate > 0 else None,
                   su_arrival=GEParams(su_rate, scv_arrival) if su_rate > 0 else None,
                   stations=stations, **kw)

    @property
    def observed_window(self):
        return self.horizon - self.warmup

    def fingerprint(self):
        """Everything except the seed; replications of one scenario share it."""
        return replace(self, seed=0)

    def _kernel_params(self):
        arr = [self.pu_arrival, self.su_arrival]
        fp = np.array([
            arr[0].rate if arr[0] else 0.0, arr[1].rate if arr[1] else 0.0,
            arr[0].tau if arr[0] else 1.0, arr[1].tau if arr[1] else 1.0,
            *[s.service.rate for s in self.stations],
            *[s.service.tau for s in self.stations],
            self.p_malicious, self.p_admission_reject, self.horizon, self.warmup,
        ])
        ip = np.array([
            *[s.servers for s in self.stations],
            *[min(s.capacity, 2**62) for s in self.stations],
            int(self.security_enabled), int(self.discipline == PR), self.max_events, 0,
        ], dtype=np.int64)
        return fp, ip


def replication_keys(seed, replication):
    return np.array([stream_key(seed, stream_id(replication, c, p))
                     for c in range(2) for p in range(N_PURPOSES)], dtype=np.uint64)


@dataclass
class Trace:
    """Debug event trace: one row per state change, in dispatch order."""

    time: np.ndarray
    ints: np.ndarray

    def __len__(self):
        return len(self.time)

    @property
    def kind(self):
        return self.ints[:, T_KIND]

    @property
    def job(self):
        return self.ints[:, T_JOB]

    @property
    def station(self):
        return self.ints[:, T_ST]

    @property
    def job_class(self):
        return self.ints[:, T_CLS]

    def select(self, mask):
        return Trace(self.time[mask], self.ints[mask])

    def pu_only(self):
        """PU rows without the dispatch sequence number (which SU events shift)."""
        sub = self.select(self.job_class == A.PU)
        return sub.time, sub.ints[:, [T_KIND, T_JOB, T_ST, T_SRV]]

    def lines(self):
        for t, row in zip(self.time, self.ints):
            st = A.STATION_NAMES[row[T_ST]] if row[T_ST] >= 0 else "-"
            cls = A.CLASS_NAMES[row[T_CLS]] if row[T_CLS] >= 0 else "-"
            yield (f"{t:.17g} {row[T_SEQ]} {TRACE_KINDS[row[T_KIND]]} {row[T_JOB]} "
                   f"{st} {cls} {row[T_SRV]}")

    def write(self, path):
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def simulate(config, replication=0, trace=False):
    """Run the kernel once and return ``(RunStats, Trace | None)``."""
    from .metrics import RunStats

    fp, ip = config._kernel_params()
    ip[9] = int(trace)
    keys = replication_keys(config.seed, replication)
    st_cnt = np.zeros((2, 3, A.N_ST_CNT), np.int64)
    st_f = np.zeros((2, 3, A.N_ST_F))
    e_cnt = np.zeros((2, A.N_E_CNT), np.int64)
    e_f = np.zeros((2, A.N_E_F))
    whole = np.zeros((2, A.N_E_CNT), np.int64)
    diag = np.zeros(A.N_DIAG)
    tr_f, tr_i = _simulate(fp, ip, keys, st_cnt, st_f, e_cnt, e_f, whole, diag)
    if diag[A.D_FATAL]:
        raise SimulationError("kernel aborted: past-dated event or completion on an idle server")
    window = diag[A.D_CLOCK] - config.warmup
    stats = RunStats(config=config.fingerprint(), replication=replication, window=window,
                     station_counts=st_cnt, station_sums=st_f, e2e_counts=e_cnt, e2e_sums=e_f,
                     whole_run=whole, diagnostics=diag,
                     servers=np.array([s.servers for s in config.stations]),
                     stations_used=(A.SEC, A.AC, A.CH) if config.security_enabled
                     else (A.AC, A.CH))
    return stats, (Trace(tr_f, tr_i) if trace else None)


def run_replication(config, replication=0):
    return simulate(config, replication)[0]
