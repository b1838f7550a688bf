"""Scheme grids, config files, the replication runner and CSV / plot-data output."""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field
import itertools
import logging
import math
import os

from .metrics import aggregate
from .network import PR, PRI, NetworkConfig, simulate

log = logging.getLogger(__name__)

BUILTIN = ("A", "B", "C", "D")
SU_SWEEP = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    scheme_id: str = "custom"
    disciplines: tuple = (PR,)
    security: tuple = (True,)
    servers: tuple = (1,)
    pu_rates: tuple = (3.0,)
    su_rates: tuple = SU_SWEEP
    scv_pairs: tuple = ((1.0, 1.0),)  # (arrival, service)
    capacity: int = 20
    mu: float = 13.0
    reps: int = 20
    horizon: float = 2e5
    warmup: float = 0.1  # fraction of the horizon
    seed: int = 1
    p_malicious: float = 0.0
    p_admission_reject: float = 0.0

    def grid(self):
        pts = itertools.product(self.disciplines, self.security, self.servers, self.pu_rates,
                                self.scv_pairs, self.su_rates)
        return [GridPoint(i, d, sec, c, pu, su, scv[0], scv[1])
                for i, (d, sec, c, pu, scv, su) in enumerate(pts)]

    def network(self, point):
        """Scenario for one grid point. The seed is shared by every point (common random numbers)."""
        return NetworkConfig.build(
            point.pu_rate, point.su_rate, mu=self.mu, scv_arrival=point.scv_arrival,
            scv_service=point.scv_service, servers=point.servers, capacity=self.capacity,
            security_enabled=point.security, discipline=point.discipline,
            p_malicious=self.p_malicious, p_admission_reject=self.p_admission_reject,
            seed=self.seed, horizon=self.horizon, warmup=self.warmup * self.horizon)


@dataclass(frozen=True)
class GridPoint:
    index: int
    discipline: str
    security: bool
    servers: int
    pu_rate: float
    su_rate: float
    scv_arrival: float
    scv_service: float

    def series(self):
        return (self.discipline, self.security, self.servers, self.pu_rate, self.scv_arrival,
                self.scv_service)


def builtin_scheme(scheme_id, **overrides):
    """The four experiment grids: security x cloud, PU load, burstiness, channel count."""
    base = dict(scheme_id=scheme_id, security=(True, False), capacity=20, mu=13.0,
                su_rates=SU_SWEEP)
    if scheme_id == "A":
        base.update(disciplines=(PR, PRI))
    elif scheme_id == "B":
        base.update(pu_rates=(1.0, 3.0, 5.0))
    elif scheme_id == "C":
        base.update(scv_pairs=((4.0, 4.0), (8.0, 8.0), (10.0, 10.0)))
    elif scheme_id == "D":
        base.update(servers=(1, 3))
    else:
        raise ConfigError(f"unknown scheme {scheme_id!r}")
    base.update(overrides)
    return SchemeConfig(**base)


# ----------------------------------------------------------------------------- config files

GRID_KEYS = ("discipline", "security", "servers", "capacity", "pu_rate", "su_rates",
             "scv_arrival", "scv_service", "mu")
RUN_KEYS = ("reps", "horizon", "warmup", "seed", "p_malicious", "p_admission_reject")
KEYS = ("scheme",) + GRID_KEYS + RUN_KEYS


def _numbers(text, kind=float):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ValueError("empty list item")
        lo, sep, hi = part.partition("-")
        if sep and lo and hi:
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty range {part}")
            out.extend(kind(v) for v in range(a, b + 1))
        else:
            out.append(kind(part))
    return tuple(out)


def _words(text, allowed):
    vals = tuple(w.strip().upper() for w in text.split(","))
    bad = [v for v in vals if v not in allowed]
    if bad:
        raise ValueError(f"expected one of {', '.join(allowed)}")
    return vals


def _check(cond, msg):
    if not cond:
        raise ValueError(msg)


def _parse_value(key, text):
    if key == "scheme":
        v = text.strip().upper()
        _check(v in BUILTIN + ("CUSTOM",), "scheme must be A, B, C, D or custom")
        return v.replace("CUSTOM", "custom")
    if key == "discipline":
        return _words(text, (PR, PRI))
    if key == "security":
        return tuple(v in ("ON", "TRUE", "YES", "1")
                     for v in _words(text, ("ON", "OFF", "TRUE", "FALSE", "YES", "NO", "1", "0")))
    if key == "servers":
        v = _numbers(text, int)
        _check(all(c >= 1 for c in v), "servers must be >= 1")
        return v
    if key in ("pu_rate", "su_rates"):
        v = _numbers(text)
        _check(all(r >= 0 and math.isfinite(r) for r in v), "rates must be >= 0")
        return v
    if key in ("scv_arrival", "scv_service"):
        v = _numbers(text)
        _check(all(s >= 1 for s in v), "GE needs C^2 >= 1")
        return v
    if key in ("capacity", "reps", "seed"):
        v = int(text)
        _check(v >= (2 if key == "reps" else 0), f"{key} out of range")
        return v
    v = float(text)
    if key in ("mu", "horizon"):
        _check(v > 0 and math.isfinite(v), f"{key} must be positive")
    elif key == "warmup":
        _check(0 <= v < 1, "warmup is a fraction of the horizon in [0, 1)")
    else:
        _check(0 <= v <= 1, "probability must lie in [0, 1]")
    return v


def parse_config(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().lower()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, val.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None

    run = {k: values[k] for k in RUN_KEYS if k in values}
    scheme = values.get("scheme")
    if scheme in BUILTIN:
        ignored = [k for k in GRID_KEYS if k in values]
        if ignored:
            log.warning("scheme %s overrides grid keys: %s", scheme, ", ".join(ignored))
        return builtin_scheme(scheme, **run)
    if scheme is None and not any(k in values for k in GRID_KEYS):
        raise ConfigError(f"{source}: no scenario defined (set 'scheme' or grid keys)")
    grid = {}
    mapping = {"discipline": "disciplines", "security": "security", "servers": "servers",
               "capacity": "capacity", "pu_rate": "pu_rates", "su_rates": "su_rates",
               "mu": "mu"}
    for k, attr in mapping.items():
        if k in values:
            grid[attr] = values[k]
    if "scv_arrival" in values or "scv_service" in values:
        grid["scv_pairs"] = tuple(itertools.product(values.get("scv_arrival", (1.0,)),
                                                    values.get("scv_service", (1.0,))))
    return SchemeConfig(scheme_id="custom", **grid, **run)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=os.fspath(path))


# ----------------------------------------------------------------------------- running

ROW_FIELDS = ("scheme", "discipline", "security", "c", "N", "pu_rate", "su_rate", "scv_arrival",
              "scv_service", "metric_name", "class_scope", "station_scope", "mean",
              "ci95_half_width", "reps")


@dataclass(frozen=True)
class OutputRow:
    scheme: str
    discipline: str
    security: str
    c: int
    N: int
    pu_rate: float
    su_rate: float
    scv_arrival: float
    scv_service: float
    metric_name: str
    class_scope: str
    station_scope: str
    mean: float
    ci95_half_width: float
    reps: int


@dataclass
class PointResult:
    point: GridPoint
    runs: list = field(default_factory=list)
    summary: object = None
    error: str = None


def run_point(scheme, point, parallel=1, trace_dir=None):
    """All replications of one grid point, aggregated."""
    cfg = scheme.network(point)

    def one(rep):
        want_trace = trace_dir is not None and rep == 0
        stats, trace = simulate(cfg, rep, trace=want_trace)
        if trace is not None:
            trace.write(os.path.join(trace_dir, f"trace_{scheme.scheme_id}_{point.index:03d}.txt"))
        bad = stats.conservation_residual()
        if bad.any():
            raise RuntimeError(f"conservation violated in replication {rep}: {bad.tolist()}")
        return stats

    result = PointResult(point)
    if parallel > 1:
        with ThreadPoolExecutor(parallel) as pool:
            result.runs = list(pool.map(one, range(scheme.reps)))
    else:
        result.runs = [one(r) for r in range(scheme.reps)]
    result.summary = aggregate(result.runs)
    return result


def run_scheme_points(scheme, parallel=1, trace_dir=None, order=None):
    """Run every grid point; a failing point is logged and reported, the rest still run."""
    points = scheme.grid()
    if order is not None:
        points = [points[i] for i in order]
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
    results = []
    for p in points:
        log.info("scheme %s point %d/%d: %s", scheme.scheme_id, p.index + 1,
                 len(scheme.grid()), p)
        try:
            results.append(run_point(scheme, p, parallel, trace_dir))
        except Exception as exc:  # noqa: BLE001 - reported per point
            log.error("grid point %d (%s) failed: %s", p.index, p, exc)
            results.append(PointResult(p, error=str(exc)))
    results.sort(key=lambda r: r.point.index)
    return results


def rows_for(scheme, result):
    p = result.point
    rows = []
    for (metric, cls, st), s in result.summary.items():
        if not math.isfinite(s.mean):
            continue
        rows.append(OutputRow(scheme.scheme_id, p.discipline, "ON" if p.security else "OFF",
                              p.servers, scheme.capacity, p.pu_rate, p.su_rate, p.scv_arrival,
                              p.scv_service, metric, cls, st, s.mean, s.half_width, s.reps))
    return rows


def run_scheme(scheme, parallel=1, trace_dir=None, order=None):
    results = run_scheme_points(scheme, parallel, trace_dir, order)
    rows = []
    for r in results:
        if r.error is None:
            rows.extend(rows_for(scheme, r))
    return rows


# ----------------------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_csv(rows, path):
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])
    return path


PLOT_SCOPES = ("end_to_end", "total")


def _series_label(key, varying):
    names = ("", "sec", "c", "pu", "scvA", "scvS")
    parts = []
    for i, (name, v) in enumerate(zip(names, key)):
        if i not in varying:
            continue
        if i == 0:
            parts.append(v)
        elif i == 1:
            parts.append("secON" if v == "ON" else "secOFF")
        else:
            parts.append(f"{name}{_fmt(v)}")
    return "_".join(parts) or "series"


def write_plotdata(rows, out_dir):
    """One whitespace-separated file per (scheme, metric, class): SU rate then one column per series."""
    if not rows:
        raise ValueError("no rows to write")
    groups = {}
    for r in rows:
        if r.station_scope not in PLOT_SCOPES:
            continue
        groups.setdefault((r.scheme, r.metric_name, r.class_scope), []).append(r)
    paths = []
    for (scheme, metric, cls), rs in sorted(groups.items()):
        keys = sorted({(r.discipline, r.security, r.c, r.pu_rate, r.scv_arrival, r.scv_service)
                       for r in rs}, key=lambda k: (k[0], k[1] != "ON", k[2:]))
        varying = {i for i in range(6) if len({k[i] for k in keys}) > 1}
        su = sorted({r.su_rate for r in rs})
        table = {(r.discipline, r.security, r.c, r.pu_rate, r.scv_arrival, r.scv_service,
                  r.su_rate): r for r in rs}
        labels = [_series_label(k, varying) for k in keys]
        path = os.path.join(out_dir, f"{scheme}_{metric}_{cls}.dat")
        with open(path, "w") as fh:
            fh.write(f"# scheme {scheme}: {metric} ({cls}, {rs[0].station_scope})\n")
            fh.write("# columns: su_rate " + " ".join(labels) + "\n")
            fh.write("# series: " + "; ".join(
                f"{lab}=PQ {k[0]} SEC {k[1]} c {k[2]} PU {_fmt(k[3])} SCV {_fmt(k[4])}/{_fmt(k[5])}"
                for lab, k in zip(labels, keys)) + "\n")
            for s in su:
                vals = []
                for k in keys:
                    r = table.get(k + (s,))
                    vals.append(_fmt(r.mean) if r is not None else "nan")
                fh.write(_fmt(s) + " " + " ".join(vals) + "\n")
        paths.append(path)
    return paths


def emit(rows, out_dir, fmt="both", name=None):
    if not rows:
        raise ValueError("no rows to write")
    os.makedirs(out_dir, exist_ok=True)
    name = name or f"scheme_{rows[0].scheme}"
    paths = []
    if fmt in ("csv", "both"):
        paths.append(write_csv(rows, os.path.join(out_dir, name + ".csv")))
    if fmt in ("plotdata", "both"):
        paths.extend(write_plotdata(rows, out_dir))
    return paths
