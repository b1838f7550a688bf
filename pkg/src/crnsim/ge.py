"""Random streams and generalized exponential (GE) variates.

A GE variate with rate ``nu`` and squared coefficient of variation ``scv``
has CDF ``F(t) = 1 - tau * exp(-tau * nu * t)`` with ``tau = 2 / (scv + 1)``:
an atom of mass ``1 - tau`` at zero plus an exponential with rate
``tau * nu``. Sampling is by inverse transform from a single uniform, so a
stream of uniforms fully determines the sample path.

Uniforms come from a counter-based generator: draw ``k`` of stream ``key``
is ``splitmix64(key + golden * (k + 1))`` mapped to ``(0, 1]``. Streams are
addressed by ``(seed, stream_id)`` and need no jump-ahead to split.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from ._jit import USE_NUMBA, jit

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 1.0 / 9007199254740992.0

# stream purposes, one substream per (replication, class, purpose)
ARRIVALS = 0
SERVICE_SEC = 1
SERVICE_AC = 2
SERVICE_CH = 3
COIN = 4
N_PURPOSES = 5


class ParameterError(ValueError):
    """A distribution parameter lies outside its domain."""


def splitmix64(x):
    """SplitMix64 finalizer on a Python int."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, stream_id):
    return splitmix64(splitmix64(seed & MASK64) ^ (stream_id & MASK64))


def stream_id(replication, job_class, purpose):
    return (replication << 8) | (job_class << 4) | purpose


# -- per-draw uniform: a numba version on uint64 and a Python-int twin ----------

_U_GOLDEN = np.uint64(_GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U_ONE = np.uint64(1)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)


def _uniform_u64(keys, counters, s):
    z = keys[s] + _U_GOLDEN * (np.uint64(counters[s]) + _U_ONE)
    counters[s] += 1
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    z = z ^ (z >> _S31)
    return (np.float64(z >> _S11) + 1.0) * _TWO_M53


def _uniform_int(keys, counters, s):
    k = int(counters[s])
    counters[s] = k + 1
    z = splitmix64(int(keys[s]) + _GOLDEN * (k + 1))
    return ((z >> 11) + 1) * _TWO_M53


uniform_draw = jit(_uniform_u64) if USE_NUMBA else _uniform_int
uniform_draw.__doc__ = """Next uniform in (0, 1] from stream ``s``; advances ``counters[s]``."""


@jit
def ge_from_uniform(u, rate, tau):
    """Inverse GE CDF at tail probability ``u``; zero on the atom."""
    if u > tau:
        return 0.0
    return -math.log(u / tau) / (tau * rate)


def uniform_block(key, start, n):
    """Vectorised draws ``start .. start+n-1`` of one stream (numpy uint64)."""
    k = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    z = np.uint64(key) + _U_GOLDEN * k
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    z = z ^ (z >> _S31)
    return ((z >> _S11).astype(np.float64) + 1.0) * _TWO_M53


@jit
def _ge_fill(keys, counters, s, rate, tau, out):
    for i in range(out.shape[0]):
        out[i] = ge_from_uniform(uniform_draw(keys, counters, s), rate, tau)


# -- public API ------------------------------------------------------------------


def ge_tau(scv):
    if not scv >= 1.0:
        raise ParameterError(f"GE requires scv >= 1, got {scv}")
    return 2.0 / (scv + 1.0)


@dataclass(frozen=True)
class GEParams:
    rate: float
    scv: float = 1.0
    tau: float = field(init=False)

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ParameterError(f"rate must be positive, got {self.rate}")
        object.__setattr__(self, "tau", ge_tau(self.scv))

    @property
    def mean(self):
        return 1.0 / self.rate


class RngStream:
    """One reproducible substream; identical ``(seed, stream_id)`` give identical draws."""

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._keys = np.array([stream_key(self.seed, self.stream_id)], dtype=np.uint64)
        self._counters = np.zeros(1, dtype=np.int64)

    @property
    def position(self):
        return int(self._counters[0])

    def uniform(self):
        return uniform_draw(self._keys, self._counters, 0)

    def uniforms(self, n):
        out = uniform_block(self._keys[0], self.position, n)
        self._counters[0] += n
        return out


def exp_sample(rate, rng):
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    return -math.log(rng.uniform()) / rate


def ge_sample(params, rng):
    return ge_from_uniform(rng.uniform(), params.rate, params.tau)


def ge_samples(params, rng, n, vectorised=True):
    """``n`` GE draws. ``vectorised=False`` goes through the compiled per-draw loop."""
    if vectorised:
        u = rng.uniforms(n)
        out = np.zeros(n)
        hit = u <= params.tau
        out[hit] = -np.log(u[hit] / params.tau) / (params.tau * params.rate)
        return out
    out = np.empty(n)
    _ge_fill(rng._keys, rng._counters, 0, params.rate, params.tau, out)
    return out


def exp_samples(rate, rng, n):
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    return -np.log(rng.uniforms(n)) / rate
