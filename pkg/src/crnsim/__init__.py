"""Discrete-event simulation of two-class (PU/SU) preemptive priority networks
for cognitive radio with and without a cloud buffer."""
from ._jit import backend
from .ge import GEParams, RngStream, exp_sample, ge_sample, ge_samples, ge_tau
from .metrics import AggregateStats, RunStats, aggregate
from .network import PR, PRI, NetworkConfig, StationConfig, run_replication, simulate

__all__ = ["GEParams", "RngStream", "ge_tau", "ge_sample", "ge_samples", "exp_sample",
           "NetworkConfig", "StationConfig", "PR", "PRI", "simulate", "run_replication",
           "RunStats", "AggregateStats", "aggregate", "backend"]
__version__ = "0.1.0"
