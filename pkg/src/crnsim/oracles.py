"""Closed-form queueing results used to validate the simulator at SCV = 1.

The truncated CTMC solvers at the bottom are brute-force checks on the
closed forms themselves (they share no algebra with them).
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve


class UnstableError(ValueError):
    """Offered load is at or above capacity."""


@dataclass(frozen=True)
class MM1Result:
    rho: float
    L: float
    Lq: float
    W: float
    Wq: float


def mm1(lam, mu):
    if not 0 < lam < mu:
        raise UnstableError(f"M/M/1 needs 0 < lambda < mu, got {lam}, {mu}")
    rho = lam / mu
    W = 1.0 / (mu - lam)
    Wq = rho / (mu - lam)
    return MM1Result(rho=rho, L=lam * W, Lq=lam * Wq, W=W, Wq=Wq)


def mm1n_loss(lam, mu, n_total):
    """Blocking probability of M/M/1/K with ``n_total`` = K places including the one in service."""
    if lam <= 0 or mu <= 0 or n_total < 1:
        raise ValueError("need lam, mu > 0 and n_total >= 1")
    rho = lam / mu
    if math.isclose(rho, 1.0, rel_tol=0, abs_tol=1e-12):
        return 1.0 / (n_total + 1)
    # rho**n may underflow for large n; that is the correct limit
    return (1.0 - rho) * rho**n_total / (1.0 - rho ** (n_total + 1))


def erlang_c(lam, mu, c):
    """Probability an arrival waits in M/M/c."""
    a = lam / mu
    if not 0 < a < c:
        raise UnstableError(f"M/M/{c} needs 0 < lambda < c*mu")
    b = 1.0
    for k in range(1, c + 1):  # Erlang-B recursion
        b = a * b / (k + a * b)
    rho = a / c
    return b / (1.0 - rho + rho * b)


def erlang_c_wq(lam, mu, c):
    if lam == 0:
        return 0.0
    return erlang_c(lam, mu, c) / (c * mu - lam)


def mm1_preemptive_resume(lam1, lam2, mu):
    """Mean sojourn times ``(W1, W2)`` for two classes, class 1 preemptive-resume over class 2."""
    rho1, rho2 = lam1 / mu, lam2 / mu
    if lam1 < 0 or lam2 < 0 or rho1 + rho2 >= 1:
        raise UnstableError("total load must be below one")
    W1 = 1.0 / (mu - lam1)
    W2 = (1.0 / mu) / (1.0 - rho1) + ((rho1 + rho2) / mu) / ((1.0 - rho1) * (1.0 - rho1 - rho2))
    return W1, W2


# ----------------------------------------------------------------------------- CTMC checks


def ctmc_steady_state(Q):
    """Stationary vector of a finite irreducible generator (rows sum to zero)."""
    Q = sparse.csr_matrix(Q)
    n = Q.shape[0]
    A = Q.T.tolil()
    A[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = spsolve(A.tocsc(), rhs)
    return pi / pi.sum()


def _generator(n_states, rates):
    rows, cols, vals = zip(*rates) if rates else ((), (), ())
    Q = sparse.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)).tocsr()
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q


def mmc_ctmc_wq(lam, mu, c, n_max=400):
    """M/M/c mean wait from a birth-death chain truncated at ``n_max`` jobs."""
    rates = []
    for n in range(n_max):
        rates.append((n, n + 1, lam))
        rates.append((n + 1, n, min(n + 1, c) * mu))
    pi = ctmc_steady_state(_generator(n_max + 1, rates))
    n = np.arange(n_max + 1)
    lq = float(np.sum(np.maximum(n - c, 0) * pi))
    return lq / (lam * (1 - pi[-1]))


def priority_pr_ctmc(lam1, lam2, mu, n1_max=60, n2_max=250):
    """``(W1, W2)`` for the preemptive-priority M/M/1 from a truncated 2-D chain."""
    def idx(i, j):
        return i * (n2_max + 1) + j

    rates = []
    for i in range(n1_max + 1):
        for j in range(n2_max + 1):
            s = idx(i, j)
            if i < n1_max and lam1 > 0:
                rates.append((s, idx(i + 1, j), lam1))
            if j < n2_max and lam2 > 0:
                rates.append((s, idx(i, j + 1), lam2))
            if i > 0:
                rates.append((s, idx(i - 1, j), mu))
            elif j > 0:
                rates.append((s, idx(i, j - 1), mu))
    pi = ctmc_steady_state(_generator((n1_max + 1) * (n2_max + 1), rates))
    pi = pi.reshape(n1_max + 1, n2_max + 1)
    p1, p2 = pi.sum(axis=1), pi.sum(axis=0)
    L1 = float(np.arange(n1_max + 1) @ p1)
    L2 = float(np.arange(n2_max + 1) @ p2)
    W1 = L1 / (lam1 * (1 - p1[-1])) if lam1 > 0 else 1.0 / mu
    W2 = L2 / (lam2 * (1 - p2[-1])) if lam2 > 0 else float("nan")
    return W1, W2
