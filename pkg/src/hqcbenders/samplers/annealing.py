"""Single-flip Metropolis simulated annealing over a geometric schedule."""

from __future__ import annotations

import time

import numba
import numpy as np

from ..qubo import Qubo, SampleSet, Timing

DEFAULT_READS = 1000
DEFAULT_SWEEPS = 1000


def _adjacency(q: Qubo):
    n = q.size
    deg = np.zeros(n + 1, dtype=np.int64)
    for i, j in q.quadratic:
        deg[i + 1] += 1
        deg[j + 1] += 1
    indptr = np.cumsum(deg)
    nbr = np.empty(indptr[-1], dtype=np.int64)
    val = np.empty(indptr[-1])
    fill = indptr[:-1].copy()
    for (i, j), v in sorted(q.quadratic.items()):
        nbr[fill[i]], val[fill[i]] = j, v
        fill[i] += 1
        nbr[fill[j]], val[fill[j]] = i, v
        fill[j] += 1
    return indptr, nbr, val


@numba.njit(cache=True)
def _anneal(linear, indptr, nbr, val, betas, reads, seed):
    n = linear.size
    np.random.seed(seed)
    out = np.zeros((reads, n), dtype=np.uint8)
    x = np.zeros(n, dtype=np.uint8)
    field = np.zeros(n)
    for r in range(reads):
        for i in range(n):
            x[i] = 1 if np.random.random() < 0.5 else 0
        for i in range(n):
            f = linear[i]
            for k in range(indptr[i], indptr[i + 1]):
                if x[nbr[k]]:
                    f += val[k]
            field[i] = f
        for beta in betas:
            for i in range(n):
                # energy change of flipping x_i
                delta = field[i] if x[i] == 0 else -field[i]
                if delta <= 0.0 or np.random.random() < np.exp(-beta * delta):
                    sign = 1.0 if x[i] == 0 else -1.0
                    x[i] = 1 - x[i]
                    for k in range(indptr[i], indptr[i + 1]):
                        field[nbr[k]] += sign * val[k]
        out[r] = x
    return out


def beta_schedule(q: Qubo, sweeps: int) -> np.ndarray:
    """Inverse temperatures from ``max|coef|`` down to ``1e-3 * max|coef|``."""
    if sweeps <= 0:
        return np.zeros(0)
    t_hot = q.max_abs_coefficient() or 1.0
    t_cold = 1e-3 * t_hot
    if sweeps == 1:
        return np.array([1.0 / t_cold])
    return 1.0 / np.geomspace(t_hot, t_cold, sweeps)


def simulated_annealing_solve(q: Qubo, reads: int = DEFAULT_READS,
                              sweeps: int = DEFAULT_SWEEPS, seed: int = 0) -> SampleSet:
    if reads < 1:
        raise ValueError("reads must be at least 1")
    t0 = time.perf_counter()
    indptr, nbr, val = _adjacency(q)
    betas = beta_schedule(q, sweeps)
    t1 = time.perf_counter()
    raw = _anneal(q.linear, indptr, nbr, val, betas, int(reads), int(seed) % (2**32))
    t2 = time.perf_counter()
    timing = Timing(programming_us=(t1 - t0) * 1e6,
                    anneal_us_per_read=(t2 - t1) * 1e6 / reads,
                    readout_us_per_read=0.0, num_reads=int(reads))
    return SampleSet.from_reads(q, raw, timing,
                                {"method": "sa", "reads": int(reads), "sweeps": int(sweeps),
                                 "seed": int(seed)})
