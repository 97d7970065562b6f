"""Brute-force QUBO minimisation, used as the ground-truth oracle.

Small QUBOs are enumerated outright. Larger ones are still solved exactly
when the decision variables are few and, once they are fixed, the remaining
variables split into small independent groups. That is the case for the
cut-selection encodings, where every slack and coverage bit belongs to a
single constraint.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import SizeCapExceeded
from ..qubo import DECISION, Qubo, SampleSet, Timing, energies

EXHAUSTIVE_CAP = 25
# above this size, structured QUBOs are solved by conditioning instead
DIRECT_LIMIT = 16
_CHUNK = 1 << 16


def _all_bits(n: int, start: int, stop: int) -> np.ndarray:
    k = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((k[:, None] >> shifts) & 1).astype(np.uint8)


def _enumerate(q: Qubo, keep: int):
    n = q.size
    best_bits, best_e = None, None
    total = 1 << n
    for start in range(0, total, _CHUNK):
        X = _all_bits(n, start, min(total, start + _CHUNK))
        e = energies(q, X)
        if best_bits is not None:
            X = np.vstack([best_bits, X])
            e = np.concatenate([best_e, e])
        if e.size > keep:
            # stable ordering so ties keep the smaller integer label
            idx = np.argsort(np.round(e, 9), kind="stable")[:keep]
            X, e = X[idx], e[idx]
        best_bits, best_e = X, e
    return best_bits, best_e


def exhaustive_solve(q: Qubo, cap: int = EXHAUSTIVE_CAP, keep: int = 256) -> SampleSet:
    """Exact minimum of ``q``; the ``keep`` best assignments are returned."""
    t0 = time.perf_counter()
    if q.size == 0:
        return SampleSet(np.zeros((1, 0), dtype=np.uint8), [q.offset], [1],
                         Timing(num_reads=1), {"method": "empty"})
    X = None
    if q.size > DIRECT_LIMIT:
        try:
            X, e = _conditioned(q, cap, keep)
            method = "conditioned"
        except SizeCapExceeded:
            if q.size > cap:
                raise
    if X is None:
        X, e = _enumerate(q, keep)
        method = "enumerate"
    us = (time.perf_counter() - t0) * 1e6
    return SampleSet(X, e, np.ones(len(e), dtype=np.int64),
                     Timing(programming_us=0.0, anneal_us_per_read=us, num_reads=1),
                     {"method": method})


def _conditioned(q: Qubo, cap: int, keep: int):
    """Enumerate decision bits and complete each group of the rest optimally."""
    dec = q.indices(DECISION)
    rest = np.setdiff1d(np.arange(q.size), dec)
    if dec.size > min(cap, DIRECT_LIMIT) or rest.size == 0:
        raise SizeCapExceeded(f"QUBO with {q.size} variables exceeds exhaustive cap {cap}")
    pos = {int(v): k for k, v in enumerate(rest)}
    rows, cols = [], []
    # couplings among the non-decision variables define the groups
    cross = {}
    for (i, j), v in q.quadratic.items():
        if i in pos and j in pos:
            rows.append(pos[i])
            cols.append(pos[j])
        elif i in pos or j in pos:
            cross.setdefault(i if i in pos else j, []).append((j if i in pos else i, v))
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(rest.size, rest.size))
    n_comp, label = connected_components(g, directed=False)
    groups = [rest[label == c] for c in range(n_comp)]
    if max(len(gr) for gr in groups) > cap:
        raise SizeCapExceeded("a residual variable group exceeds the exhaustive cap")

    dec_pos = {int(v): k for k, v in enumerate(dec)}
    D = _all_bits(dec.size, 0, 1 << dec.size)
    X = np.zeros((D.shape[0], q.size), dtype=np.uint8)
    X[:, dec] = D
    for gr in groups:
        local = {int(v): k for k, v in enumerate(gr)}
        G = _all_bits(len(gr), 0, 1 << len(gr)).astype(float)
        # energy of the group's own terms, per local assignment
        base = G @ q.linear[gr]
        for (i, j), v in q.quadratic.items():
            if i in local and j in local:
                base = base + v * G[:, local[i]] * G[:, local[j]]
        # linear field each group variable receives from the decision bits
        field = np.zeros((D.shape[0], len(gr)))
        for v_idx in gr:
            for other, coef in cross.get(int(v_idx), []):
                field[:, local[int(v_idx)]] += coef * D[:, dec_pos[other]]
        total = base[None, :] + field @ G.T
        # ties resolved towards the smaller integer label of the group bits
        choice = np.argmin(np.round(total, 9), axis=1)
        X[:, gr] = G[choice].astype(np.uint8)
    e = energies(q, X)
    if e.size > keep:
        idx = np.argsort(np.round(e, 9), kind="stable")[:keep]
        X, e = X[idx], e[idx]
    return X, e
