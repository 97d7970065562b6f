"""Dense two-phase tableau simplex.

Dantzig pricing, switching to Bland's rule after a run of degenerate pivots.
Every row gets an artificial column that is kept (but barred from entering)
during phase two, so ``B^{-1}`` and therefore the duals and the phase-one
Farkas multipliers can be read straight off the tableau.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalBreakdown
from .lp import (EQ, GE, LE, LinearProgram, LpOutcome, LpStatus, PIVOT_EPS,
                 TOL_FEAS, infeasibility_threshold, normalize_ray)


class _StandardForm:
    """``A_s z = b_s, z >= 0`` with a map back to the original variables."""

    def __init__(self, lp: LinearProgram):
        A, b = lp.constraint_matrix, lp.rhs
        m, n = A.shape
        cols, costs = [], []
        # recovery: x_j = shift_j + sum(sign * z_k for k in parts_j)
        self.parts = []
        self.shift = np.zeros(n)
        bound_rows = []
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            a, cj = A[:, j], lp.objective[j]
            if np.isfinite(lo):
                self.shift[j] = lo
                k = len(cols)
                cols.append(a)
                costs.append(cj)
                self.parts.append([(k, 1.0)])
                if np.isfinite(hi):
                    bound_rows.append((k, hi - lo))
            elif np.isfinite(hi):
                self.shift[j] = hi
                k = len(cols)
                cols.append(-a)
                costs.append(-cj)
                self.parts.append([(k, -1.0)])
            else:
                k = len(cols)
                cols.extend([a, -a])
                costs.extend([cj, -cj])
                self.parts.append([(k, 1.0), (k + 1, -1.0)])
        n_z = len(cols)
        self.n_struct = n_z
        Az = np.column_stack(cols) if cols else np.zeros((m, 0))
        bz = b - A @ self.shift
        senses = list(lp.row_senses)
        if bound_rows:
            extra = np.zeros((len(bound_rows), n_z))
            for r, (k, cap) in enumerate(bound_rows):
                extra[r, k] = 1.0
            Az = np.vstack([Az, extra])
            bz = np.concatenate([bz, [cap for _, cap in bound_rows]])
            senses += [LE] * len(bound_rows)
        self.n_orig_rows = m
        rows = Az.shape[0]
        slack_rows = [i for i, s in enumerate(senses) if s != EQ]
        S = np.zeros((rows, len(slack_rows)))
        for k, i in enumerate(slack_rows):
            S[i, k] = -1.0 if senses[i] == GE else 1.0
        self.A = np.hstack([Az, S])
        self.b = bz
        self.c = np.concatenate([np.asarray(costs, dtype=float),
                                 np.zeros(len(slack_rows))])
        self.flip = np.where(self.b < 0, -1.0, 1.0)
        self.A *= self.flip[:, None]
        self.b = self.b * self.flip

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        for j, parts in enumerate(self.parts):
            for k, sign in parts:
                x[j] += sign * z[k]
        return x


class _Tableau:
    def __init__(self, sf: _StandardForm, tol, pivot_eps, bland_after):
        m, nz = sf.A.shape
        self.m, self.nz = m, nz
        self.T = np.hstack([sf.A, np.eye(m), sf.b[:, None]])
        self.basis = np.arange(nz, nz + m)
        self.tol = tol
        self.pivot_eps = pivot_eps
        self.bland_after = bland_after
        self.iterations = 0
        self.max_iter = 50 * (m + nz) + 1000

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        cb = cost[self.basis]
        return cost - cb @ self.T[:, :-1]

    def pivot(self, r: int, s: int):
        T = self.T
        T[r] /= T[r, s]
        col = T[:, s].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = s

    def run(self, cost: np.ndarray, allowed: np.ndarray) -> str:
        """Minimise ``cost`` from the current feasible basis."""
        rc = self.reduced_costs(cost)
        degenerate = 0
        bland = False
        T = self.T
        while True:
            cand = allowed & (rc < -self.tol)
            if not cand.any():
                return "optimal"
            if bland:
                s = int(np.flatnonzero(cand)[0])
            else:
                masked = np.where(cand, rc, np.inf)
                s = int(np.argmin(masked))
            colv = T[:, s]
            rows = np.flatnonzero(colv > self.pivot_eps)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, -1] / colv[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(ties[np.argmin(self.basis[ties])])
            if best <= self.tol:
                degenerate += 1
                if degenerate >= self.bland_after:
                    bland = True
            else:
                degenerate = 0
            self.pivot(r, s)
            rc = rc - rc[s] * T[r, :-1]
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise NumericalBreakdown("simplex iteration cap reached (cycling?)")
            # guard against drift into infeasibility
            if T[:, -1].min() < -1e3 * self.tol * max(1.0, np.abs(T[:, -1]).max()):
                raise NumericalBreakdown("basic solution lost feasibility")
            T[:, -1] = np.maximum(T[:, -1], 0.0)

    def evict_artificials(self):
        """Pivot zero-level artificials out of the basis where possible."""
        for r in range(self.m):
            if self.basis[r] >= self.nz:
                row = self.T[r, :self.nz]
                cand = np.flatnonzero(np.abs(row) > self.pivot_eps)
                if cand.size:
                    s = int(cand[np.argmax(np.abs(row[cand]))])
                    self.pivot(r, s)

    def values(self) -> np.ndarray:
        z = np.zeros(self.nz + self.m)
        z[self.basis] = self.T[:, -1]
        return z


def two_phase_simplex(lp: LinearProgram, tol: float = TOL_FEAS,
                      pivot_eps: float = PIVOT_EPS, bland_after: int = 50) -> LpOutcome:
    sf = _StandardForm(lp)
    tab = _Tableau(sf, tol * 1e-2, pivot_eps, bland_after)
    m, nz = tab.m, tab.nz

    cost1 = np.concatenate([np.zeros(nz), np.ones(m)])
    tab.run(cost1, np.ones(nz + m, dtype=bool))
    infeas = float(tab.T[tab.basis >= nz, -1].sum())
    if infeas > infeasibility_threshold(sf.b, tol):
        rc = tab.reduced_costs(cost1)
        y = (1.0 - rc[nz:]) * sf.flip
        return LpOutcome(LpStatus.INFEASIBLE,
                         farkas_ray=normalize_ray(y[:sf.n_orig_rows]),
                         iterations=tab.iterations, engine="simplex")

    tab.evict_artificials()
    cost2 = np.concatenate([sf.c, np.zeros(m)])
    allowed = np.concatenate([np.ones(nz, dtype=bool), np.zeros(m, dtype=bool)])
    if tab.run(cost2, allowed) == "unbounded":
        return LpOutcome(LpStatus.UNBOUNDED, iterations=tab.iterations,
                         engine="simplex")
    rc = tab.reduced_costs(cost2)
    y = -rc[nz:] * sf.flip
    x = sf.recover(tab.values()[:sf.n_struct])
    return LpOutcome(LpStatus.OPTIMAL, primal=x, duals=y[:sf.n_orig_rows],
                     objective_value=float(lp.objective @ x),
                     iterations=tab.iterations, engine="simplex")
