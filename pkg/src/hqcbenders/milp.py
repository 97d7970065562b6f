"""Best-first branch-and-bound over binary variables with a solution pool.

The search records every integer-feasible point it meets: integral node
relaxations and the rounded relaxation at every node. Once the optimum is
proven and the pool still holds fewer than ``pool_size`` entries, it keeps
exploring nodes whose bound lies within ``pool_gap`` of the optimum until the
pool fills or the node budget runs out. Extra entries are feasible but carry
no quality guarantee.

``prover="highs"`` proves the optimum with HiGHS first, keeps every feasible
point HiGHS reports during its own search, and uses the tree search only to
fill the rest of the pool; this is what large masters use.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch, InfeasibleError, NumericalBreakdown, UnboundedError
from .lp import (AUTO_SIMPLEX_LIMIT, EQ, GE, LE, TOL_FEAS, LinearProgram, LpStatus,
                 _highs_model, row_activity_violation, solve_lp)

INT_TOL = 1e-6
# binaries above which "auto" proves optimality with HiGHS
AUTO_BB_LIMIT = 30


@dataclass
class MilpProblem:
    lp_part: LinearProgram
    binary_mask: np.ndarray
    pool_size: int = 1

    def __post_init__(self):
        self.binary_mask = np.asarray(self.binary_mask, dtype=bool).ravel()
        if self.binary_mask.size != self.lp_part.n_cols:
            raise DimensionMismatch("binary_mask length differs from column count")
        if not self.binary_mask.any():
            raise ValueError("a MILP needs at least one binary variable")
        if self.pool_size < 1:
            raise ValueError("pool_size must be positive")
        lp = self.lp_part
        lo, hi = lp.lower.copy(), lp.upper.copy()
        lo[self.binary_mask] = np.maximum(lo[self.binary_mask], 0.0)
        hi[self.binary_mask] = np.minimum(hi[self.binary_mask], 1.0)
        self.lp_part = LinearProgram(lp.objective, lp.constraint_matrix, lp.rhs,
                                     lp.row_senses, lo, hi)

    @property
    def n_binaries(self) -> int:
        return int(self.binary_mask.sum())


@dataclass(frozen=True)
class PoolEntry:
    assignment: np.ndarray
    objective: float


@dataclass
class SolutionPool:
    entries: list
    nodes: int = 0
    proven: bool = True
    optimal_index: int = field(default=0, init=False)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __iter__(self):
        return iter(self.entries)

    @property
    def best(self) -> PoolEntry:
        return self.entries[0]


class Violation(NamedTuple):
    kind: str  # "row", "bound" or "integrality"
    index: int
    amount: float


class MilpEvaluation(NamedTuple):
    feasible: bool
    objective: float
    violations: list


def evaluate_solution(p: MilpProblem, assignment, tol: float = TOL_FEAS,
                      int_tol: float = INT_TOL) -> MilpEvaluation:
    """Check ``assignment`` against every row, bound and integrality rule."""
    x = np.asarray(assignment, dtype=float).ravel()
    lp = p.lp_part
    if x.size != lp.n_cols:
        raise DimensionMismatch(f"assignment has {x.size} entries, need {lp.n_cols}")
    violations = []
    for i, amount in enumerate(row_activity_violation(lp, x)):
        if amount > tol:
            violations.append(Violation("row", i, float(amount)))
    bound_viol = np.maximum(lp.lower - x, x - lp.upper)
    for j in np.flatnonzero(bound_viol > tol):
        violations.append(Violation("bound", int(j), float(bound_viol[j])))
    frac = np.abs(x - np.round(x))
    for j in np.flatnonzero(p.binary_mask & (frac > int_tol)):
        violations.append(Violation("integrality", int(j), float(frac[j])))
    return MilpEvaluation(not violations, float(lp.objective @ x), violations)


class _Completer:
    """Optimise the continuous part for a fixed binary assignment."""

    def __init__(self, p: MilpProblem, lp_engine: str, tol: float):
        lp = p.lp_part
        self.lp = lp
        self.mask = p.binary_mask
        self.cont = np.flatnonzero(~self.mask)
        self.A_bin = lp.constraint_matrix[:, self.mask]
        self.A_cont = lp.constraint_matrix[:, self.cont]
        self.senses = lp.senses_array()
        self.engine = lp_engine
        self.tol = tol

    def __call__(self, ybin: np.ndarray):
        lp = self.lp
        rhs = lp.rhs - self.A_bin @ ybin
        x = np.zeros(lp.n_cols)
        x[self.mask] = ybin
        if self.cont.size == 0:
            act = np.zeros(lp.n_rows)
            if _rows_violated(act, rhs, self.senses, self.tol):
                return None
        elif self.cont.size == 1:
            z = self._interval(rhs)
            if z is None:
                return None
            x[self.cont[0]] = z
        else:
            sub = LinearProgram(lp.objective[self.cont], self.A_cont, rhs,
                                lp.row_senses, lp.lower[self.cont], lp.upper[self.cont])
            out = solve_lp(sub, self.engine)
            if out.status is LpStatus.INFEASIBLE:
                return None
            if out.status is LpStatus.UNBOUNDED:
                raise UnboundedError("continuous part unbounded for a fixed assignment")
            x[self.cont] = out.primal
        return x, float(lp.objective @ x)

    def _interval(self, rhs):
        j = self.cont[0]
        a = self.A_cont[:, 0]
        lo, hi = self.lp.lower[j], self.lp.upper[j]
        for ai, ri, s in zip(a, rhs, self.senses):
            if abs(ai) <= 1e-12:
                if ((s == GE and ri > self.tol) or (s == LE and ri < -self.tol)
                        or (s == EQ and abs(ri) > self.tol)):
                    return None
                continue
            bound = ri / ai
            if s == EQ:
                lo, hi = max(lo, bound), min(hi, bound)
            elif (s == GE) == (ai > 0):
                lo = max(lo, bound)
            else:
                hi = min(hi, bound)
        scale = max(1.0, abs(lo) if np.isfinite(lo) else 0.0)
        if lo > hi + self.tol * scale:
            return None
        c = self.lp.objective[j]
        if c > 0 or (c == 0 and np.isfinite(lo)):
            if not np.isfinite(lo):
                raise UnboundedError("continuous variable unbounded below")
            return lo
        if c < 0 or np.isfinite(hi):
            if not np.isfinite(hi):
                raise UnboundedError("continuous variable unbounded above")
            return hi if c < 0 else min(hi, max(lo, 0.0))
        return 0.0


class _NodeRelaxation:
    """LP relaxation at a node, given its column bounds.

    Large relaxations keep one HiGHS model alive and only change bounds
    between nodes, so each solve warm-starts from the previous basis.
    """

    def __init__(self, lp: LinearProgram, lp_engine: str):
        self.lp = lp
        self.engine = lp_engine
        self.model = None
        big = lp.n_rows * lp.n_cols > AUTO_SIMPLEX_LIMIT
        if lp_engine == "highs" or (lp_engine == "auto" and big):
            self.model = _persistent_highs(lp)
            self.cols = np.arange(lp.n_cols, dtype=np.int32)

    def solve(self, lo, hi):
        """``(status, primal, objective)``."""
        if self.model is None:
            lp = self.lp
            out = solve_lp(LinearProgram(lp.objective, lp.constraint_matrix, lp.rhs,
                                         lp.row_senses, lo, hi), self.engine)
            return out.status, out.primal, out.objective_value
        import highspy

        h = self.model
        h.changeColsBounds(self.cols.size, self.cols, lo, hi)
        h.run()
        st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kUnknown:
            # a stale basis can stall the warm start; retry from scratch
            h.clearSolver()
            h.run()
            st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kOptimal:
            x = np.asarray(h.getSolution().col_value, dtype=float)
            return LpStatus.OPTIMAL, x, float(self.lp.objective @ x)
        if st == highspy.HighsModelStatus.kInfeasible:
            return LpStatus.INFEASIBLE, None, np.inf
        # a cold solve separates unbounded from infeasible and settles stalls
        out = solve_lp(LinearProgram(self.lp.objective, self.lp.constraint_matrix,
                                     self.lp.rhs, self.lp.row_senses, lo, hi), "highs")
        return out.status, out.primal, out.objective_value


def _persistent_highs(lp: LinearProgram):
    senses = lp.senses_array()
    h = _highs_model(lp.objective, sparse.csc_array(lp.constraint_matrix), lp.lower, lp.upper)
    h.changeRowsBounds(lp.n_rows, np.arange(lp.n_rows, dtype=np.int32),
                       np.where(senses == LE, -np.inf, lp.rhs),
                       np.where(senses == GE, np.inf, lp.rhs))
    return h


def _rows_violated(act, rhs, senses, tol) -> bool:
    diff = act - rhs
    return bool(np.any(diff[senses == GE] < -tol) or np.any(diff[senses == LE] > tol)
                or np.any(np.abs(diff[senses == EQ]) > tol))


def _highs_search(p: MilpProblem):
    """HiGHS optimum of ``p`` plus every feasible point its search reported."""
    import highspy

    lp = p.lp_part
    senses = lp.senses_array()
    h = _highs_model(lp.objective, sparse.csc_array(lp.constraint_matrix), lp.lower, lp.upper)
    h.setOptionValue("presolve", "on")
    h.setOptionValue("primal_feasibility_tolerance", 1e-7)
    h.setOptionValue("dual_feasibility_tolerance", 1e-7)
    h.setOptionValue("mip_rel_gap", 0.0)
    if lp.n_rows:
        h.changeRowsBounds(lp.n_rows, np.arange(lp.n_rows, dtype=np.int32),
                           np.where(senses == LE, -np.inf, lp.rhs),
                           np.where(senses == GE, np.inf, lp.rhs))
    idx = np.flatnonzero(p.binary_mask).astype(np.int32)
    h.changeColsIntegrality(idx.size, idx,
                            np.full(idx.size, highspy.HighsVarType.kInteger))
    seen = []
    h.cbMipSolution.subscribe(
        lambda e: seen.append(np.array(e.data_out.mip_solution, dtype=float)))
    h.run()
    st = h.getModelStatus()
    if st == highspy.HighsModelStatus.kOptimal:
        return np.asarray(h.getSolution().col_value, dtype=float), seen
    if st == highspy.HighsModelStatus.kInfeasible:
        raise InfeasibleError("MILP is infeasible")
    if st in (highspy.HighsModelStatus.kUnbounded,
              highspy.HighsModelStatus.kUnboundedOrInfeasible):
        raise UnboundedError("MILP is unbounded")
    raise NumericalBreakdown(f"HiGHS MILP returned {h.modelStatusToString(st)}")


def solve_milp_with_pool(p: MilpProblem, *, prover: str = "auto", lp_engine: str = "auto",
                         pool_gap: float = 0.2, node_budget: int = 10_000,
                         int_tol: float = INT_TOL, tol: float = TOL_FEAS) -> SolutionPool:
    """Solve ``p`` to optimality and collect up to ``p.pool_size`` solutions."""
    if prover == "auto":
        prover = "bb" if p.n_binaries <= AUTO_BB_LIMIT else "highs"
    if prover not in ("bb", "highs"):
        raise ValueError(f"unknown prover {prover!r}")
    lp = p.lp_part
    mask = p.binary_mask
    complete = _Completer(p, lp_engine, tol)
    relax = _NodeRelaxation(lp, lp_engine)
    found = {}
    counter = itertools.count()

    def record(ybin):
        ybin = np.round(ybin)
        key = ybin.astype(np.int8).tobytes()
        if key in found:
            return
        res = complete(ybin)
        if res is not None:
            found[key] = (res[1], next(counter), res[0])

    def incumbent():
        if not found:
            return np.inf
        return min(v[0] for v in found.values())

    proven = False
    if prover == "highs":
        x_opt, seen = _highs_search(p)
        record(x_opt[mask])
        if not found:
            raise NumericalBreakdown("HiGHS optimum failed re-verification")
        for x in seen:
            record(x[mask])
        proven = True

    seq = itertools.count()
    heap = [(-np.inf, next(seq), lp.lower.copy(), lp.upper.copy())]
    deferred = []
    nodes = 0
    opt_value = incumbent() if proven else None

    def prove():
        nonlocal proven, opt_value
        proven = True
        opt_value = incumbent()
        for node in deferred:
            heapq.heappush(heap, node)
        deferred.clear()

    while nodes < node_budget:
        if not heap:
            if proven or not found:
                break
            prove()
            continue
        if proven and len(found) >= p.pool_size:
            break
        bound, _, lo, hi = heap[0]
        if not proven:
            inc = incumbent()
            if np.isfinite(inc) and bound >= inc - 1e-9 * max(1.0, abs(inc)):
                prove()
                continue
        elif bound > opt_value + pool_gap * max(1.0, abs(opt_value)):
            break
        heapq.heappop(heap)
        nodes += 1
        status, primal, z = relax.solve(lo, hi)
        if status is LpStatus.INFEASIBLE:
            continue
        if status is LpStatus.UNBOUNDED:
            raise UnboundedError("LP relaxation unbounded; is the zeta bound row missing?")
        xb = primal[mask]
        frac = np.abs(xb - np.round(xb))
        integral = bool(np.all(frac <= int_tol))
        record(xb)
        if not proven:
            inc = incumbent()
            if z >= inc - 1e-9 * max(1.0, abs(inc)):
                deferred.append((z, next(seq), lo, hi))
                continue
        free = np.flatnonzero(mask & (lo < hi))
        if integral:
            if not proven or free.size == 0:
                continue
            # pool filling: split an unfixed binary to reach other assignments
            j = int(free[0])
            first = int(round(primal[j]))
        else:
            bin_idx = np.flatnonzero(mask)
            dist = np.minimum(frac, 1.0 - frac)
            j = int(bin_idx[int(np.argmax(dist))])
            first = int(round(primal[j]))
        for val in (first, 1 - first):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = float(val)
            heapq.heappush(heap, (z, next(seq), clo, chi))

    if not found:
        if heap:
            raise NumericalBreakdown("node budget exhausted before any feasible point")
        raise InfeasibleError("MILP is infeasible")
    if not proven:
        inc = incumbent()
        proven = all(n[0] >= inc - 1e-9 * max(1.0, abs(inc)) for n in heap)
    ranked = sorted(found.values(), key=lambda v: (v[0], v[1]))[:p.pool_size]
    entries = [PoolEntry(x, obj) for obj, _, x in ranked]
    return SolutionPool(entries, nodes=nodes, proven=proven)
