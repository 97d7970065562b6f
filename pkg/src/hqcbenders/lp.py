"""Linear programming front end.

Every LP in the package goes through :func:`solve_lp`. It returns either a
primal/dual pair or a Farkas certificate, using one of two engines:

* ``"simplex"``: the dense two-phase tableau simplex in :mod:`hqcbenders.simplex`.
* ``"highs"``: scipy's HiGHS dual simplex.

Either way an infeasible LP gets its ray from :func:`violation_program`, which
makes it an extreme ray of the certificate cone.

Sign conventions (minimisation): the dual ``v_i`` of a ``>=`` row is
non-negative, of a ``<=`` row non-positive, of an ``=`` row free. Duals are
sensitivities ``d obj / d rhs_i``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DimensionMismatch, NumericalBreakdown

TOL_FEAS = 1e-7
PIVOT_EPS = 1e-10
# below this many matrix entries "auto" uses the in-house simplex
AUTO_SIMPLEX_LIMIT = 2500

GE, LE, EQ = ">=", "<=", "="
_SENSE_ALIASES = {">=": GE, "G": GE, "ge": GE, "<=": LE, "L": LE, "le": LE,
                  "=": EQ, "==": EQ, "E": EQ, "eq": EQ}


def normalize_senses(senses, n_rows: int) -> tuple:
    if senses is None:
        return (GE,) * n_rows
    try:
        return tuple(_SENSE_ALIASES[s] for s in senses)
    except KeyError as exc:
        raise ValueError(f"unknown row sense {exc.args[0]!r}") from None


@dataclass
class LinearProgram:
    """``min c^T x  s.t.  A x (sense) b,  lower <= x <= upper``."""

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    row_senses: Optional[Sequence[str]] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2:
            raise DimensionMismatch("constraint matrix must be 2-D")
        self.constraint_matrix = A
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        m = A.shape[0]
        if A.shape[1] != n:
            raise DimensionMismatch(
                f"objective has {n} entries but matrix has {A.shape[1]} columns")
        if self.rhs.size != m:
            raise DimensionMismatch(f"rhs has {self.rhs.size} entries for {m} rows")
        self.row_senses = normalize_senses(self.row_senses, m)
        if len(self.row_senses) != m:
            raise DimensionMismatch("row_senses length differs from row count")
        self.lower = (np.zeros(n) if self.lower is None
                      else np.asarray(self.lower, dtype=float).ravel().copy())
        self.upper = (np.full(n, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float).ravel().copy())
        if self.lower.size != n or self.upper.size != n:
            raise DimensionMismatch("bound vectors must match the column count")
        if np.any(self.lower > self.upper):
            raise ValueError("variable bounds with lower > upper")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("infinite bound on the wrong side")

    @property
    def n_rows(self) -> int:
        return self.constraint_matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.objective.size

    def senses_array(self) -> np.ndarray:
        return np.array(self.row_senses, dtype=object)

    def with_rhs(self, rhs) -> "LinearProgram":
        return LinearProgram(self.objective, self.constraint_matrix, rhs,
                             self.row_senses, self.lower, self.upper)


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    primal: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    farkas_ray: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    iterations: int = 0
    engine: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass(frozen=True)
class ViolationReport:
    """Residuals of a claimed LP outcome. All fields are absolute."""

    status: LpStatus
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    complementarity_gap: float = 0.0
    duality_gap: float = 0.0
    # rhs^T u minus the largest value r^T x can take over the variable box;
    # strictly positive for a valid infeasibility certificate
    farkas_slack: float = 0.0
    notes: list = field(default_factory=list)

    def ok(self, tol: float = TOL_FEAS) -> bool:
        if self.status is LpStatus.INFEASIBLE:
            return self.dual_residual <= tol and self.farkas_slack > tol
        return (self.primal_residual <= tol and self.dual_residual <= tol
                and self.complementarity_gap <= tol)


def solve_lp(lp: LinearProgram, engine: str = "auto", *, tol: float = TOL_FEAS,
             pivot_eps: float = PIVOT_EPS, bland_after: int = 50) -> LpOutcome:
    """Solve ``lp`` and return duals or a Farkas ray."""
    if engine == "auto":
        engine = "simplex" if lp.n_rows * lp.n_cols <= AUTO_SIMPLEX_LIMIT else "highs"
    if engine == "simplex":
        from .simplex import two_phase_simplex
        out = two_phase_simplex(lp, tol=tol, pivot_eps=pivot_eps, bland_after=bland_after)
        if out.status is LpStatus.INFEASIBLE:
            # the tableau's own certificate need not be extreme
            ray = _phase_one_ray(lp, tol, "simplex")
            if ray is not None:
                out = replace(out, farkas_ray=ray)
        return out
    if engine == "highs":
        return _solve_highs(lp, tol)
    raise ValueError(f"unknown LP engine {engine!r}")


# ---------------------------------------------------------------- HiGHS route

_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-9,
                  "dual_feasibility_tolerance": 1e-9}


def _split_rows(lp: LinearProgram):
    senses = lp.senses_array()
    ge = senses == GE
    le = senses == LE
    eq = senses == EQ
    A, b = sparse.csr_array(lp.constraint_matrix), lp.rhs
    A_ub = sparse.vstack([-A[ge], A[le]], format="csr")
    b_ub = np.concatenate([-b[ge], b[le]])
    return ge, le, eq, A_ub, b_ub, A[eq], b[eq]


def _bounds(lower, upper):
    return [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
            for lo, hi in zip(lower, upper)]


def _run_linprog(c, A_ub, b_ub, A_eq, b_eq, bounds):
    return linprog(c,
                   A_ub=A_ub if A_ub.shape[0] else None,
                   b_ub=b_ub if A_ub.shape[0] else None,
                   A_eq=A_eq if A_eq.shape[0] else None,
                   b_eq=b_eq if A_eq.shape[0] else None,
                   bounds=bounds, method="highs-ds", options=_HIGHS_OPTIONS)


def _solve_highs(lp: LinearProgram, tol: float) -> LpOutcome:
    ge, le, eq, A_ub, b_ub, A_eq, b_eq = _split_rows(lp)
    res = _run_linprog(lp.objective, A_ub, b_ub, A_eq, b_eq,
                       _bounds(lp.lower, lp.upper))
    if res.status == 0:
        v = np.zeros(lp.n_rows)
        if A_ub.shape[0]:
            marg = res.ineqlin.marginals
            n_ge = int(ge.sum())
            v[ge] = -marg[:n_ge]
            v[le] = marg[n_ge:]
        if A_eq.shape[0]:
            v[eq] = res.eqlin.marginals
        x = np.asarray(res.x, dtype=float)
        return LpOutcome(LpStatus.OPTIMAL, primal=x, duals=v,
                         objective_value=float(lp.objective @ x),
                         iterations=int(res.nit), engine="highs")
    if res.status in (2, 3, 4):
        ray = _phase_one_ray(lp, tol)
        if ray is not None:
            return LpOutcome(LpStatus.INFEASIBLE, farkas_ray=ray,
                             iterations=int(res.nit), engine="highs")
        if res.status == 3:
            return LpOutcome(LpStatus.UNBOUNDED, iterations=int(res.nit),
                             engine="highs")
    raise NumericalBreakdown(f"HiGHS returned status {res.status}: {res.message}")


def violation_program(lp: LinearProgram):
    """``min t`` over ``lp``'s box with every row relaxed by one shared ``t >= 0``.

    Equality rows become a ``>=`` and a ``<=`` copy. The duals of this program
    are Farkas certificates normalised by ``sum |u_i| <= 1``, so a basic dual
    solution lies on an extreme ray of the certificate cone. Such a ray rests
    on an irreducible infeasible subsystem; per-row artificials would instead
    bound each ``|u_i|`` and add up every violated row.

    Returns the program and, for each of its rows, the source row of ``lp``.
    """
    src, sign, senses = [], [], []
    for i, s in enumerate(lp.senses_array()):
        if s in (GE, EQ):
            src.append(i)
            sign.append(1.0)
            senses.append(GE)
        if s in (LE, EQ):
            src.append(i)
            sign.append(-1.0)
            senses.append(LE)
    src = np.asarray(src, dtype=int)
    A = np.hstack([lp.constraint_matrix[src], np.asarray(sign).reshape(-1, 1)])
    prog = LinearProgram(np.append(np.zeros(lp.n_cols), 1.0), A, lp.rhs[src], senses,
                         np.append(lp.lower, 0.0), np.append(lp.upper, np.inf))
    return prog, src


def _fold_duals(n_rows: int, src: np.ndarray, duals) -> np.ndarray:
    u = np.zeros(n_rows)
    np.add.at(u, src, np.asarray(duals, dtype=float))
    return u


def _phase_one_ray(lp: LinearProgram, tol: float, engine: str = "highs"
                   ) -> Optional[np.ndarray]:
    """Extreme Farkas ray of ``lp`` from :func:`violation_program`.

    Returns ``None`` when the LP is feasible.
    """
    if lp.n_rows == 0:
        return None
    prog, src = violation_program(lp)
    out = solve_lp(prog, engine, tol=tol)
    if out.status is not LpStatus.OPTIMAL:
        raise NumericalBreakdown(f"violation LP ended {out.status.value}")
    if out.objective_value <= infeasibility_threshold(lp.rhs, tol):
        return None
    return normalize_ray(_fold_duals(lp.n_rows, src, out.duals))


def infeasibility_threshold(rhs, tol: float = TOL_FEAS) -> float:
    """Largest row violation above which an LP is declared infeasible.

    Grows only for very large right-hand sides (a ``-1e9`` surrogate bound),
    where round-off scales with ``|b|``.
    """
    scale = float(np.abs(rhs).max(initial=0.0))
    return 10.0 * tol * max(1.0, 1e-6 * scale)


def normalize_ray(u: np.ndarray) -> np.ndarray:
    scale = float(np.abs(u).max(initial=0.0))
    if scale <= 0.0:
        raise NumericalBreakdown("zero infeasibility certificate")
    return u / scale


# ---------------------------------------------------------------- diagnostics

def row_activity_violation(lp: LinearProgram, x: np.ndarray) -> np.ndarray:
    """Per-row violation (>= 0) of ``A x (sense) b``."""
    act = lp.constraint_matrix @ x - lp.rhs
    senses = lp.senses_array()
    viol = np.zeros(lp.n_rows)
    viol[senses == GE] = np.maximum(0.0, -act[senses == GE])
    viol[senses == LE] = np.maximum(0.0, act[senses == LE])
    viol[senses == EQ] = np.abs(act[senses == EQ])
    return viol


def _dual_sign_violation(lp: LinearProgram, v: np.ndarray) -> np.ndarray:
    senses = lp.senses_array()
    out = np.zeros(lp.n_rows)
    out[senses == GE] = np.maximum(0.0, -v[senses == GE])
    out[senses == LE] = np.maximum(0.0, v[senses == LE])
    return out


def _box_max(r: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    """max of r^T x over the variable box (may be +inf)."""
    total = 0.0
    for rj, lo, hi in zip(r, lower, upper):
        if rj > 0:
            total += rj * hi
        elif rj < 0:
            total += rj * lo
    return total


def check_certificate(lp: LinearProgram, outcome: LpOutcome) -> ViolationReport:
    """Measure how well ``outcome`` certifies itself for ``lp``."""
    if outcome.status is LpStatus.UNBOUNDED:
        return ViolationReport(LpStatus.UNBOUNDED)
    A, b, c = lp.constraint_matrix, lp.rhs, lp.objective
    lo, hi = lp.lower, lp.upper

    if outcome.status is LpStatus.INFEASIBLE:
        u = outcome.farkas_ray
        r = A.T @ u
        # r_j must not push r^T x to +inf over the box
        ray_viol = np.zeros(lp.n_cols)
        ray_viol = np.where(np.isinf(hi), np.maximum(0.0, r), ray_viol)
        ray_viol = np.where(np.isinf(lo), np.maximum(ray_viol, -r), ray_viol)
        dual_res = max(float(ray_viol.max(initial=0.0)),
                       float(_dual_sign_violation(lp, u).max(initial=0.0)))
        # clip tiny residuals so the box term stays finite
        r_clipped = np.where(ray_viol > 0, 0.0, r)
        slack = float(b @ u) - _box_max(r_clipped, lo, hi)
        return ViolationReport(LpStatus.INFEASIBLE, dual_residual=dual_res + 0.0,
                               farkas_slack=slack)

    x, v = outcome.primal, outcome.duals
    primal_res = max(float(row_activity_violation(lp, x).max(initial=0.0)),
                     float(np.maximum(0.0, lo - x).max(initial=0.0)),
                     float(np.maximum(0.0, x - hi).max(initial=0.0)))
    d = c - A.T @ v
    col_viol = np.zeros(lp.n_cols)
    # d_j > 0 needs a finite lower bound, d_j < 0 a finite upper bound
    col_viol = np.where(np.isinf(lo), np.maximum(0.0, d), col_viol)
    col_viol = np.where(np.isinf(hi), np.maximum(col_viol, -d), col_viol)
    dual_res = max(float(col_viol.max(initial=0.0)),
                   float(_dual_sign_violation(lp, v).max(initial=0.0)))
    row_cs = np.abs(v * (A @ x - b))
    col_cs = np.zeros(lp.n_cols)
    pos = (d > 0) & np.isfinite(lo)
    neg = (d < 0) & np.isfinite(hi)
    col_cs[pos] = d[pos] * (x[pos] - lo[pos])
    col_cs[neg] = -d[neg] * (hi[neg] - x[neg])
    cs = max(float(row_cs.max(initial=0.0)), float(np.abs(col_cs).max(initial=0.0)))
    dual_obj = float(b @ v)
    dual_obj += float(d[pos] @ lo[pos]) + float(d[neg] @ hi[neg])
    # "+ 0.0" folds negative zeros from np.maximum
    return ViolationReport(LpStatus.OPTIMAL, primal_residual=primal_res + 0.0,
                           dual_residual=dual_res + 0.0, complementarity_gap=cs + 0.0,
                           duality_gap=abs(float(c @ x) - dual_obj))


# ---------------------------------------------------------------- rhs families

class RhsFamily:
    """LPs that share everything except the right-hand side.

    Benders subproblems are such a family. Large members are solved on
    persistent HiGHS models (one for the LP, one for its violation program) so
    each solve warm-starts from the last basis. Small members, or
    ``engine="simplex"``, go through :func:`solve_lp` unchanged.
    """

    def __init__(self, objective, matrix, senses, lower=None, upper=None,
                 engine: str = "auto", tol: float = TOL_FEAS):
        self.template = LinearProgram(objective, matrix, np.zeros(np.shape(matrix)[0]),
                                      senses, lower, upper)
        t = self.template
        big = t.n_rows * t.n_cols > AUTO_SIMPLEX_LIMIT
        self.persistent = engine == "highs" or (engine == "auto" and big)
        self.engine = engine
        self.tol = tol
        self._main = self._aux = None
        if self.persistent:
            self._senses = t.senses_array()
            self._rows = np.arange(t.n_rows, dtype=np.int32)

    def member(self, rhs) -> LinearProgram:
        t = self.template
        return LinearProgram(t.objective, t.constraint_matrix, rhs, t.row_senses,
                             t.lower, t.upper)

    def solve(self, rhs) -> LpOutcome:
        rhs = np.asarray(rhs, dtype=float).ravel()
        if not self.persistent:
            return solve_lp(self.member(rhs), self.engine, tol=self.tol)
        import highspy

        if self._main is None:
            t = self.template
            self._main = _highs_model(t.objective, sparse.csc_array(t.constraint_matrix),
                                      t.lower, t.upper)
        h = self._main
        lo, hi = self._row_bounds(rhs)
        h.changeRowsBounds(self._rows.size, self._rows, lo, hi)
        h.run()
        st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kOptimal:
            sol = h.getSolution()
            x = np.asarray(sol.col_value, dtype=float)
            return LpOutcome(LpStatus.OPTIMAL, primal=x,
                             duals=np.asarray(sol.row_dual, dtype=float),
                             objective_value=float(self.template.objective @ x),
                             iterations=int(h.getInfo().simplex_iteration_count),
                             engine="highs")
        if st not in (highspy.HighsModelStatus.kInfeasible, highspy.HighsModelStatus.kUnbounded,
                      highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # fall back to a cold solve before giving up
            return solve_lp(self.member(rhs), "highs", tol=self.tol)
        ray = self._phase_one(rhs)
        if ray is not None:
            return LpOutcome(LpStatus.INFEASIBLE, farkas_ray=ray, engine="highs")
        if st == highspy.HighsModelStatus.kInfeasible:
            raise NumericalBreakdown("HiGHS reported infeasible but phase one found a point")
        return LpOutcome(LpStatus.UNBOUNDED, engine="highs")

    def _row_bounds(self, rhs):
        s = self._senses
        return np.where(s == LE, -np.inf, rhs), np.where(s == GE, np.inf, rhs)

    def _phase_one(self, rhs) -> Optional[np.ndarray]:
        t = self.template
        if t.n_rows == 0:
            return None
        if self._aux is None:
            prog, self._src = violation_program(t)
            self._aux = _highs_model(prog.objective, sparse.csc_array(prog.constraint_matrix),
                                     prog.lower, prog.upper)
            self._aux_senses = prog.senses_array()
            self._aux_rows = np.arange(self._src.size, dtype=np.int32)
        h = self._aux
        r = rhs[self._src]
        h.changeRowsBounds(self._aux_rows.size, self._aux_rows,
                           np.where(self._aux_senses == LE, -np.inf, r),
                           np.where(self._aux_senses == GE, np.inf, r))
        h.run()
        import highspy

        if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
            raise NumericalBreakdown(f"violation LP failed: {h.getModelStatus()}")
        if h.getInfo().objective_function_value <= infeasibility_threshold(rhs, self.tol):
            return None
        return normalize_ray(_fold_duals(t.n_rows, self._src, h.getSolution().row_dual))


def _highs_model(cost, csc, lower, upper):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("dual_feasibility_tolerance", 1e-9)
    h.setOptionValue("presolve", "off")
    model = highspy.HighsLp()
    model.num_col_ = csc.shape[1]
    model.num_row_ = csc.shape[0]
    model.col_cost_ = np.asarray(cost, dtype=float)
    model.col_lower_ = np.asarray(lower, dtype=float)
    model.col_upper_ = np.asarray(upper, dtype=float)
    model.row_lower_ = np.full(csc.shape[0], -np.inf)
    model.row_upper_ = np.full(csc.shape[0], np.inf)
    model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    model.a_matrix_.start_ = csc.indptr
    model.a_matrix_.index_ = csc.indices
    model.a_matrix_.value_ = csc.data
    h.passModel(model)
    return h
