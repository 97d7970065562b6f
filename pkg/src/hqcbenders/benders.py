"""Multi-cut Benders decomposition with per-iteration cut selection.

The problem is ``min c x + d y`` subject to ``A x + B y (>=, <=, =) b``,
``x >= 0`` (or free where flagged), ``y`` binary and a set of constraints on
``y`` alone. Each iteration solves the master for a pool of binary
solutions, solves one subproblem per pool entry, selects a subset of the
resulting cuts and appends it to the master.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cuts import Cut, CutKind
from .errors import (DimensionMismatch, IterationCapExceeded, SamplerFailure,
                     UnboundedError)
from .lp import GE, LinearProgram, LpStatus, RhsFamily, normalize_senses, solve_lp
from .milp import MilpProblem, SolutionPool, solve_milp_with_pool
from .selection import (IlpSelector, QuboSelector, SelectionSettings, select_cuts)

log = logging.getLogger(__name__)

DEFAULT_ZETA_LOW = -1e9
MODES = ("plain", "all", "random", "select")
BACKENDS = ("ilp", "exhaustive", "sa", "remote")


@dataclass
class YConstraints:
    """Linear rows over the binaries only."""

    matrix: np.ndarray
    rhs: np.ndarray
    senses: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        if self.matrix.shape[0] != self.rhs.size:
            raise DimensionMismatch("y-constraint rows and rhs differ in length")
        self.senses = normalize_senses(self.senses, self.rhs.size)

    @property
    def n_rows(self) -> int:
        return self.rhs.size


@dataclass
class MixedProblem:
    c: np.ndarray
    d: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    row_senses: Optional[Sequence[str]] = None
    x_free: Optional[np.ndarray] = None
    y_constraints: Optional[YConstraints] = None
    zeta_low: float = DEFAULT_ZETA_LOW

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.d = np.asarray(self.d, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        q, n, m = self.b.size, self.c.size, self.d.size
        self.A = np.asarray(self.A, dtype=float).reshape(q, n)
        self.B = np.asarray(self.B, dtype=float).reshape(q, m)
        self.row_senses = normalize_senses(self.row_senses, q)
        self.x_free = (np.zeros(n, dtype=bool) if self.x_free is None
                       else np.asarray(self.x_free, dtype=bool).ravel())
        if self.x_free.size != n:
            raise DimensionMismatch("x_free must have one entry per continuous variable")
        if self.y_constraints is not None and self.y_constraints.matrix.shape[1] != m:
            raise DimensionMismatch("y-constraints must reference exactly the m binaries")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.d.size

    @property
    def q(self) -> int:
        return self.b.size

    def x_lower(self) -> np.ndarray:
        return np.where(self.x_free, -np.inf, 0.0)

    def full_milp(self, pool_size: int = 1) -> MilpProblem:
        """The undecomposed problem over ``(x, y)``."""
        n, m = self.n, self.m
        mat = np.hstack([self.A, self.B])
        rhs, senses = self.b, list(self.row_senses)
        if self.y_constraints is not None:
            yc = self.y_constraints
            mat = np.vstack([mat, np.hstack([np.zeros((yc.n_rows, n)), yc.matrix])])
            rhs = np.concatenate([rhs, yc.rhs])
            senses += list(yc.senses)
        lp = LinearProgram(np.concatenate([self.c, self.d]), mat, rhs, senses,
                           np.concatenate([self.x_lower(), np.zeros(m)]),
                           np.concatenate([np.full(n, np.inf), np.ones(m)]))
        mask = np.concatenate([np.zeros(n, dtype=bool), np.ones(m, dtype=bool)])
        return MilpProblem(lp, mask, pool_size)


def solve_direct(p: MixedProblem, prover: str = "auto"):
    """Reference optimum of the whole MILP: ``(objective, x, y)``."""
    pool = solve_milp_with_pool(p.full_milp(), prover=prover)
    z = pool.best.assignment
    return pool.best.objective, z[:p.n], np.round(z[p.n:])


@dataclass
class MasterState:
    d: np.ndarray
    zeta_low: float
    y_constraints: Optional[YConstraints] = None
    cuts: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.d.size

    @property
    def n_constraints(self) -> int:
        ny = self.y_constraints.n_rows if self.y_constraints is not None else 0
        return 1 + ny + len(self.cuts)

    def add(self, cut: Cut) -> bool:
        """Append ``cut`` unless an identical one is already present."""
        if any(cut.same_as(c) for c in self.cuts):
            return False
        self.cuts.append(cut)
        return True

    def milp(self, pool_size: int) -> MilpProblem:
        m = self.m
        rows, rhs, senses = [], [], []
        zrow = np.zeros(m + 1)
        zrow[m] = 1.0
        rows.append(zrow)
        rhs.append(self.zeta_low)
        senses.append(GE)
        if self.y_constraints is not None:
            yc = self.y_constraints
            for k in range(yc.n_rows):
                rows.append(np.append(yc.matrix[k], 0.0))
                rhs.append(yc.rhs[k])
                senses.append(yc.senses[k])
        for cut in self.cuts:
            # constant + coeff y <= zeta   ->   zeta - coeff y >= constant
            rows.append(np.append(-cut.coeff_y, 0.0 if cut.is_feasibility else 1.0))
            rhs.append(cut.constant)
            senses.append(GE)
        lp = LinearProgram(np.append(self.d, 1.0), np.array(rows), np.array(rhs), senses,
                           np.append(np.zeros(m), -np.inf), np.append(np.ones(m), np.inf))
        return MilpProblem(lp, np.append(np.ones(m, dtype=bool), False), pool_size)


@dataclass
class SubproblemTemplate:
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    row_senses: list
    x_lower: np.ndarray

    def __post_init__(self):
        self._local = threading.local()

    def rhs_for(self, y_hat) -> np.ndarray:
        return self.b - self.B @ np.asarray(y_hat, dtype=float)

    def lp_for(self, y_hat) -> LinearProgram:
        return LinearProgram(self.c, self.A, self.rhs_for(y_hat), self.row_senses, self.x_lower)

    def solve(self, y_hat, lp_engine: str = "auto"):
        # persistent solver state is not shareable, so one family per thread
        fams = self._local.__dict__.setdefault("families", {})
        if lp_engine not in fams:
            fams[lp_engine] = RhsFamily(self.c, self.A, self.row_senses, self.x_lower,
                                        engine=lp_engine)
        return fams[lp_engine].solve(self.rhs_for(y_hat))


def decompose(p: MixedProblem):
    master = MasterState(p.d.copy(), float(p.zeta_low), p.y_constraints)
    tmpl = SubproblemTemplate(p.c, p.A, p.B, p.b, list(p.row_senses), p.x_lower())
    return master, tmpl


@dataclass
class CutOutcome:
    kind: str  # "optimality", "feasibility" or "unbounded"
    cut: Optional[Cut] = None
    dsp_value: Optional[float] = None
    primal: Optional[np.ndarray] = None
    rank: int = 0


def solve_subproblem_for(tmpl: SubproblemTemplate, y_hat, rank: int = 0,
                         source_objective: float = math.nan,
                         lp_engine: str = "auto") -> CutOutcome:
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.size != tmpl.B.shape[1]:
        raise DimensionMismatch(f"y_hat has {y_hat.size} entries, expected {tmpl.B.shape[1]}")
    out = tmpl.solve(y_hat, lp_engine)
    if out.status is LpStatus.UNBOUNDED:
        return CutOutcome("unbounded", rank=rank)
    if out.status is LpStatus.OPTIMAL:
        w, kind = out.duals, CutKind.OPTIMALITY
    else:
        w, kind = out.farkas_ray, CutKind.FEASIBILITY
    cut = Cut(kind, w, -(tmpl.B.T @ w), float(tmpl.b @ w), rank, source_objective, y_hat.copy())
    if kind is CutKind.OPTIMALITY:
        return CutOutcome("optimality", cut, cut.lhs(y_hat), out.primal, rank)
    return CutOutcome("feasibility", cut, rank=rank)


def ensure_nonempty_selection(selected: Sequence[Cut], generated: Sequence[Cut]) -> list:
    """Fall back to the cut from the best-ranked pool entry when nothing was kept."""
    if selected:
        return list(selected)
    if not generated:
        return []
    return [min(generated, key=lambda c: c.source_rank)]


def update_bounds(lb: float, ub: float, v_mp: float, outcome0: CutOutcome,
                  d: np.ndarray, y0) -> tuple:
    """New ``(LB, UB)`` after an iteration.

    The master value only grows as cuts accumulate; ``max`` keeps round-off
    from producing a visible dip.
    """
    lb = max(lb, v_mp)
    if outcome0.kind == "optimality":
        ub = min(ub, outcome0.dsp_value + float(d @ np.asarray(y0, dtype=float)))
    return lb, ub


def relative_gap(lb: float, ub: float) -> float:
    if math.isinf(ub):
        return math.inf
    return (ub - lb) / max(abs(ub), 1.0)


_KEYS = {
    "epsilon": "epsilon",
    "pool_size": "pool.size",
    "pool_gap": "pool.gap",
    "pool_nodes": "pool.nodes",
    "mode": "selection.mode",
    "criterion": "selection.criterion",
    "strategy": "selection.strategy",
    "opt_select": "selection.opt_select",
    "cap": "selection.cap",
    "opt_passthrough": "selection.opt_passthrough",
    "random_k": "selection.random_k",
    "progress_guard": "selection.progress_guard",
    "backend": "sampler.backend",
    "sa_reads": "sampler.reads",
    "sa_sweeps": "sampler.sweeps",
    "sampler_endpoint": "sampler.endpoint",
    "seed": "seed",
    "max_iterations": "max_iterations",
    "lp_engine": "lp.engine",
    "workers": "workers",
}


@dataclass
class BendersConfig:
    epsilon: float = 0.005
    pool_size: int = 10
    pool_gap: float = 0.2
    pool_nodes: int = 10_000
    mode: str = "select"
    criterion: int = 2
    strategy: int = 1
    opt_select: bool = False
    cap: int = 3
    opt_passthrough: str = "all"
    random_k: int = 3
    progress_guard: bool = True
    backend: str = "ilp"
    sa_reads: int = 1000
    sa_sweeps: int = 1000
    sampler_endpoint: Optional[str] = None
    seed: int = 0
    max_iterations: int = 200
    lp_engine: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.criterion not in (1, 2) or self.strategy not in (1, 2):
            raise ValueError("criterion and strategy take the values 1 or 2")
        if self.opt_passthrough not in ("all", "best"):
            raise ValueError("opt_passthrough is 'all' or 'best'")
        if self.pool_size < 1 or self.max_iterations < 1:
            raise ValueError("pool_size and max_iterations must be positive")
        if self.pool_nodes < 0:
            raise ValueError("pool_nodes must be nonnegative")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    def selection_settings(self) -> SelectionSettings:
        return SelectionSettings(self.criterion, self.strategy, self.opt_select, self.cap,
                                 self.opt_passthrough)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{_KEYS[f.name]} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BendersConfig":
        by_key = {v: k for k, v in _KEYS.items()}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in by_key:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            name = by_key[key]
            kwargs[name] = _coerce(types[name], value)
        return cls(**kwargs)


def _coerce(tp: str, value: str):
    tp = str(tp)
    if "bool" in tp:
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return low in ("true", "1", "yes")
    if "int" in tp:
        return int(value)
    if "float" in tp:
        return float(value)
    return value


@dataclass
class IterationRecord:
    iter: int
    lb: float
    ub: float
    gap_pct: float
    n_feas_cuts_generated: int
    n_opt_cuts_generated: int
    n_feas_selected: int
    n_opt_selected: int
    mp_constraints: int
    mp_ms: float
    sp_ms: float
    matrix_ms: float
    select_ms: float
    sampler_us: float
    pool_size: int = 0
    guard_used: bool = False
    matrices: list = field(default_factory=list)


@dataclass
class BendersTrace:
    records: list = field(default_factory=list)
    status: str = "running"

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]


@dataclass
class BendersResult:
    status: str
    objective: float
    lower_bound: float
    upper_bound: float
    x: Optional[np.ndarray]
    y: Optional[np.ndarray]
    trace: BendersTrace
    config: BendersConfig

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _sampler_seed(seed: int, call: int) -> int:
    return int(np.random.SeedSequence([seed, call]).generate_state(1)[0])


class _Selectors:
    """Build the cut selector for a config; owns any network client."""

    def __init__(self, cfg: BendersConfig):
        self.cfg = cfg
        self.calls = 0
        self.client = None
        if cfg.backend == "ilp":
            self.selector = IlpSelector()
        elif cfg.backend == "exhaustive":
            from .samplers.exhaustive import exhaustive_solve
            self.selector = QuboSelector(exhaustive_solve, "exhaustive")
        elif cfg.backend == "sa":
            from .samplers.annealing import simulated_annealing_solve

            def sa(q):
                s = self._next_seed()
                return simulated_annealing_solve(q, cfg.sa_reads, cfg.sa_sweeps, s)
            self.selector = QuboSelector(sa, "sa")
        else:
            import httpx

            from .samplers.remote import EndpointConfig, remote_sample
            self.client = httpx.Client(timeout=120.0)

            def remote(q):
                ep = EndpointConfig(cfg.sampler_endpoint, cfg.sa_reads,
                                    {"seed": self._next_seed(), "sweeps": cfg.sa_sweeps})
                return remote_sample(q, ep, self.client)
            self.selector = QuboSelector(remote, "remote")

    def _next_seed(self) -> int:
        s = _sampler_seed(self.cfg.seed, self.calls)
        self.calls += 1
        return s

    def close(self):
        if self.client is not None:
            self.client.close()


def _pool_entries(cfg: BendersConfig, pool: SolutionPool, rng) -> list:
    k = len(pool)
    if cfg.mode == "plain":
        return [0]
    if cfg.mode == "random":
        others = np.arange(1, k)
        pick = rng.choice(others, size=min(cfg.random_k, others.size), replace=False) \
            if others.size else []
        return [0] + sorted(int(i) for i in pick)
    return list(range(k))


def _separates(cut: Cut, y0, zeta0: float, tol: float = 1e-7) -> bool:
    v = cut.violation(y0, zeta0)
    scale = max(1.0, abs(cut.constant))
    return v > tol * scale


def _apply_guard(sel_f, sel_o, outcome0: CutOutcome, y0, zeta0, cfg: BendersConfig):
    """Make sure the chosen cuts cut off the current master optimum."""
    cut0 = outcome0.cut
    if cut0 is None or not _separates(cut0, y0, zeta0):
        return sel_f, sel_o, False
    if any(_separates(c, y0, zeta0) for c in sel_f + sel_o):
        return sel_f, sel_o, False
    target = sel_f if cut0.is_feasibility else sel_o
    capped = cfg.mode == "select" and cfg.strategy == 2
    if capped and len(target) >= cfg.cap:
        target = target[:cfg.cap - 1]
    target = target + [cut0]
    if cut0.is_feasibility:
        return target, sel_o, True
    return sel_f, target, True


def run_benders(p: MixedProblem, cfg: Optional[BendersConfig] = None) -> BendersResult:
    cfg = cfg or BendersConfig()
    master, tmpl = decompose(p)
    rng = np.random.default_rng(cfg.seed)
    selectors = _Selectors(cfg) if cfg.mode == "select" else None
    trace = BendersTrace()
    lb, ub = -math.inf, math.inf
    inc_x = inc_y = None
    last_y = None
    pool_size = 1 if cfg.mode == "plain" else cfg.pool_size
    executor = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for k in range(1, cfg.max_iterations + 1):
            t0 = time.perf_counter()
            n_rows = master.n_constraints
            pool = solve_milp_with_pool(master.milp(pool_size), lp_engine=cfg.lp_engine,
                                        pool_gap=cfg.pool_gap, node_budget=cfg.pool_nodes)
            mp_ms = (time.perf_counter() - t0) * 1e3
            e0 = pool.best
            y0, zeta0 = np.round(e0.assignment[:p.m]), float(e0.assignment[p.m])
            last_y = y0

            t1 = time.perf_counter()
            idx = _pool_entries(cfg, pool, rng)

            def work(j):
                e = pool[j]
                return solve_subproblem_for(tmpl, np.round(e.assignment[:p.m]), j,
                                            e.objective, cfg.lp_engine)
            outcomes = list(executor.map(work, idx)) if executor else [work(j) for j in idx]
            sp_ms = (time.perf_counter() - t1) * 1e3
            if any(o.kind == "unbounded" for o in outcomes):
                raise UnboundedError("a subproblem is unbounded; the dual subproblem is infeasible")
            feas = [o.cut for o in outcomes if o.kind == "feasibility"]
            opt = [o.cut for o in outcomes if o.kind == "optimality"]

            matrix_ms = select_ms = sampler_us = 0.0
            matrices = []
            if cfg.mode == "select":
                sel = select_cuts(feas, opt, p.m, cfg.selection_settings(), selectors.selector)
                sel_f, sel_o = sel.feasibility, sel.optimality
                matrix_ms, select_ms, sampler_us = sel.matrix_ms, sel.select_ms, sel.sampler_us
                matrices = sel.records
            else:
                sel_f, sel_o = feas, opt
            sel_f = ensure_nonempty_selection(sel_f, feas)
            sel_o = ensure_nonempty_selection(sel_o, opt)
            guard = False
            if cfg.progress_guard and cfg.mode == "select":
                sel_f, sel_o, guard = _apply_guard(sel_f, sel_o, outcomes[0], y0, zeta0, cfg)
            for cut in sel_f + sel_o:
                master.add(cut)

            new_lb, new_ub = update_bounds(lb, ub, e0.objective, outcomes[0], p.d, y0)
            if new_ub < ub:
                inc_x, inc_y = outcomes[0].primal, y0
            lb, ub = new_lb, new_ub
            gap = relative_gap(lb, ub)
            trace.records.append(IterationRecord(
                k, lb, ub, gap * 100.0, len(feas), len(opt), len(sel_f), len(sel_o),
                n_rows, mp_ms, sp_ms, matrix_ms, select_ms, sampler_us, len(pool), guard,
                matrices))
            log.debug("iter %d lb=%.6g ub=%.6g gap=%.4g%%", k, lb, ub, gap * 100)
            if math.isinf(cfg.epsilon) or gap <= cfg.epsilon:
                trace.status = "converged"
                return _result("converged", lb, ub, inc_x, inc_y, last_y, trace, cfg)
        trace.status = "iteration_cap"
        res = _result("iteration_cap", lb, ub, inc_x, inc_y, last_y, trace, cfg)
        raise IterationCapExceeded(
            f"no convergence in {cfg.max_iterations} iterations (LB={lb:.6g}, UB={ub:.6g})", res)
    finally:
        if executor:
            executor.shutdown()
        if selectors:
            selectors.close()


def _result(status, lb, ub, inc_x, inc_y, last_y, trace, cfg) -> BendersResult:
    if math.isinf(ub):
        return BendersResult(status, lb, lb, ub, None, last_y, trace, cfg)
    return BendersResult(status, ub, lb, ub, inc_x, inc_y, trace, cfg)


def random_mixed_problem(seed: int, m: int = 6, n: int = 5, q: int = 8,
                         zeta_low: float = DEFAULT_ZETA_LOW) -> MixedProblem:
    """A random instance that is feasible by construction.

    ``c >= 0`` keeps every subproblem bounded; ``b`` is built around a planted
    ``(x*, y*)`` so at least one binary assignment is feasible while many are
    not, which exercises feasibility cuts.
    """
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 4, size=(q, n)) * (rng.random((q, n)) < 0.7)
    B = rng.integers(-4, 5, size=(q, m)) * (rng.random((q, m)) < 0.6)
    c = rng.integers(1, 8, size=n).astype(float)
    d = rng.integers(-4, 9, size=m).astype(float)
    y_star = (rng.random(m) < 0.5).astype(float)
    x_star = rng.integers(0, 4, size=n).astype(float)
    b = A @ x_star + B @ y_star - rng.integers(0, 3, size=q)
    yc = None
    if rng.random() < 0.5:
        # a cardinality row the planted point satisfies
        yc = YConstraints(np.ones((1, m)), [max(1.0, y_star.sum())], ["<="])
    return MixedProblem(c, d, A.astype(float), B.astype(float), b.astype(float),
                        y_constraints=yc, zeta_low=zeta_low)
