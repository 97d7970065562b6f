"""Cut selection: indicator matrices, inspection, QUBO encodings, decoding.

Two scoring criteria build a binary matrix ``M`` whose rows are cuts:

* criterion 1 (``E``): column ``j`` is the infeasible master solution behind
  feasibility cut ``j``; ``E[i, j] = 1`` when cut ``i`` also excludes it.
* criterion 2 (``DF`` / ``DO``): columns are master variables; an entry is 1
  when the cut's coefficient on that variable is nonzero.

Two strategies then pick rows: strategy 1 is a minimum set cover, strategy 2
a maximum coverage with at most ``cap`` rows. Either is encoded as a QUBO and
handed to a sampler, or solved directly as a small ILP.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .cuts import COVER_EPS, Cut
from .errors import EmptyMatrix, EmptySampleSet, InvalidCap, SamplerFailure
from .lp import LinearProgram
from .milp import MilpProblem, solve_milp_with_pool
from .qubo import COVERAGE, DECISION, SLACK, Qubo, SampleSet

EXCL_EPS = 1e-9
SET_COVER = 1
MAX_COVERAGE = 2


class MatrixKind(str, Enum):
    E = "E"
    DF = "DF"
    DO = "DO"


@dataclass(frozen=True)
class RowMeta:
    cut_index: int
    source_objective: float
    source_rank: int


@dataclass
class IndicatorMatrix:
    bits: np.ndarray
    row_meta: list
    column_ids: np.ndarray
    kind: MatrixKind

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2:
            self.bits = self.bits.reshape(len(self.row_meta), -1)
        self.column_ids = np.asarray(self.column_ids, dtype=int)
        self.kind = MatrixKind(self.kind)
        if self.bits.shape != (len(self.row_meta), self.column_ids.size):
            raise ValueError("indicator matrix metadata does not match its shape")

    @property
    def shape(self):
        return self.bits.shape

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]

    @property
    def n_cols(self) -> int:
        return self.bits.shape[1]

    def subset(self, rows, cols) -> "IndicatorMatrix":
        rows, cols = list(rows), list(cols)
        return IndicatorMatrix(self.bits[np.ix_(rows, cols)],
                               [self.row_meta[r] for r in rows],
                               self.column_ids[cols], self.kind)


def _meta(cuts: Sequence[Cut]):
    return [RowMeta(k, c.source_objective, c.source_rank) for k, c in enumerate(cuts)]


def build_exclusion_matrix(feas_cuts: Sequence[Cut], eps: float = EXCL_EPS) -> IndicatorMatrix:
    """``E[i, j] = 1`` iff cut ``i`` is violated at the generator of cut ``j``."""
    n = len(feas_cuts)
    E = np.zeros((n, n), dtype=np.uint8)
    for i, ci in enumerate(feas_cuts):
        for j, cj in enumerate(feas_cuts):
            E[i, j] = 1 if i == j else int(ci.lhs(cj.generator) > eps)
    return IndicatorMatrix(E, _meta(feas_cuts), [c.source_rank for c in feas_cuts], MatrixKind.E)


def build_coverage_matrix(cuts: Sequence[Cut], m: int, eps: float = COVER_EPS) -> IndicatorMatrix:
    if not cuts:
        return IndicatorMatrix(np.zeros((0, m)), [], np.arange(m), MatrixKind.DF)
    kinds = {c.kind for c in cuts}
    if len(kinds) != 1:
        raise ValueError("coverage matrices take cuts of a single kind")
    D = np.zeros((len(cuts), m), dtype=np.uint8)
    for i, c in enumerate(cuts):
        if c.coeff_y.size != m:
            raise ValueError(f"cut {i} has {c.coeff_y.size} coefficients, expected {m}")
        D[i] = np.abs(c.coeff_y) > eps
    kind = MatrixKind.DF if cuts[0].is_feasibility else MatrixKind.DO
    return IndicatorMatrix(D, _meta(cuts), np.arange(m), kind)


@dataclass
class Inspection:
    reduced: IndicatorMatrix
    shortcut: Optional[int]  # cut_index of a row covering every column
    dropped_columns: list
    dropped_rows: list


def inspect_matrix(M: IndicatorMatrix) -> Inspection:
    if M.n_rows == 0:
        raise EmptyMatrix("cannot inspect a matrix without rows")
    cols = list(range(M.n_cols))
    dropped_cols = []
    if M.kind is not MatrixKind.E:
        keep = M.bits.any(axis=0)
        dropped_cols = [int(M.column_ids[j]) for j in range(M.n_cols) if not keep[j]]
        cols = [j for j in range(M.n_cols) if keep[j]]
    sub = M.bits[:, cols]
    winners = {}
    for r in range(M.n_rows):
        if not sub[r].any():
            continue
        key = sub[r].tobytes()
        meta = M.row_meta[r]
        best = winners.get(key)
        if best is None or ((meta.source_objective, meta.source_rank)
                            < (M.row_meta[best].source_objective, M.row_meta[best].source_rank)):
            winners[key] = r
    rows = sorted(winners.values())
    dropped_rows = [M.row_meta[r].cut_index for r in range(M.n_rows) if r not in winners.values()]
    reduced = M.subset(rows, cols)
    shortcut = None
    if reduced.n_rows and reduced.n_cols:
        full = [r for r in range(reduced.n_rows) if reduced.bits[r].all()]
        if full:
            r = min(full, key=lambda r: (reduced.row_meta[r].source_objective,
                                         reduced.row_meta[r].source_rank))
            shortcut = reduced.row_meta[r].cut_index
    return Inspection(reduced, shortcut, dropped_cols, dropped_rows)


def _ceil_log2(k: int) -> int:
    k = int(k)
    return (k - 1).bit_length() if k > 1 else 0


class _Builder:
    def __init__(self):
        self.linear = []
        self.quad = {}
        self.offset = 0.0
        self.roles = []
        self.labels = []

    def var(self, role, label) -> int:
        self.linear.append(0.0)
        self.roles.append(role)
        self.labels.append(label)
        return len(self.linear) - 1

    def add_square(self, weight, terms, const):
        """Add ``weight * (sum(a * x) + const) ** 2`` using ``x * x = x``."""
        terms = [(i, float(a)) for i, a in terms if a != 0]
        for k, (i, a) in enumerate(terms):
            self.linear[i] += weight * (a * a + 2.0 * a * const)
            for j, b in terms[k + 1:]:
                key = (i, j) if i < j else (j, i)
                self.quad[key] = self.quad.get(key, 0.0) + 2.0 * weight * a * b
        self.offset += weight * const * const

    def build(self, penalties) -> Qubo:
        return Qubo(np.array(self.linear), self.quad, self.offset, self.roles,
                    self.labels, penalties)


def encode_set_cover(M: IndicatorMatrix, penalty_a: float = 1.0,
                     penalty_b: Optional[float] = None) -> Qubo:
    I, J = M.shape
    if I == 0 or J == 0:
        raise EmptyMatrix("set cover needs at least one row and one column")
    pb = float(I) if penalty_b is None else float(penalty_b)
    bld = _Builder()
    chi = [bld.var(DECISION, f"chi[{i}]") for i in range(I)]
    for i in chi:
        bld.linear[i] += penalty_a
    for j in range(J):
        colsum = int(M.bits[:, j].sum())
        gamma = _ceil_log2(colsum)
        slacks = [bld.var(SLACK, f"s[{a},{j}]") for a in range(gamma)]
        terms = [(chi[i], 1.0) for i in range(I) if M.bits[i, j]]
        terms += [(s, -(2.0 ** a)) for a, s in enumerate(slacks)]
        bld.add_square(pb, terms, -1.0)
    return bld.build({"A": penalty_a, "B": pb})


def encode_max_coverage(M: IndicatorMatrix, cap: int, penalty_a: float = 1.0,
                        penalty_b: Optional[float] = None, penalty_c: Optional[float] = None,
                        cardinality_slacks: bool = True) -> Qubo:
    I, J = M.shape
    if I == 0 or J == 0:
        raise EmptyMatrix("max coverage needs at least one row and one column")
    if int(cap) != cap or cap < 1:
        raise InvalidCap(f"cap must be a positive integer, got {cap!r}")
    cap = int(cap)
    pb = float(I + J) if penalty_b is None else float(penalty_b)
    pc = float(I + J) if penalty_c is None else float(penalty_c)
    bld = _Builder()
    chi = [bld.var(DECISION, f"chi[{i}]") for i in range(I)]
    phi = [bld.var(COVERAGE, f"phi[{j}]") for j in range(J)]
    for p in phi:
        bld.linear[p] -= penalty_a
    for j in range(J):
        colsum = int(M.bits[:, j].sum())
        gamma = min(cap, colsum).bit_length()
        slacks = [bld.var(SLACK, f"s[{a},{j}]") for a in range(gamma)]
        terms = [(chi[i], 1.0) for i in range(I) if M.bits[i, j]]
        terms.append((phi[j], -1.0))
        terms += [(s, -(2.0 ** a)) for a, s in enumerate(slacks)]
        bld.add_square(pb, terms, 0.0)
    terms = [(c, 1.0) for c in chi]
    if cardinality_slacks:
        card = [bld.var(SLACK, f"s[{a}]") for a in range(cap.bit_length())]
        terms += [(s, 2.0 ** a) for a, s in enumerate(card)]
    bld.add_square(pc, terms, -float(cap))
    return bld.build({"A": penalty_a, "B": pb, "C": pc, "cap": cap,
                      "cardinality_slacks": cardinality_slacks})


def qubit_upper_bound(criterion: int, strategy: int, n_cuts: int, m: Optional[int] = None,
                      cap: Optional[int] = None, cardinality_slacks: bool = True) -> int:
    """Worst-case variable count of the encodings for the given sizes."""
    if n_cuts < 1:
        raise ValueError("n_cuts must be positive")
    cols = n_cuts if criterion == 1 else m
    if cols is None or cols < 1:
        raise ValueError("criterion 2 needs the master variable count m")
    if strategy == SET_COVER:
        return n_cuts + cols * _ceil_log2(n_cuts)
    if cap is None or cap < 1:
        raise InvalidCap("strategy 2 needs a positive cap")
    per_col = int(cap).bit_length()
    extra = int(cap).bit_length() if cardinality_slacks else 0
    return n_cuts + cols * (1 + per_col) + extra


@dataclass
class DecodeDiagnostics:
    valid_fraction: float
    best_energy: float
    chosen_energy: float
    violations: int
    valid: bool


def _violations(bits, M: IndicatorMatrix, strategy, cap) -> int:
    chi = bits[:M.n_rows].astype(int)
    covered = M.bits.T.astype(int) @ chi
    if strategy == SET_COVER:
        return int(np.sum(covered < 1))
    phi = bits[M.n_rows:M.n_rows + M.n_cols].astype(int)
    return int(chi.sum() > cap) + int(np.sum(phi > covered))


def rank_preference(rows, n_rows: int) -> int:
    """Tie-break score: row ``i`` is worth ``2**(n_rows - 1 - i)``.

    Rows follow pool rank, so a larger score means cuts from better master
    solutions; among equal-size selections it orders them lexicographically.
    """
    return sum(1 << (n_rows - 1 - int(r)) for r in rows)


def coverage_of(M: IndicatorMatrix, rows) -> int:
    if not len(rows):
        return 0
    return int(np.count_nonzero(M.bits[list(rows)].any(axis=0)))


def _truncate(M: IndicatorMatrix, rows, cap):
    """Greedy trim of an over-cap selection to ``cap`` rows."""
    rows = list(rows)
    chosen = []
    covered = np.zeros(M.n_cols, dtype=bool)
    while rows and len(chosen) < cap:
        gains = [int(np.sum(M.bits[r].astype(bool) & ~covered)) for r in rows]
        k = int(np.argmax(gains))
        r = rows.pop(k)
        chosen.append(r)
        covered |= M.bits[r].astype(bool)
    return sorted(chosen)


def decode_selection(q: Qubo, samples: SampleSet, M: IndicatorMatrix, strategy: int,
                     cap: Optional[int] = None):
    """Pick the row subset encoded by the best sample.

    Valid samples win by energy; ties go to the selection with the larger
    :func:`rank_preference`. Without a valid sample, the fewest violated
    constraints wins.
    """
    if len(samples) == 0:
        raise EmptySampleSet("no samples to decode")
    if strategy == MAX_COVERAGE and cap is None:
        cap = int(q.penalties.get("cap", 0)) or None
        if cap is None:
            raise InvalidCap("strategy 2 decoding needs the cap")
    best_valid, best_invalid = None, None
    valid_reads = 0
    for b, e, c in samples.records():
        viol = _violations(b, M, strategy, cap)
        rows = tuple(int(i) for i in np.flatnonzero(b[:M.n_rows]))
        if viol == 0:
            valid_reads += c
            key = (round(e, 9), -rank_preference(rows, M.n_rows))
            if best_valid is None or key < best_valid[0]:
                best_valid = (key, rows, e)
        else:
            key = (viol, round(e, 9), -rank_preference(rows, M.n_rows))
            if best_invalid is None or key < best_invalid[0]:
                best_invalid = (key, rows, e, viol)
    total = int(samples.occurrences.sum())
    if best_valid is not None:
        _, rows, e = best_valid
        diag = DecodeDiagnostics(valid_reads / total, samples.lowest_energy, e, 0, True)
        return list(rows), diag
    _, rows, e, viol = best_invalid
    rows = list(rows)
    if strategy == MAX_COVERAGE and len(rows) > cap:
        rows = _truncate(M, rows, cap)
    diag = DecodeDiagnostics(0.0, samples.lowest_energy, e, viol, False)
    return rows, diag


@dataclass
class Choice:
    rows: list
    valid: bool = True
    qubits: int = 0
    qubit_bound: int = 0
    sampler_us: float = 0.0
    info: dict = field(default_factory=dict)


class QuboSelector:
    """Encode, sample with ``sampler`` and decode."""

    def __init__(self, sampler: Callable[[Qubo], SampleSet], name: str = "qubo",
                 cardinality_slacks: bool = True):
        self.sampler = sampler
        self.name = name
        self.cardinality_slacks = cardinality_slacks

    def choose(self, M: IndicatorMatrix, strategy: int, cap: int, criterion: int) -> Choice:
        if strategy == SET_COVER:
            q = encode_set_cover(M)
        else:
            q = encode_max_coverage(M, cap, cardinality_slacks=self.cardinality_slacks)
        bound = qubit_upper_bound(criterion, strategy, M.n_rows, M.n_cols, cap,
                                  self.cardinality_slacks)
        ss = self.sampler(q)
        rows, diag = decode_selection(q, ss, M, strategy, cap)
        return Choice(rows, diag.valid, q.size, bound, ss.timing.anneal_us,
                      {"valid_fraction": diag.valid_fraction, "violations": diag.violations})


class IlpSelector:
    """Solve the selection problem exactly as a binary program."""

    name = "ilp"
    # tie-break bonus, below any difference in the true objective
    TIE_WEIGHT = 0.5

    def choose(self, M: IndicatorMatrix, strategy: int, cap: int, criterion: int) -> Choice:
        I, J = M.shape
        bonus = self.TIE_WEIGHT * 0.5 ** np.arange(I)
        if strategy == SET_COVER:
            lp = LinearProgram(np.ones(I) - bonus, M.bits.T.astype(float), np.ones(J))
            mask = np.ones(I, dtype=bool)
        else:
            # variables: chi (I) then phi (J)
            A = np.zeros((J + 1, I + J))
            A[:J, :I] = M.bits.T
            A[:J, I:] = -np.eye(J)
            A[J, :I] = 1.0
            lp = LinearProgram(np.concatenate([-bonus, -np.ones(J)]), A,
                               np.concatenate([np.zeros(J), [cap]]), [">="] * J + ["<="])
            mask = np.ones(I + J, dtype=bool)
        pool = solve_milp_with_pool(MilpProblem(lp, mask, 1))
        chi = np.round(pool.best.assignment[:I]).astype(int)
        return Choice([int(i) for i in np.flatnonzero(chi)])


@dataclass
class SelectionSettings:
    criterion: int = 2
    strategy: int = SET_COVER
    opt_select: bool = False
    cap: int = 3
    opt_passthrough: str = "all"  # "all" or "best" when optimality cuts skip selection


@dataclass
class MatrixRecord:
    kind: str
    rows: int
    cols: int
    reduced_rows: int
    reduced_cols: int
    shortcut: bool
    selected: int
    qubits: int = 0
    qubit_bound: int = 0
    valid: bool = True
    failure: Optional[str] = None


@dataclass
class SelectionOutcome:
    feasibility: list
    optimality: list
    records: list = field(default_factory=list)
    matrix_ms: float = 0.0
    select_ms: float = 0.0
    sampler_us: float = 0.0


def _select_from(cuts, M: IndicatorMatrix, settings, selector, out: SelectionOutcome):
    t0 = time.perf_counter()
    insp = inspect_matrix(M)
    out.matrix_ms += (time.perf_counter() - t0) * 1e3
    red = insp.reduced
    rec = MatrixRecord(M.kind.value, M.n_rows, M.n_cols, red.n_rows, red.n_cols,
                       insp.shortcut is not None, 0)
    out.records.append(rec)
    if insp.shortcut is not None:
        rec.selected = 1
        return [cuts[insp.shortcut]]
    if red.n_rows == 0 or red.n_cols == 0:
        return []
    t1 = time.perf_counter()
    try:
        ch = selector.choose(red, settings.strategy, settings.cap, settings.criterion)
    except SamplerFailure as exc:
        rec.failure = f"{type(exc).__name__}: {exc}"
        return []
    finally:
        out.select_ms += (time.perf_counter() - t1) * 1e3
    out.sampler_us += ch.sampler_us
    rec.qubits, rec.valid = ch.qubits, ch.valid
    if ch.qubits:
        # bound on the generated sizes, which dominates the reduced-matrix bound
        rec.qubit_bound = qubit_upper_bound(
            settings.criterion, settings.strategy, M.n_rows, M.n_cols, settings.cap,
            getattr(selector, "cardinality_slacks", True))
    rec.selected = len(ch.rows)
    return [cuts[red.row_meta[r].cut_index] for r in ch.rows]


def select_cuts(feas: Sequence[Cut], opt: Sequence[Cut], m: int,
                settings: SelectionSettings, selector) -> SelectionOutcome:
    """Run the selection procedure over one iteration's generated cuts."""
    out = SelectionOutcome([], [])
    feas, opt = list(feas), list(opt)
    if feas:
        t0 = time.perf_counter()
        M = (build_exclusion_matrix(feas) if settings.criterion == 1
             else build_coverage_matrix(feas, m))
        out.matrix_ms += (time.perf_counter() - t0) * 1e3
        out.feasibility = _select_from(feas, M, settings, selector, out)
    if opt:
        if settings.criterion == 2 and settings.opt_select:
            t0 = time.perf_counter()
            M = build_coverage_matrix(opt, m)
            out.matrix_ms += (time.perf_counter() - t0) * 1e3
            out.optimality = _select_from(opt, M, settings, selector, out)
        elif settings.opt_passthrough == "best":
            out.optimality = [min(opt, key=lambda c: c.source_rank)]
        else:
            out.optimality = list(opt)
    return out
