"""Case matrix runner, trace CSVs and summary tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .benders import BendersConfig, BendersTrace, MixedProblem, run_benders
from .errors import BendersError, IterationCapExceeded

TRACE_COLUMNS = ("iter", "lb", "ub", "gap_pct", "n_feas_cuts_generated", "n_opt_cuts_generated",
                 "n_feas_selected", "n_opt_selected", "mp_constraints", "mp_ms", "sp_ms",
                 "matrix_ms", "select_ms", "sampler_us")
TIMING_COLUMNS = ("mp_ms", "sp_ms", "matrix_ms", "select_ms", "sampler_us")


@dataclass(frozen=True)
class CaseSpec:
    label: str
    mode: str  # plain | all | random | select
    criterion: Optional[int] = None
    strategy: Optional[int] = None
    opt_select: Optional[bool] = None
    backend: str = "ilp"
    repeats: int = 1
    seeds: tuple = ()

    def run_seeds(self) -> tuple:
        return tuple(self.seeds) if self.seeds else tuple(range(self.repeats))

    def config(self, base: BendersConfig, seed: int) -> BendersConfig:
        kw = {"mode": self.mode, "seed": seed, "backend": self.backend}
        if self.mode == "select":
            kw.update(criterion=self.criterion, strategy=self.strategy,
                      opt_select=bool(self.opt_select))
        return dataclasses.replace(base, **kw)

    def describe(self) -> str:
        if self.mode != "select":
            return {"plain": "plain BD", "all": "all cuts", "random": "random"}[self.mode]
        opt = "" if self.criterion == 1 else f" optSelect={'T' if self.opt_select else 'F'}"
        return f"strategy {self.strategy} criterion {self.criterion}{opt} [{self.backend}]"


def _selection_cases(first: int, backend: str) -> list:
    out = []
    k = first
    for strategy in (1, 2):
        for criterion, opt in ((1, None), (2, False), (2, True)):
            out.append(CaseSpec(f"C{k}", "select", criterion, strategy, opt, backend))
            k += 1
    return out


def standard_cases(classical_backend: str = "ilp", sampler_backend: str = "sa") -> dict:
    """The BD / All / Random / C1-C12 matrix, keyed by label.

    C1-C6 select cuts with ``classical_backend`` and C7-C12 repeat the same
    settings with ``sampler_backend``.
    """
    cases = [CaseSpec("BD", "plain"), CaseSpec("All", "all"), CaseSpec("Random", "random")]
    cases += _selection_cases(1, classical_backend) + _selection_cases(7, sampler_backend)
    return {c.label: c for c in cases}


def resolve_cases(labels: Sequence[str], repeats: int = 1, seeds: Sequence[int] = (),
                  classical_backend: str = "ilp", sampler_backend: str = "sa") -> list:
    table = standard_cases(classical_backend, sampler_backend)
    lookup = {k.lower(): v for k, v in table.items()}
    out = []
    for lab in labels:
        key = lab.strip().lower()
        if key not in lookup:
            raise KeyError(f"unknown case {lab!r}; known: {', '.join(table)}")
        out.append(dataclasses.replace(lookup[key], repeats=repeats, seeds=tuple(seeds)))
    return out


@dataclass
class RunRecord:
    label: str
    seed: int
    status: str  # converged | iteration_cap | error
    objective: float = math.nan
    iterations: int = 0
    wall_s: float = 0.0
    trace: Optional[BendersTrace] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "converged"


@dataclass
class ResultBundle:
    cases: list
    runs: dict = field(default_factory=dict)  # label -> list of RunRecord
    reference: Optional[float] = None

    def records(self, label: str) -> list:
        return self.runs.get(label, [])

    @property
    def all_ok(self) -> bool:
        return all(r.ok for rs in self.runs.values() for r in rs)


def run_case(problem: MixedProblem, case: CaseSpec, base: BendersConfig, seed: int) -> RunRecord:
    cfg = case.config(base, seed)
    t0 = time.perf_counter()
    try:
        res = run_benders(problem, cfg)
        status = res.status
    except IterationCapExceeded as exc:
        res, status = exc.result, "iteration_cap"
    except BendersError as exc:
        return RunRecord(case.label, seed, "error", wall_s=time.perf_counter() - t0,
                         error=f"{type(exc).__name__}: {exc}")
    return RunRecord(case.label, seed, status, res.objective, res.iterations,
                     time.perf_counter() - t0, res.trace)


def run_case_matrix(problem: MixedProblem, cases: Sequence[CaseSpec],
                    base: Optional[BendersConfig] = None, progress=None) -> ResultBundle:
    """Run every case for each of its seeds; failures are recorded, not raised."""
    base = base or BendersConfig()
    bundle = ResultBundle(list(cases))
    for case in cases:
        recs = []
        for seed in case.run_seeds():
            rec = run_case(problem, case, base, seed)
            recs.append(rec)
            if progress:
                progress(rec)
        bundle.runs[case.label] = sorted(recs, key=lambda r: r.seed)
    return bundle


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def trace_csv(trace: BendersTrace, reproducible: bool = False) -> str:
    """The trace as CSV text; ``reproducible`` writes 0 for wall-clock columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in trace.records:
        row = []
        for col in TRACE_COLUMNS:
            v = getattr(rec, col)
            row.append("0" if reproducible and col in TIMING_COLUMNS else _fmt(v))
        w.writerow(row)
    return buf.getvalue()


def write_trace(trace: BendersTrace, path, reproducible: bool = False) -> Path:
    path = Path(path)
    path.write_text(trace_csv(trace, reproducible))
    return path


def read_trace(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header")
        rows = []
        for r in reader:
            rows.append({k: (int(v) if k in ("iter", "n_feas_cuts_generated",
                                              "n_opt_cuts_generated", "n_feas_selected",
                                              "n_opt_selected", "mp_constraints")
                             else float(v)) for k, v in r.items()})
        return rows


SUMMARY_ROWS = (
    ("Iterations", "iterations"),
    ("Time", "wall_s"),
    ("MP solution", "mp_ms"),
    ("DSP solution", "sp_ms"),
    ("M construction", "matrix_ms"),
    ("Cut selection", "select_ms"),
    ("Sampler access (us)", "sampler_us"),
    ("Objective", "objective"),
)


def _run_value(rec: RunRecord, key: str) -> float:
    if key in ("iterations", "wall_s", "objective"):
        return float(getattr(rec, key))
    total = sum(getattr(r, key) for r in rec.trace.records)
    # times are reported in seconds, sampler access stays in microseconds
    return total if key == "sampler_us" else total / 1e3


def summarize(bundle: ResultBundle) -> tuple:
    """``(text, data)``: a fixed-width table and its JSON-ready mirror.

    Values are arithmetic means over the runs of a case that produced a trace;
    a case with no such run is marked FAILED.
    """
    if not bundle.cases:
        raise ValueError("empty bundle")
    labels = [c.label for c in bundle.cases]
    data = {"cases": {}, "reference_objective": bundle.reference,
            "note": "times in seconds; sampler access in microseconds; "
                    "no minor-embedding rows (no annealing hardware is involved)"}
    for case in bundle.cases:
        recs = [r for r in bundle.records(case.label) if r.trace is not None]
        entry = {"description": case.describe(), "runs": len(bundle.records(case.label)),
                 "converged": sum(r.ok for r in recs), "failed": not recs,
                 "errors": [r.error for r in bundle.records(case.label) if r.error]}
        for name, key in SUMMARY_ROWS:
            entry[name] = statistics.fmean(_run_value(r, key) for r in recs) if recs else None
        data["cases"][case.label] = entry

    width = max(10, *(len(lab) + 2 for lab in labels))
    lines = ["".ljust(22) + "".join(lab.rjust(width) for lab in labels)]
    for name, _ in SUMMARY_ROWS:
        cells = []
        for lab in labels:
            v = data["cases"][lab][name]
            if v is None:
                cells.append("FAILED".rjust(width))
            elif name == "Objective":
                cells.append(f"{v:.6g}".rjust(width))
            else:
                cells.append(f"{v:.2f}".rjust(width))
        lines.append(name.ljust(22) + "".join(cells))
    lines.append("times in seconds (means over runs); minor-embedding rows omitted")
    return "\n".join(lines) + "\n", data


def summary_json(data: dict) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v
    return json.dumps(json.loads(json.dumps(data, default=clean), parse_constant=lambda c: None),
                      indent=1, sort_keys=True)


def objectives_agree(bundle: ResultBundle, epsilon: float = 0.005) -> bool:
    """All converged runs report the same objective within ``epsilon`` relative."""
    objs = [r.objective for rs in bundle.runs.values() for r in rs if r.ok]
    if not objs:
        return False
    lo, hi = min(objs), max(objs)
    return (hi - lo) <= epsilon * max(1.0, abs(hi))


def mean_iterations(bundle: ResultBundle, label: str) -> float:
    recs = bundle.records(label)
    return statistics.fmean(r.iterations for r in recs) if recs else math.nan
