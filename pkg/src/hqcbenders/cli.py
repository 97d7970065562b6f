"""Command-line entry point: ``hqcbenders <verb> ...``.

Exit codes: 0 success, 2 partial failure (a run did not converge or a
case failed), 1 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import (read_trace, resolve_cases, run_case, run_case_matrix, standard_cases,
                    summarize, summary_json, write_trace)
from .benders import BendersConfig
from .errors import BendersError
from .uc import UcInstance, build_uc_milp, find_feasible_instance, make_instance

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


def _add_instance_args(p):
    p.add_argument("--instance", type=Path, help="instance JSON written by 'generate'")
    p.add_argument("--buses", type=int, default=8, help="generate on the fly (default 8)")
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--instance-seed", type=int, default=0)


def _add_run_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.5, help="gap tolerance in percent")
    p.add_argument("--pool-size", type=int, default=10)
    p.add_argument("--pool-nodes", type=int, default=10_000,
                   help="node budget for filling the pool after the optimum is proven")
    p.add_argument("--cap-m", type=int, default=3, help="strategy II cut cap")
    p.add_argument("--backend", default="sa", choices=("sa", "exhaustive", "remote"),
                   help="sampler used by cases C7-C12 (C1-C6 select cuts exactly)")
    p.add_argument("--endpoint", help="remote sampler URL (else $BENDERS_SAMPLER_URL)")
    p.add_argument("--reads", type=int, default=1000)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--reproducible", action="store_true",
                   help="write 0 in wall-clock trace columns")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hqcbenders",
                                 description="Benders decomposition with cut selection "
                                             "for unit commitment")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="generate a power system and instance JSON")
    g.add_argument("--buses", type=int, default=8)
    g.add_argument("--horizon", type=int, default=24)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--search", action="store_true",
                   help="advance the seed until the instance is feasible")
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="run one case")
    _add_instance_args(s)
    _add_run_args(s)
    s.add_argument("--case", default="BD", help="BD, All, Random or C1-C12")
    s.add_argument("--trace", type=Path, help="write the iteration trace CSV here")

    b = sub.add_parser("bench", help="run a case matrix")
    _add_instance_args(b)
    _add_run_args(b)
    b.add_argument("--cases", default=",".join(standard_cases()),
                   help="comma-separated case labels (default: all)")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out-dir", type=Path, required=True)

    t = sub.add_parser("inspect-trace", help="summarise a trace CSV")
    t.add_argument("path", type=Path)
    t.add_argument("--json", action="store_true")

    v = sub.add_parser("serve-sampler", help="serve the annealing sampler over HTTP")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8765)
    return ap


def _load_instance(args) -> UcInstance:
    if args.instance is not None:
        try:
            return UcInstance.from_json(args.instance.read_text())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read instance {args.instance}: {exc}") from exc
    return find_feasible_instance(args.buses, args.horizon, args.instance_seed)


def _base_config(args) -> BendersConfig:
    if args.epsilon < 0 or args.pool_size < 1 or args.cap_m < 1 or args.pool_nodes < 0:
        raise UsageError("epsilon must be >= 0, pool size and cap positive, pool nodes >= 0")
    if args.backend == "remote" and not args.endpoint:
        import os

        from .samplers.remote import ENV_ENDPOINT
        if not os.environ.get(ENV_ENDPOINT):
            raise UsageError(f"--backend remote needs --endpoint or ${ENV_ENDPOINT}")
    return BendersConfig(epsilon=args.epsilon / 100.0, pool_size=args.pool_size,
                         pool_nodes=args.pool_nodes, cap=args.cap_m, sa_reads=args.reads,
                         sa_sweeps=args.sweeps,
                         sampler_endpoint=args.endpoint, max_iterations=args.max_iterations,
                         seed=args.seed)


def _cmd_generate(args) -> int:
    if args.search:
        inst = find_feasible_instance(args.buses, args.horizon, args.seed)
    else:
        inst = make_instance(args.buses, args.horizon, args.seed)
    args.out.write_text(inst.to_json())
    print(f"wrote {args.out}: {inst.system.n_buses} buses, {len(inst.system.generators)} "
          f"generators, {len(inst.system.lines)} lines, horizon {inst.horizon}, "
          f"seed {inst.seed}")
    return EXIT_OK


def _cases(args, labels):
    try:
        return resolve_cases(labels, getattr(args, "repeats", 1), sampler_backend=args.backend)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc


def _cmd_solve(args) -> int:
    base = _base_config(args)
    (case,) = _cases(args, [args.case])
    problem = build_uc_milp(_load_instance(args))
    rec = run_case(problem, case, base, args.seed)
    if rec.status == "error":
        print(f"{case.label}: {rec.error}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"{case.label} ({case.describe()}): {rec.status}, objective {rec.objective:.6f}, "
          f"{rec.iterations} iterations, {rec.wall_s:.2f} s")
    if args.trace:
        write_trace(rec.trace, args.trace, args.reproducible)
    return EXIT_OK if rec.ok else EXIT_PARTIAL


def _cmd_bench(args) -> int:
    base = _base_config(args)
    if args.repeats < 1:
        raise UsageError("--repeats must be positive")
    cases = _cases(args, [c for c in args.cases.split(",") if c.strip()])
    problem = build_uc_milp(_load_instance(args))
    args.out_dir.mkdir(parents=True, exist_ok=True)

    def progress(rec):
        print(f"{rec.label} seed {rec.seed}: {rec.status} {rec.iterations} it "
              f"{rec.wall_s:.2f} s", file=sys.stderr)
    bundle = run_case_matrix(problem, cases, base, progress)
    for label, recs in bundle.runs.items():
        for rec in recs:
            if rec.trace is not None:
                write_trace(rec.trace, args.out_dir / f"{label}_seed{rec.seed}.csv",
                            args.reproducible)
    text, data = summarize(bundle)
    (args.out_dir / "summary.txt").write_text(text)
    (args.out_dir / "summary.json").write_text(summary_json(data))
    print(text, end="")
    return EXIT_OK if bundle.all_ok else EXIT_PARTIAL


def _cmd_inspect(args) -> int:
    try:
        rows = read_trace(args.path)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if not rows:
        raise UsageError(f"{args.path}: empty trace")
    last = rows[-1]
    info = {
        "iterations": len(rows),
        "final_lb": last["lb"], "final_ub": last["ub"], "final_gap_pct": last["gap_pct"],
        "mp_constraints_first": rows[0]["mp_constraints"],
        "mp_constraints_last": last["mp_constraints"],
        "feasibility_cuts_generated": sum(r["n_feas_cuts_generated"] for r in rows),
        "optimality_cuts_generated": sum(r["n_opt_cuts_generated"] for r in rows),
        "feasibility_cuts_selected": sum(r["n_feas_selected"] for r in rows),
        "optimality_cuts_selected": sum(r["n_opt_selected"] for r in rows),
        "mp_s": sum(r["mp_ms"] for r in rows) / 1e3,
        "sp_s": sum(r["sp_ms"] for r in rows) / 1e3,
    }
    if args.json:
        print(json.dumps(info, indent=1))
    else:
        for k, v in info.items():
            print(f"{k:28s} {v:.6g}" if isinstance(v, float) else f"{k:28s} {v}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .samplers.server import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


COMMANDS = {"generate": _cmd_generate, "solve": _cmd_solve, "bench": _cmd_bench,
            "inspect-trace": _cmd_inspect, "serve-sampler": _cmd_serve}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BendersError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
