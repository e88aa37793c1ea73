"""Command-line interface.

Subcommands: gen (config -> instance JSON), solve (instance -> solution
JSON + cost), sweep (sweep spec -> results CSV), verify (instance +
solution -> feasibility report).  Exit codes: 0 success, 1 infeasible or
invalid input, 2 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Optional

from . import bench, colgen, greedy, lda, model, oracle, simplex

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2


def _add_gen_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--contents", type=int, default=20, help="catalog size")
    p.add_argument("--slots", type=int, default=6, help="horizon length")
    p.add_argument("--rec-limit", type=int, default=2)
    p.add_argument("--zipf-gamma", type=float, default=0.56)
    p.add_argument("--size-range", type=int, nargs=2, default=(1, 10),
                   metavar=("LO", "HI"))
    p.add_argument("--cache-fraction", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.3,
                   help="backhaul capacity as a fraction of total content size")
    p.add_argument("--prob-range", type=float, nargs=2, default=(0.6, 1.0),
                   metavar=("LO", "HI"))
    p.add_argument("--max-aoi", type=int, default=2)
    p.add_argument("--relation-density", type=float, default=0.3)
    p.add_argument("--requests-per-slot", type=int, default=100)
    p.add_argument("--cost-server", type=float, default=2.0)
    p.add_argument("--cost-cache", type=float, default=1.0)
    p.add_argument("--size-similar-relations", action="store_true",
                   help="only relate contents of similar size")
    p.add_argument("--seed", type=int, default=0)


def _gen_config(args) -> bench.GenConfig:
    return bench.GenConfig(
        num_contents=args.contents,
        num_slots=args.slots,
        rec_limit=args.rec_limit,
        zipf_gamma=args.zipf_gamma,
        size_range=tuple(args.size_range),
        cache_fraction=args.cache_fraction,
        rho=args.rho,
        prob_range=tuple(args.prob_range),
        max_aoi=args.max_aoi,
        relation_density=args.relation_density,
        total_requests_per_slot=args.requests_per_slot,
        cost_server=args.cost_server,
        cost_cache=args.cost_cache,
        size_similar_relations=args.size_similar_relations,
        seed=args.seed,
    )


def cmd_gen(args) -> int:
    try:
        inst = bench.generate_instance(_gen_config(args))
    except ValueError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    bench.write_instance(inst, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _lda_params(args) -> lda.LdaParams:
    return lda.LdaParams(
        max_iters=args.lda_iters,
        eta=args.eta,
        quantization_m=args.quantization_m,
        repair_every=args.repair_every,
        exact_repair=args.exact_repair,
    )


def cmd_solve(args) -> int:
    try:
        inst = bench.read_instance(args.instance)
    except bench.InstanceIOError as exc:
        print(f"cannot read instance: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.no_recommendation:
        inst = dataclasses.replace(inst, rec_limit=0)

    lbd: Optional[float] = None
    try:
        if args.algo == "greedy":
            sol = greedy.greedy_schedule(inst)
            cost = model.total_cost(inst, sol)
        elif args.algo == "oracle":
            res = oracle.solve_exact(inst)
            sol, cost = res.solution, res.cost
        else:
            result = lda.run_lda(inst, _lda_params(args))
            if result.incumbent is None:
                print("no feasible incumbent found", file=sys.stderr)
                return EXIT_SOLVER
            sol, cost, lbd = result.incumbent, result.incumbent_cost, result.lbd
            if args.trace:
                _write_trace(result, args.trace)
    except oracle.SearchSpaceTooLarge as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (colgen.Sp2Error, colgen.ColumnGenerationStall,
            simplex.SimplexError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    violations = model.check_feasibility(inst, sol)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        return EXIT_SOLVER
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(bench.dumps_canonical(bench.solution_to_dict(inst, sol, cost)))
    print(f"algorithm: {args.algo}")
    print(f"cost: {cost!r}")
    if lbd is not None:
        print(f"lower_bound: {lbd!r}")
    return EXIT_OK


def _write_trace(result: lda.LdaResult, path: str) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("k", "lagrangian", "lbd", "upper_bound", "step", "d_norm"))
        for row in result.trace:
            writer.writerow([row.k, repr(row.lag_value), repr(row.lbd),
                             repr(row.upper_bound), repr(row.step),
                             repr(row.d_norm)])


def _load_sweep_doc(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            import tomli
        except ImportError as exc:  # pragma: no cover
            raise bench.InstanceSchemaError(
                "TOML sweep specs need the 'tomli' package; use JSON instead"
            ) from exc
        return tomli.loads(raw.decode("utf-8"))
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise bench.InstanceJsonError(f"not valid JSON: {exc}") from exc


def cmd_sweep(args) -> int:
    try:
        spec = bench.sweep_spec_from_dict(_load_sweep_doc(args.spec))
    except bench.InstanceIOError as exc:
        print(f"cannot read sweep spec: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TypeError, ValueError) as exc:
        print(f"invalid sweep spec: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = bench.run_experiment(spec, jobs=args.jobs)
    bench.write_results_csv(rows, args.out)
    timings = args.out + ".timings.csv"
    bench.write_timings_csv(rows, timings)
    failures = [r for r in rows if r.status.startswith("error")]
    print(f"wrote {args.out} ({len(rows)} rows) and {timings}")
    if failures:
        print(f"{len(failures)} cells failed; see the status column",
              file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        inst = bench.read_instance(args.instance)
        sol = bench.read_solution(inst, args.solution)
    except bench.InstanceIOError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    violations = model.check_feasibility(inst, sol)
    if violations:
        print(f"infeasible: {len(violations)} violations")
        for v in violations:
            print(f"  {v}")
        return EXIT_INVALID
    cost = model.total_cost(inst, sol)
    print("feasible")
    print(f"cost: {cost!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copra",
        description="Cache/refresh/recommendation scheduling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a random instance")
    _add_gen_args(p_gen)
    p_gen.add_argument("--out", required=True, help="instance JSON path")
    p_gen.set_defaults(func=cmd_gen)

    p_solve = sub.add_parser("solve", help="solve an instance")
    p_solve.add_argument("instance", help="instance JSON path")
    p_solve.add_argument("--algo", choices=("greedy", "lda", "oracle"),
                         default="lda")
    p_solve.add_argument("--no-recommendation", action="store_true",
                         help="force the recommendation set size to zero")
    p_solve.add_argument("--lda-iters", type=int, default=200)
    p_solve.add_argument("--eta", type=float, default=1.0)
    p_solve.add_argument("--quantization-m", type=int, default=10_000)
    p_solve.add_argument("--repair-every", type=int, default=5)
    p_solve.add_argument("--exact-repair", action="store_true")
    p_solve.add_argument("--trace", help="write the iteration trace CSV here")
    p_solve.add_argument("--out", help="solution JSON path")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run an experiment sweep")
    p_sweep.add_argument("spec", help="sweep spec (JSON, or TOML with tomli)")
    p_sweep.add_argument("--out", required=True, help="results CSV path")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="check a solution against an instance")
    p_verify.add_argument("instance")
    p_verify.add_argument("solution")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
