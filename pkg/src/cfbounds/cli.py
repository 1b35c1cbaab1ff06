"""Command-line surface.

Subcommands: ``validate``, ``compile``, ``em``, ``bounds``, ``generate``,
``benchmark``. Exit codes: 0 success, 1 validation failure, 2 runtime error,
3 benchmark completed but with timed-out cells.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import METHOD_SPEC, run_benchmark, save_report
from .circuit import compile_circuit, compile_unfolded, dump_circuit, stats
from .em import EmConfig, PARALLELISM_MODES, bound_query, em_multi_run_timed
from .formats import (
    FormatError,
    load_dataset,
    load_model,
    load_query,
    save_bounds,
    save_dataset,
    save_model,
)
from .generate import GenConfig, generate_instances
from .model import Fscm, ModelError, validate

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ERROR = 2
EXIT_TIMEOUTS = 3


def _pscm_of(model):
    return model.pscm if isinstance(model, Fscm) else model


def _em_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--iters", type=int, default=100)
    parser.add_argument("--tol", type=float, default=1e-7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--parallel", choices=PARALLELISM_MODES, default="none")
    parser.add_argument("--engine", choices=("circuit", "ve"), default="circuit")


def _config_from(args) -> EmConfig:
    return EmConfig(runs=args.runs, max_iterations=args.iters, rel_tolerance=args.tol,
                    seed=args.seed, parallelism=args.parallel)


def cmd_validate(args) -> int:
    model = load_model(args.model)
    violations = validate(_pscm_of(model))
    for v in violations:
        print(f"{v.rule}: {v.message}")
    if violations:
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def _require_valid(pscm, path) -> None:
    violations = validate(pscm)
    if violations:
        raise SystemExit(_fail(f"{path}: invalid model: {violations[0].message}", EXIT_INVALID))


def cmd_compile(args) -> int:
    model = load_model(args.model)
    pscm = _pscm_of(model)
    _require_valid(pscm, args.model)
    circuit = compile_unfolded(pscm) if args.no_fold else compile_circuit(pscm)
    s = stats(circuit)
    print(json.dumps({
        "node_count": s.node_count, "arc_count": s.arc_count,
        "param_count": s.param_count, "depth": s.depth,
        "folded": not args.no_fold,
    }))
    if args.dump:
        sys.stdout.write(dump_circuit(circuit))
    return EXIT_OK


def cmd_em(args) -> int:
    model = load_model(args.model)
    pscm = _pscm_of(model)
    _require_valid(pscm, args.model)
    dataset = load_dataset(args.dataset, pscm)
    results, compile_ms, em_ms = em_multi_run_timed(pscm, dataset, _config_from(args), args.engine)
    print(json.dumps({
        "runs": len(results),
        "termination": [r.termination for r in results],
        "iterations": [r.iterations for r in results],
        "final_loglik": [r.final_loglik for r in results],
        "compile_ms": compile_ms,
        "em_ms": em_ms,
    }))
    return EXIT_OK


def cmd_bounds(args) -> int:
    model = load_model(args.model)
    pscm = _pscm_of(model)
    _require_valid(pscm, args.model)
    dataset = load_dataset(args.dataset, pscm)
    query = load_query(args.query, pscm)
    result = bound_query(pscm, dataset, query, _config_from(args), args.engine)
    if args.out:
        save_bounds(result, pscm, args.out)
        print(f"wrote {args.out}")
    else:
        from .formats import bounds_to_json
        print(json.dumps(bounds_to_json(result, pscm)))
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = GenConfig(
        endogenous_range=tuple(args.endo),
        exogenous_range=tuple(args.exo),
        edge_probability=args.edge_prob,
        exo_cardinality_range=tuple(args.card),
        dataset_size_range=tuple(args.data),
        seed=args.seed,
        exogenous_sharing=not args.no_sharing,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (pscm, dataset) in enumerate(generate_instances(cfg, args.models)):
        save_model(pscm, out / f"m{i:03d}.json")
        save_dataset(dataset, pscm, out / f"m{i:03d}.csv")
    print(f"wrote {args.models} model/dataset pairs to {out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    directory = Path(args.dir)
    instances = []
    for model_path in sorted(directory.glob("*.json")):
        data_path = model_path.with_suffix(".csv")
        if not data_path.exists():
            continue
        pscm = _pscm_of(load_model(model_path))
        _require_valid(pscm, model_path)
        instances.append((model_path.stem, pscm, load_dataset(data_path, pscm)))
    if not instances:
        print(f"no model/dataset pairs found in {directory}", file=sys.stderr)
        return EXIT_ERROR
    methods = [m.strip().upper() for m in args.methods.split(",") if m.strip()]
    config = EmConfig(runs=args.runs, max_iterations=args.iters,
                      rel_tolerance=args.tol, seed=args.seed)
    report = run_benchmark(instances, methods, config, timeout_s=args.timeout)
    if args.out:
        save_report(report, args.out)
        print(f"wrote {args.out}")
    else:
        from .bench import report_to_json
        print(json.dumps(report_to_json(report), indent=2))
    if any(e.timeout for e in report.entries):
        return EXIT_TIMEOUTS
    return EXIT_OK


def _fail(message: str, code: int) -> int:
    print(message, file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfbounds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file's invariants")
    p.add_argument("model")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("compile", help="compile a model and print circuit stats")
    p.add_argument("model")
    p.add_argument("--no-fold", action="store_true", help="keep 0/1 entries as constant leaves")
    p.add_argument("--dump", action="store_true", help="print the circuit text dump")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("em", help="run multi-start EM and print a summary")
    p.add_argument("model")
    p.add_argument("dataset")
    _em_flags(p)
    p.set_defaults(fn=cmd_em)

    p = sub.add_parser("bounds", help="bound a counterfactual query")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("query")
    _em_flags(p)
    p.add_argument("--out", help="write the results JSON here")
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("generate", help="write random model/dataset pairs")
    p.add_argument("--models", type=int, default=10)
    p.add_argument("--endo", type=int, nargs=2, default=(3, 7), metavar=("LO", "HI"))
    p.add_argument("--exo", type=int, nargs=2, default=(2, 5), metavar=("LO", "HI"))
    p.add_argument("--card", type=int, nargs=2, default=(3, 32), metavar=("LO", "HI"))
    p.add_argument("--edge-prob", type=float, default=0.4)
    p.add_argument("--data", type=int, nargs=2, default=(1000, 5000), metavar=("LO", "HI"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-sharing", action="store_true",
                   help="give every endogenous variable its own exogenous parent")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("benchmark", help="time the four methods over a directory")
    p.add_argument("dir")
    p.add_argument("--methods", default="bnc,bnp,acc,acp",
                   help=f"comma-separated subset of {sorted(METHOD_SPEC)}")
    p.add_argument("--timeout", type=float, default=900.0, help="per-cell timeout in seconds")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(fn=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        raise
    except FormatError as exc:
        return _fail(str(exc), EXIT_ERROR)
    except (ModelError, ValueError, OSError, RuntimeError) as exc:
        return _fail(f"error: {exc}", EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
