"""Command-line entry point: gen | solve | oracle | compare | validate.

Exit codes: 0 success, 1 usage or configuration error, 2 partial run
(iteration cap reached), 3 capacity exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import clock
from .degree import compute_params
from .instance import (
    ParseError,
    complement,
    densify,
    embed_csp,
    gen_random_dense,
    parse,
    parse_dimacs,
    sat_clause,
    serialize,
    validate,
)
from .operators import CapacityError, max_dim
from .pipeline import (
    ORACLE_MAX_DIM,
    SCHEMA_VERSION,
    PipelineConfig,
    approximate,
    compare,
    oracle_extreme_eig,
    oracle_product,
    vectors_of,
)

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_CAPACITY = 0, 1, 2, 3
DRY_RUN_N = 16


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _read(path: str) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {path}")
    return p.read_bytes()


def _write(path: str | None, text: str | bytes) -> None:
    data = text.encode() if isinstance(text, str) else text
    if path in (None, "-"):
        sys.stdout.write(data.decode())
    else:
        Path(path).write_bytes(data)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hamlet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write an instance file")
    gsub = g.add_subparsers(dest="generator", required=True, parser_class=_Parser)
    r = gsub.add_parser("random", help="random dense instance")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--d", type=int, default=2)
    r.add_argument("--k", type=int, default=2)
    r.add_argument("--seed", type=_seed, default=0)
    c = gsub.add_parser("csp", help="embed a DIMACS CNF formula")
    c.add_argument("--dimacs", required=True)
    c.add_argument("--form", choices=["min", "max"], default="min", help="penalty form or its complement")
    ds = gsub.add_parser("densify", help="pad an instance with fresh |0..0> sites")
    ds.add_argument("--input", required=True)
    ds.add_argument("--extra-sites", type=int, required=True)
    ck = gsub.add_parser("clock", help="clock Hamiltonian of a circuit file")
    ck.add_argument("--circuit", required=True)
    for q in (r, c, ds, ck):
        q.add_argument("-o", "--output", default="-")

    s = sub.add_parser("solve", help="run the approximation pipeline")
    s.add_argument("instance", nargs="?")
    _solve_flags(s)
    s.add_argument("--dry-run", action="store_true", help="print derived parameters only")
    s.add_argument("--csv", help="also write per-iteration records as CSV")
    s.add_argument("-o", "--output", default="-")

    o = sub.add_parser("oracle", help="brute-force ground truth")
    o.add_argument("instance")
    o.add_argument("--which", choices=["max", "min", "product-max", "product-min"], default="max")
    o.add_argument("--restarts", type=int, default=20)
    o.add_argument("--seed", type=_seed, default=0)
    o.add_argument("--max-dim", type=int, default=ORACLE_MAX_DIM)
    o.add_argument("-o", "--output", default="-")

    cm = sub.add_parser("compare", help="pipeline against oracles over several seeds")
    cm.add_argument("instance")
    _solve_flags(cm)
    cm.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds starting at --seed")
    cm.add_argument("-o", "--output", default="-")

    v = sub.add_parser("validate", help="check an instance file")
    v.add_argument("instance")
    return p


def _solve_flags(s):
    s.add_argument("--mode", choices=["practical", "theory"], default="practical")
    s.add_argument("--sample-size", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--eps-prime", type=float)
    s.add_argument("--eps-sdp", type=float)
    s.add_argument("--eps", type=float)
    s.add_argument("--n", type=int, help=f"site count for --dry-run without an instance (default {DRY_RUN_N})")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--direction", choices=["max", "min"], default="max")
    s.add_argument("--net", choices=["cover", "full"])
    s.add_argument("--max-iterations", type=int, default=4096)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--jobs", type=int, default=1)


def _config(args) -> PipelineConfig:
    common = dict(direction=args.direction, seed=args.seed, max_iterations=args.max_iterations, jobs=args.jobs)
    if args.mode == "theory":
        if any(v is not None for v in (args.sample_size, args.delta, args.eps_prime)):
            raise UsageError("theory mode derives --sample-size, --delta and --eps-prime; pass --eps only")
        if args.eps is None:
            raise UsageError("theory mode needs --eps")
        cfg = PipelineConfig.theory(args.eps, **common)
        if args.net:
            cfg.net = args.net
    else:
        if args.eps is not None:
            raise UsageError("practical mode takes --sample-size/--delta/--eps-prime, not --eps")
        cfg = PipelineConfig(**common)
        for name in ("sample_size", "delta", "eps_prime"):
            if getattr(args, name) is not None:
                setattr(cfg, name, getattr(args, name))
        if args.net:
            cfg.net = args.net
    if args.eps_sdp is not None:
        cfg.eps_sdp = args.eps_sdp
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _load_instance(path: str):
    try:
        return parse(_read(path))
    except ParseError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_gen(args) -> int:
    if args.generator == "random":
        inst = gen_random_dense(args.n, args.d, args.k, args.seed)
    elif args.generator == "csp":
        try:
            nvars, clauses = parse_dimacs(_read(args.dimacs).decode())
        except ParseError as exc:
            raise UsageError(f"{args.dimacs}: {exc}") from None
        inst = embed_csp([sat_clause(c) for c in clauses], n=nvars)
        if args.form == "max":
            inst = complement(inst)
    elif args.generator == "densify":
        inst = densify(_load_instance(args.input), args.extra_sites)
    else:
        try:
            circ = clock.circuit_from_json(_read(args.circuit))
        except ParseError as exc:
            raise UsageError(f"{args.circuit}: {exc}") from None
        inst, scale = clock.clock_instance(circ)
        if scale != 1.0:
            print(f"note: clock terms scaled by {scale!r}", file=sys.stderr)
    _write(args.output, serialize(inst))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args)
    if args.dry_run:
        if cfg.mode != "theory":
            raise UsageError("--dry-run reports theory-mode parameters; use --mode theory")
        if args.instance:
            inst = _load_instance(args.instance)
            n, d, k = inst.n, inst.d, inst.k
        else:
            if args.n is None:
                print(f"note: no instance or --n given; using n={DRY_RUN_N}", file=sys.stderr)
            n, d, k = args.n or DRY_RUN_N, args.d, args.k
        try:
            tp = compute_params(cfg.eps, n, d, k)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        _write(args.output, _dump({"schema_version": SCHEMA_VERSION, "n": n, "d": d, "k": k, **tp.as_dict()}))
        return EXIT_OK
    if not args.instance:
        raise UsageError("solve needs an instance file")
    inst = _load_instance(args.instance)
    try:
        report = approximate(inst, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(args.output, report.to_json())
    if args.csv:
        _write(args.csv, report.to_csv())
    return EXIT_PARTIAL if report.partial else EXIT_OK


def cmd_oracle(args) -> int:
    inst = _load_instance(args.instance)
    if args.which in ("max", "min"):
        value, _ = oracle_extreme_eig(inst, args.which, max_dim=args.max_dim)
        out = {"schema_version": SCHEMA_VERSION, "which": args.which, "value": value}
    else:
        direction = args.which.split("-")[1]
        assign, value = oracle_product(inst, direction, restarts=args.restarts, seed=args.seed)
        out = {"schema_version": SCHEMA_VERSION, "which": args.which, "value": value, "vectors": vectors_of(assign)}
    _write(args.output, _dump(out))
    return EXIT_OK


def cmd_compare(args) -> int:
    inst = _load_instance(args.instance)
    cfg = _config(args)
    rep = compare(inst, cfg, seeds=range(args.seed, args.seed + args.seeds))
    _write(args.output, _dump(rep))
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = _load_instance(args.instance)
    issues = validate(inst)
    out = {"schema_version": SCHEMA_VERSION, "valid": not issues, "issues": issues, "n": inst.n, "d": inst.d, "k": inst.k}
    _write("-", _dump(out))
    return EXIT_OK if not issues else EXIT_USAGE


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "oracle": cmd_oracle, "compare": cmd_compare, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hamlet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"hamlet: capacity exceeded: {exc} (embedding cap {max_dim()}, set HAMLET_MAX_DIM)", file=sys.stderr)
        return EXIT_CAPACITY


if __name__ == "__main__":
    sys.exit(main())
