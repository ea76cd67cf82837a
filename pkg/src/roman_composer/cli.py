"""Command-line front end for the composition pipeline.

Exit codes: 0 success, 1 negative answer (unrealizable, invalid instance,
failed run), 2 usage or input errors.  Every command accepts ``--json``
for machine-readable stdout.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import time
from dataclasses import dataclass

from .errors import (
    ComposerError,
    InstanceError,
    ParseError,
    UnrealizableError,
    UnrealizableFromHereError,
)
from .game import encode_game, export_game, region_to_generator, solve_game
from .model import load_instance, parse_instance, serialize_instance, validate
from .product import build_product
from .simulation import SimPair, compute_largest_simulation, relation_to_json
from .synthesis import (
    DEFAULT_POLICY,
    OrchestrationSession,
    build_generator,
    generator_to_dot,
    generator_to_json,
    make_policy,
)
from .distrib import NetworkHarness, dist_handle_failure, dist_round


@dataclass
class CommandOutcome:
    code: int
    stdout: str
    stderr: str


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="roman-composer", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("file", metavar="FILE", help="instance file (JSON)")
        p.add_argument("--json", action="store_true", dest="as_json",
                       help="emit machine-readable JSON on stdout")
        return p

    add("validate", "check instance file invariants")
    add("check", "decide realizability of the target")

    p = add("compose", "compute the orchestrator generator")
    p.add_argument("-o", "--output", metavar="OUT", help="write generator JSON here")
    p.add_argument("--dot", metavar="DOTFILE",
                   help="also write a policy-resolved orchestrator in DOT form")

    p = add("export-game", "emit the safety-game encoding")
    p.add_argument("--format", choices=("neutral", "smv"), default="neutral")
    p.add_argument("-o", "--output", metavar="OUT", help="write the export here")

    p = add("simulate", "interactive stepper (reads operations from stdin)")
    p.add_argument("--policy", default="lowest-index",
                   help="lowest-index | round-robin | avoid:K[,K...]")

    p = add("dist-sim", "simulated distributed run over local orchestrators")
    p.add_argument("--requests", required=True, metavar="SEQFILE",
                   help="file with one operation per line")
    p.add_argument("--fail", action="append", default=[], metavar="ROUND:PEER",
                   help="fail PEER at the start of ROUND (repeatable)")

    p = add("bench", "wall-time report for the pipeline")
    p.add_argument("--repeat", type=int, default=3, metavar="N")
    return parser


def _load(path):
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def _pair_obj(pair: SimPair):
    obj = {"target": pair.t_state, "services": list(pair.config.service_states)}
    if pair.config.db_state is not None:
        obj["db"] = pair.config.db_state
    return obj


def _cmd_validate(args, out, err):
    try:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        err.write(f"cannot read {args.file}: {e}\n")
        return 2
    try:
        parse_instance(text)
        diagnostics = []
    except InstanceError as e:
        diagnostics = e.diagnostics
    except ParseError as e:
        if args.as_json:
            out.write(json.dumps({"valid": False, "error": str(e), "code": e.code}) + "\n")
        else:
            err.write(f"{e.code}: {e}\n")
        return 2
    if args.as_json:
        out.write(json.dumps({
            "valid": not diagnostics,
            "diagnostics": [
                {"code": d.code, "where": d.where, "message": d.message}
                for d in diagnostics
            ],
        }, indent=2) + "\n")
    else:
        if diagnostics:
            for d in diagnostics:
                out.write(f"{d}\n")
        else:
            out.write("OK\n")
    return 0 if not diagnostics else 1


def _pipeline(path):
    instance = _load(path)
    product = build_product(instance)
    relation = compute_largest_simulation(instance, product)
    return instance, product, relation


def _cmd_check(args, out, err):
    instance, product, relation = _pipeline(args.file)
    realizable = SimPair(instance.target.initial, product.initial) in relation
    if args.as_json:
        out.write(json.dumps({"realizable": realizable}) + "\n")
    else:
        out.write("REALIZABLE\n" if realizable else "UNREALIZABLE\n")
    return 0 if realizable else 1


def _cmd_compose(args, out, err):
    instance, product, relation = _pipeline(args.file)
    try:
        generator = build_generator(instance, product, relation)
    except UnrealizableError:
        if args.as_json:
            out.write(json.dumps({"realizable": False}) + "\n")
        else:
            out.write("UNREALIZABLE\n")
        return 1
    payload = generator_to_json(generator)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
        if args.as_json:
            out.write(json.dumps({"realizable": True, "output": args.output}) + "\n")
        else:
            out.write(f"REALIZABLE; generator written to {args.output}\n")
    else:
        out.write(payload)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(generator_to_dot(generator))
    return 0


def _cmd_export_game(args, out, err):
    instance, product, _relation = _pipeline(args.file)
    game = encode_game(instance, product)
    payload = export_game(game, args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
        out.write(f"game written to {args.output}\n")
    else:
        out.write(payload)
    return 0


def _cmd_simulate(args, out, err, stdin_text):
    try:
        policy = make_policy(args.policy)
    except ValueError as e:
        raise _UsageError(str(e))
    instance = _load(args.file)
    try:
        session = OrchestrationSession(instance, policy)
    except UnrealizableError:
        out.write("UNREALIZABLE\n")
        return 1
    steps = []
    code = 0
    lines = (stdin_text or "").splitlines()
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line == "quit":
            break
        tokens = line.split()
        if tokens[0] == "fail":
            try:
                failed = {int(x) for x in tokens[1:]}
            except ValueError:
                err.write(f"usage: fail K [K ...]\n")
                code = 2
                break
            try:
                session.fail(failed)
                steps.append({"fail": sorted(failed), "pair": _pair_obj(session.pair)})
                if not args.as_json:
                    out.write(f"fail {sorted(failed)} -> switched; pair={session.pair}\n")
            except UnrealizableFromHereError as e:
                steps.append({"fail": sorted(failed), "error": e.code})
                if not args.as_json:
                    out.write(f"fail {sorted(failed)} -> {e.code}\n")
                code = 1
                break
            continue
        op = tokens[0]
        observed = None
        if len(tokens) == 3:
            observed = (tokens[1], None if tokens[2] == "-" else tokens[2])
        elif len(tokens) != 1:
            err.write("usage: OP [SVC_STATE DB_STATE|-]\n")
            code = 2
            break
        try:
            report = session.request(op, observed)
        except ComposerError as e:
            steps.append({"op": op, "error": e.code})
            if not args.as_json:
                out.write(f"{op} -> error {e.code}\n")
            code = 1
            break
        steps.append({"op": op, "executor": report.executor,
                      "pair": _pair_obj(report.pair)})
        if not args.as_json:
            out.write(f"{op} -> {report.executor}  {report.pair}\n")
    if args.as_json:
        out.write(json.dumps({"steps": steps}, indent=2) + "\n")
    return code


def _parse_fail_plan(specs):
    plan = {}
    for spec in specs:
        try:
            round_s, peer_s = spec.split(":", 1)
            plan.setdefault(int(round_s), set()).add(int(peer_s))
        except ValueError:
            raise _UsageError(f"bad --fail value {spec!r}, expected ROUND:PEER")
    return plan


def _cmd_dist_sim(args, out, err):
    instance = _load(args.file)
    plan = _parse_fail_plan(args.fail)
    try:
        with open(args.requests, encoding="utf-8") as fh:
            requests = [ln.strip() for ln in fh if ln.strip()]
    except OSError as e:
        err.write(f"cannot read {args.requests}: {e}\n")
        return 2
    product = build_product(instance)
    relation = compute_largest_simulation(instance, product)
    try:
        generator = build_generator(instance, product, relation)
    except UnrealizableError:
        out.write("UNREALIZABLE\n")
        return 1
    harness = NetworkHarness(instance, generator)
    rounds = []
    code = 0
    for op in requests:
        if harness.round in plan:
            try:
                dist_handle_failure(harness, plan.pop(harness.round))
            except UnrealizableFromHereError as e:
                code = 1
                rounds.append({"error": e.code})
                break
        try:
            record = dist_round(harness, op)
        except ComposerError as e:
            code = 1
            rounds.append({"op": op, "error": e.code})
            break
        rounds.append({
            "round": record.round, "op": record.op,
            "executor": record.executor, "pair": _pair_obj(record.pair),
        })
    if args.as_json:
        out.write(json.dumps({"rounds": rounds, "log": harness.log}, indent=2) + "\n")
    else:
        for line in harness.log:
            out.write(line + "\n")
        if code:
            out.write(f"stopped: {rounds[-1].get('error', 'error')}\n")
    return code


def _cmd_bench(args, out, err):
    if args.repeat < 1:
        raise _UsageError("--repeat must be >= 1")
    with open(args.file, encoding="utf-8") as fh:
        text = fh.read()
    samples = []
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        instance = parse_instance(text)
        product = build_product(instance)
        t1 = time.perf_counter()
        relation = compute_largest_simulation(instance, product)
        t2 = time.perf_counter()
        samples.append((t1 - t0, t2 - t1))
    build_times = [s[0] for s in samples]
    fix_times = [s[1] for s in samples]
    stats = relation.stats
    report = {
        "repeat": args.repeat,
        "configs": len(product.configs),
        "moves": len(product.moves),
        "pairs": stats.pair_universe,
        "rechecks": stats.rechecks,
        "build_s": {"min": min(build_times), "mean": sum(build_times) / len(build_times)},
        "fixpoint_s": {"min": min(fix_times), "mean": sum(fix_times) / len(fix_times)},
    }
    if args.as_json:
        out.write(json.dumps(report, indent=2) + "\n")
    else:
        out.write(
            "repeat=%d configs=%d moves=%d pairs=%d rechecks=%d "
            "build_min=%.4fs fixpoint_min=%.4fs\n"
            % (args.repeat, report["configs"], report["moves"], report["pairs"],
               report["rechecks"], report["build_s"]["min"], report["fixpoint_s"]["min"])
        )
    return 0


def run_cli(argv, stdin_text: str | None = None) -> CommandOutcome:
    """Run one command and capture its outcome (no process exit)."""
    out, err = io.StringIO(), io.StringIO()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError(parser.format_usage())
        if args.command == "validate":
            code = _cmd_validate(args, out, err)
        elif args.command == "check":
            code = _cmd_check(args, out, err)
        elif args.command == "compose":
            code = _cmd_compose(args, out, err)
        elif args.command == "export-game":
            code = _cmd_export_game(args, out, err)
        elif args.command == "simulate":
            code = _cmd_simulate(args, out, err, stdin_text)
        elif args.command == "dist-sim":
            code = _cmd_dist_sim(args, out, err)
        elif args.command == "bench":
            code = _cmd_bench(args, out, err)
        else:  # pragma: no cover - argparse rejects unknown commands
            raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as e:
        err.write(str(e).rstrip() + "\n")
        code = 2
    except OSError as e:
        err.write(f"{e}\n")
        code = 2
    except (ParseError, InstanceError) as e:
        err.write(f"{getattr(e, 'code', 'E_INPUT')}: {e}\n")
        code = 2
    return CommandOutcome(code=code, stdout=out.getvalue(), stderr=err.getvalue())


def main() -> None:
    stdin_text = None
    if len(sys.argv) > 1 and sys.argv[1] == "simulate":
        stdin_text = sys.stdin.read()
    outcome = run_cli(sys.argv[1:], stdin_text)
    sys.stdout.write(outcome.stdout)
    sys.stderr.write(outcome.stderr)
    sys.exit(outcome.code)
