"""Command-line interface: ``mcbell <subcommand> ...``.

Exit codes: 0 success, 1 an acceptance check missed, 2 usage error,
3 an internal invariant was violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from mcbell import blockfile, chshn
from mcbell.correlations import SignalingError, chsh_optimal_single_copy, tensor_power
from mcbell.efficiency import Policy, deflate
from mcbell.gilbert import GilbertConfig, gilbert_distance
from mcbell.local import BellFunctional, EnumerationCapError, local_bound_exact, local_bound_heuristic
from mcbell.reproduce import TARGETS, reproduce, run_info
from mcbell.separation import (
    LPError,
    SeparationProblem,
    model_for,
    rationalize,
    separate,
    threshold_by_bisection,
)
from mcbell.thresholds import eta_asym, eta_sym, profile

EXIT_OK, EXIT_MISS, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("mcbell")


class UsageError(Exception):
    pass


def _dump(doc: dict, path=None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _n_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _distribution(n: int):
    return tensor_power(chsh_optimal_single_copy(), n)


def _check_n(n: int) -> None:
    if not 1 <= n <= 4:
        raise UsageError(f"--n must lie in 1..4, got {n}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_distribution(args) -> int:
    _check_n(args.n)
    dist = _distribution(args.n)
    doc = dist.to_json()
    if args.eta is not None:
        point = deflate(dist, model_for(args.mode, args.eta, args.policy))
        doc = {"n": args.n, "m": point.m, "o": point.o, "eta": args.eta, "mode": args.mode, "policy": args.policy,
               "entries": point.table.transpose(2, 3, 0, 1).ravel().tolist()}  # fmt: skip
    doc["run"] = run_info(args.seed, args.workers)
    _dump(doc, args.out)
    return EXIT_OK


def cmd_chshn(args) -> int:
    rows = chshn.table1(_n_list(args.table))
    print(f"{'n':>4}  {'eta_sym <=':<18} {'eta_asym <=':<18}")
    for row in rows:
        print(row.format())
    doc = {"rows": [row.__dict__ for row in rows], "run": run_info(args.seed, args.workers)}
    if args.json:
        _dump(doc, args.json)
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "eta_sym", "eta_asym", "eta_sym_empirical", "eta_asym_empirical", "L", "provenance", "flag"])
        for r in rows:
            writer.writerow([r.n, r.eta_sym, r.eta_asym, r.eta_sym_empirical, r.eta_asym_empirical, r.L, r.provenance, r.flag])
        Path(args.csv).write_text(buf.getvalue())
    return EXIT_OK


def _load_functional(args) -> BellFunctional:
    if args.functional:
        return blockfile.load(args.functional)
    if args.chshn:
        return chshn.build(args.chshn)
    raise UsageError("give --functional FILE or --chshn N")


def cmd_local_bound(args) -> int:
    C = _load_functional(args)
    if args.mode == "exact":
        value, s = local_bound_exact(C, workers=args.workers)
    else:
        value, s = local_bound_heuristic(C, restarts=args.restarts, seed=args.seed, workers=args.workers)
    _dump({"L": value, "L_provenance": args.mode, "strategy": {"alice": s.alice, "bob": s.bob},
           "run": run_info(args.seed, args.workers)})  # fmt: skip
    return EXIT_OK


def cmd_lp_separate(args) -> int:
    if args.n != 2 and args.full_enum:
        raise UsageError("--full-enum is only feasible for n <= 2")
    _check_n(args.n)
    dist = _distribution(args.n)
    constraints = "full" if args.full_enum else "rowgen"
    homogeneous = not args.affine
    doc: dict = {"n": args.n, "mode": args.mode, "policy": args.policy, "homogeneous": homogeneous}
    if args.eta is not None:
        point = deflate(dist, model_for(args.mode, args.eta, args.policy))
        res = separate(SeparationProblem(point, constraints, args.representation, homogeneous, workers=args.workers))
        doc.update(eta=args.eta, lp=res.to_json())
    else:
        bis = threshold_by_bisection(
            dist, args.policy, args.mode, width=args.width, constraints=constraints,
            representation=args.representation, homogeneous=homogeneous, workers=args.workers,
        )  # fmt: skip
        res = bis.result
        doc.update(eta=bis.eta, steps=bis.steps, lp=res.to_json())
    if res.objective > 0:
        F = rationalize(res.functional)
        rep = profile(F, dist, args.policy, workers=args.workers).with_thresholds()
        doc["profile"] = rep.to_json()
        if args.functional_out:
            blockfile.save(F, args.functional_out)
    doc["run"] = run_info(args.seed, args.workers)
    _dump(doc, args.out)
    return EXIT_OK


def cmd_gilbert(args) -> int:
    _check_n(args.n)
    dist = _distribution(args.n)
    target = deflate(dist, model_for(args.mode, args.eta, args.policy))
    config = GilbertConfig(
        epsilon=args.epsilon,
        memory=args.memory,
        max_iterations=args.max_iterations,
        symmetrize=args.symmetrize,
        party_exchange=args.party_exchange,
        oracle=args.oracle,
        restarts=args.restarts,
        seed=args.seed,
        workers=args.workers,
    )
    witness, converged = gilbert_distance(target, config, n=args.n)
    F = rationalize(BellFunctional(witness.direction), max_denominator=args.denominator)
    rep = profile(F, dist, args.policy, restarts=args.restarts, seed=args.seed, workers=args.workers)
    rep.with_thresholds()
    doc = {
        "n": args.n,
        "mode": args.mode,
        "eta": args.eta,
        "converged": converged,
        "separated": witness.separated,
        "distance": witness.distance,
        "gap": witness.gap,
        "iterations": witness.iterations,
        "log": witness.log,
        "profile": rep.to_json(),
        "run": run_info(args.seed, args.workers),
    }
    if args.functional_out:
        blockfile.save(F, args.functional_out)
    else:
        sys.stdout.write(blockfile.emit(F))
    _dump(doc, args.out or "gilbert_log.json")
    return EXIT_OK


def cmd_threshold(args) -> int:
    _check_n(args.n)
    C = blockfile.load(args.functional)
    rep = profile(C, _distribution(args.n), args.policy, restarts=args.restarts, seed=args.seed, workers=args.workers)
    try:
        rep.eta_sym = eta_sym(rep)
    except ValueError as exc:
        rep.flags.append(f"eta_sym: {exc}")
    try:
        rep.eta_asym = eta_asym(rep)
    except ValueError as exc:
        rep.flags.append(f"eta_asym: {exc}")
    doc = rep.to_json()
    doc["mode"] = args.mode
    doc["eta"] = rep.eta_sym if args.mode == "sym" else rep.eta_asym
    doc["functional"] = str(args.functional)
    doc["run"] = run_info(args.seed, args.workers)
    _dump(doc, args.out)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    report = reproduce(args.target, args.out_dir, seed=args.seed, workers=args.workers)
    for check in report["checks"]:
        status = "PASS" if check["pass"] else "FAIL"
        print(f"{status} {args.target}: {check['name']} = {check['value']} (expected {check['kind']} {check['expected']}, tol {check['tol']})")
    if not report["ok"]:
        diff = [c for c in report["checks"] if not c["pass"]]
        print(json.dumps({"target": args.target, "misses": diff}, indent=2, default=_jsonable), file=sys.stderr)
        return EXIT_MISS
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=None, help="threads (default: $MCBELL_WORKERS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mcbell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(sp, eta_required=False):
        sp.add_argument("--n", type=int, required=True, help="number of copies")
        sp.add_argument("--mode", choices=("sym", "asym"), default="sym")
        sp.add_argument("--policy", choices=("last", "extra"), default="last")
        sp.add_argument("--eta", type=float, required=eta_required)

    sp = sub.add_parser("distribution", parents=[common], help="n-copy (optionally deflated) behavior as JSON")
    scenario(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_distribution)

    sp = sub.add_parser("chshn", parents=[common], help="CHSH_n threshold table")
    sp.add_argument("--table", default="1..13", help="copy counts, e.g. 1..13 or 1,2,20")
    sp.add_argument("--json")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_chshn)

    sp = sub.add_parser("local-bound", parents=[common], help="local bound of a functional")
    sp.add_argument("--functional")
    sp.add_argument("--chshn", type=int)
    sp.add_argument("--mode", choices=("exact", "heuristic"), default="exact")
    sp.add_argument("--restarts", type=int, default=1000)
    sp.set_defaults(func=cmd_local_bound)

    sp = sub.add_parser("lp-separate", parents=[common], help="LP separation at an efficiency, or bisection")
    scenario(sp)
    sp.add_argument("--full-enum", action="store_true", help="all vertices as constraints instead of row generation")
    sp.add_argument("--representation", choices=("cg", "full"), default="cg")
    sp.add_argument("--affine", action="store_true", help="do not pin the functional to zero on the no-click vertex")
    sp.add_argument("--width", type=float, default=1e-4)
    sp.add_argument("--functional-out")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_lp_separate)

    sp = sub.add_parser("gilbert", parents=[common], help="Gilbert distance and witness functional")
    scenario(sp, eta_required=True)
    sp.add_argument("--epsilon", type=float, default=1e-7)
    sp.add_argument("--memory", type=int, default=50)
    sp.add_argument("--max-iterations", type=int, default=3000)
    sp.add_argument("--restarts", type=int, default=200)
    sp.add_argument("--oracle", choices=("exact", "heuristic"), default="heuristic")
    sp.add_argument("--symmetrize", action="store_true")
    sp.add_argument("--party-exchange", action="store_true")
    sp.add_argument("--denominator", type=int, default=1000, help="integer scale of the rounded functional")
    sp.add_argument("--functional-out")
    sp.add_argument("--out", help="convergence log JSON (default gilbert_log.json)")
    sp.set_defaults(func=cmd_gilbert)

    sp = sub.add_parser("threshold", parents=[common], help="profile and thresholds of a functional file")
    sp.add_argument("--functional", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--mode", choices=("sym", "asym"), default="sym")
    sp.add_argument("--policy", choices=("last", "extra"), default="last")
    sp.add_argument("--restarts", type=int, default=1000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("reproduce", parents=[common], help="rerun a pinned pipeline against its reference values")
    sp.add_argument("target", choices=TARGETS)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if getattr(args, "policy", None):
        args.policy = Policy.parse(args.policy)
    try:
        return args.func(args)
    except (UsageError, blockfile.BlockFileError, EnumerationCapError, FileNotFoundError) as exc:
        print(f"mcbell {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssertionError, SignalingError, LPError) as exc:
        print(f"mcbell {args.command}: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"mcbell {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
