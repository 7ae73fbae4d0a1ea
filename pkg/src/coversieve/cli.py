"""Command-line entry point. Every subcommand reads JSON and writes a JSON report.

Exit codes: 0 success, 1 domain failure (not covering, not certified, ...),
2 usage or input error, 3 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import __version__
from .directed import working_precision
from .errors import CoverSieveError, ResourceError, ValidationError

ENV_PREFIX = "COVERSIEVE_"
COMMANDS = ("verify", "density", "lab", "lll", "primes", "certify", "search")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name, default)


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--precision", type=_positive_int, default=int(_env("PRECISION", 128)),
                        help="working precision in bits (default 128)")
    common.add_argument("--budget-nodes", type=_positive_int,
                        default=int(_env("BUDGET_NODES", 1_000_000)),
                        help="node budget for the density recursion")
    common.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    common.add_argument("--quiet", action="store_true",
                        default=_env("QUIET", "0") not in ("0", "", "false"))
    common.add_argument("-o", "--output", help="write the report here instead of stdout")

    parser = _Parser(prog="coversieve", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"coversieve {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "verify": "decide whether a congruence system covers the integers",
        "density": "exact density of the uncovered set",
        "lab": "run the staged sieve exactly on a small system",
        "lll": "check the local lemma criterion and bounds for an event system",
        "primes": "certified prime statistics over (e^n, e^(n+1)]",
        "certify": "certify a parameter schedule (default: the standard one)",
        "search": "search a box of schedules for the smallest certifiable M",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        need_input = name not in ("primes", "certify", "search")
        p.add_argument("input", nargs=None if need_input else "?",
                       help="JSON input file ('-' for stdin)")
        if name == "primes":
            p.add_argument("--n", type=int, action="append", help="interval index (repeatable)")
            p.add_argument("--k", type=int, default=3)
            p.add_argument("--lambda-exp", default="2")
            p.add_argument("--method", choices=("auto", "numeric", "analytic"), default="auto")
        if name == "lab":
            p.add_argument("--no-checks", action="store_true", help="skip the per-stage lemma checks")
        if name == "search":
            p.add_argument("--max-evals", type=_positive_int)
    return parser


def _read_json(path: str | None):
    if path is None:
        return None
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {path}: {exc}")


# ---------------------------------------------------------------------------
# subcommands; each returns (exit_code, result_dict)
# ---------------------------------------------------------------------------

def _cmd_verify(data, args):
    from .congruence import CongruenceSystem, is_covering, lcm_modulus, uncovered_density
    system = CongruenceSystem.from_json(data)
    dens = uncovered_density(system, node_budget=args.budget_nodes)
    return (EXIT_OK if dens == 0 else EXIT_DOMAIN), {
        "covering": dens == 0, "lcm": str(lcm_modulus(system)), "density": str(dens)}


def _cmd_density(data, args):
    from .congruence import CongruenceSystem, lcm_modulus, uncovered_density
    system = CongruenceSystem.from_json(data)
    dens = uncovered_density(system, node_budget=args.budget_nodes)
    return EXIT_OK, {"density": str(dens), "lcm": str(lcm_modulus(system))}


def _cmd_lab(data, args):
    from .congruence import CongruenceSystem
    from .lab import run_lab
    if not isinstance(data, dict) or "system" not in data or "thresholds" not in data:
        raise ValidationError("lab input needs 'system' and 'thresholds'")
    system = CongruenceSystem.from_json(data["system"])
    ks = tuple(int(k) for k in data.get("k", [1, 2, 3]))
    run = run_lab(system, [int(t) for t in data["thresholds"]],
                  Fraction(str(data.get("lambda_exp", 2))), ks, check=not args.no_checks)
    out = run.to_json()
    out["violations"] = [list(v) for v in run.violations]
    bad = run.halted is not None or run.violations
    return (EXIT_DOMAIN if bad else EXIT_OK), out


def _cmd_lll(data, args):
    from .lll import (EventSystem, all_relative_bounds, brute_force_uncovered,
                      check_lovasz_criterion, lower_bound, BRUTE_FORCE_LIMIT)
    sys_ = EventSystem.from_json(data)
    report = check_lovasz_criterion(sys_)
    exact = str(brute_force_uncovered(sys_)) if sys_.space_size <= BRUTE_FORCE_LIMIT else None
    out = {"criterion_ok": report.ok, "worst_slack": report.worst_slack.to_json(), "exact": exact,
           "weak_bound": None, "relative_bounds": {}}
    if report.ok:
        out["weak_bound"] = str(lower_bound(sys_))
        subsets = data.get("U")
        if subsets is None and len(sys_) <= 12:
            rel = all_relative_bounds(sys_)
            out["relative_bounds"] = {
                ",".join(str(u) for u in range(len(sys_)) if s >> u & 1): str(v)
                for s, v in sorted(rel.items())}
        else:
            for U in subsets or []:
                out["relative_bounds"][",".join(str(u) for u in sorted(U))] = str(lower_bound(sys_, U))
    return (EXIT_OK if report.ok else EXIT_DOMAIN), out


def _cmd_primes(data, args):
    from .certifier import table_for
    from .primes import exp_floor, interval_prime_stats, lemma_a1_analytic
    data = data or {}
    ns = args.n or data.get("n") or [11, 12, 13, 14]
    if isinstance(ns, int):
        ns = [ns]
    k = int(data.get("k", args.k))
    lam = Fraction(str(data.get("lambda_exp", args.lambda_exp)))
    method = data.get("method", args.method)
    results = []
    for n in ns:
        n = int(n)
        m = method
        if m == "auto":
            m = "numeric" if n + 1 <= 14 else "analytic"
        if m == "numeric":
            stats = interval_prime_stats(n, k, lam, table_for(exp_floor(n + 1)))
            results.append(stats.to_json(n))
        else:
            results.append(lemma_a1_analytic(n, lam, k).to_json(n))
    return EXIT_OK, {"stats": results}


def _cmd_certify(data, args):
    from .certifier import Schedule, certify
    schedule = Schedule.from_json(data) if data is not None else Schedule()
    cert = certify(schedule)
    return (EXIT_OK if cert.certified else EXIT_DOMAIN), cert.to_json()


def _cmd_search(data, args):
    from dataclasses import replace
    from .certifier import SearchConfig, optimize_schedule
    config = SearchConfig.from_json(data or {})
    config = replace(config, seed=args.seed if data is None or "seed" not in data else config.seed)
    if args.max_evals:
        config = replace(config, max_evals=args.max_evals)
    result = optimize_schedule(config)
    return (EXIT_OK if result.certified else EXIT_DOMAIN), result.to_json()


HANDLERS = {
    "verify": _cmd_verify, "density": _cmd_density, "lab": _cmd_lab, "lll": _cmd_lll,
    "primes": _cmd_primes, "certify": _cmd_certify, "search": _cmd_search,
}


def _emit(report: dict, args, stream=None) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    out = getattr(args, "output", None) if args is not None else None
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    if not out and not (args is not None and getattr(args, "quiet", False)):
        (stream or sys.stdout).write(text)


def run(argv=None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        data = _read_json(args.input)
        with working_precision(args.precision):
            code, result = HANDLERS[args.command](data, args)
        report = {"tool": "coversieve", "version": __version__, "command": args.command,
                  "precision_bits": args.precision, "seed": args.seed, "input": data,
                  "result": result}
        _emit(report, args)
        return code
    except UsageError as exc:
        code, kind = EXIT_USAGE, "usage"
        msg = str(exc)
    except ValidationError as exc:
        code, kind = EXIT_USAGE, "validation"
        msg = str(exc)
    except ResourceError as exc:
        code, kind = EXIT_RESOURCE, "resource"
        msg = str(exc)
    except CoverSieveError as exc:
        code, kind = EXIT_DOMAIN, "domain"
        msg = str(exc)
    report = {"tool": "coversieve", "version": __version__,
              "error": {"type": kind, "message": msg}}
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args is not None and getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stderr.write(text)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
