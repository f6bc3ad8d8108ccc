"""Command-line front end.

Every subcommand that uses randomness takes ``--seed``; without it a seed is
drawn, printed to stderr, and recorded in the written artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import secrets
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .economy import (
    Economy,
    EconomyFormatError,
    GeneratorConfig,
    GeneratorError,
    bundle_from_goods,
    generate_economy,
    load_economy,
    save_economy,
)
from .eceei import load_eceei, save_eceei, verify_eceei
from .harness import RunConfig, check_assumption2, margins_csv, monte_carlo, report_json
from .ocam import MechanismOutput, MechanismParams, run_ocam
from .report import combine
from .rounding import shapley_folkman_round
from .verifier import check_daceei, check_ef1, check_pareto

EX_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")


def _add_source(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--economy", type=Path, help="economy JSON file")
    src.add_argument("--gen", help="generator config: JSON object or path to a JSON file")


def _add_eps(p):
    p.add_argument("--eps-b", type=_rational, default=Fraction(1, 4))
    p.add_argument("--eps-n", type=_rational, default=Fraction(1, 2))
    p.add_argument("--eps-f", type=_rational, default=Fraction(1, 2))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pseudomarket", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate an economy")
    g.add_argument("--gen", required=True, help="generator config: JSON object or path to a JSON file")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", type=Path, help="output file (default: stdout)")

    r = sub.add_parser("run", help="run the mechanism once")
    _add_source(r)
    _add_eps(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", type=Path, required=True, help="run directory")

    v = sub.add_parser("verify", help="verify a stored run")
    v.add_argument("--out", type=Path, required=True, help="run directory written by 'run'")
    v.add_argument("--pareto-budget", type=int, default=10**7)

    mc = sub.add_parser("montecarlo", help="seeded Monte Carlo estimate")
    _add_source(mc)
    _add_eps(mc)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--trials", type=int, default=100)
    mc.add_argument("--jobs", type=int, default=1)
    mc.add_argument("--shuffle", action="store_true", help="fresh uniform arrival order per trial")
    mc.add_argument("--diagnostic", action="store_true", help="also hold each randomness source fixed in turn")
    mc.add_argument("--out", type=Path, required=True)

    ca = sub.add_parser("check-assumptions", help="capacity requirement for the high-probability guarantee")
    _add_source(ca)
    _add_eps(ca)
    ca.add_argument("--seed", type=int)

    ro = sub.add_parser("round", help="round a stored expected equilibrium")
    ro.add_argument("--out", type=Path, help="run directory written by 'run'")
    ro.add_argument("--economy", type=Path, help="economy the equilibrium was computed for")
    ro.add_argument("--eceei", type=Path, help="stored equilibrium JSON")
    ro.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------- helpers


def _seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(63)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _gen_config(text: str) -> tuple[GeneratorConfig, int | None]:
    path = Path(text)
    raw = path.read_text() if path.exists() else text
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--gen: {exc}")
    seed = doc.pop("seed", None)
    try:
        return GeneratorConfig.from_dict(doc), seed
    except TypeError as exc:
        raise UsageError(f"--gen: {exc}")


def _economy(args) -> Economy:
    if args.economy is not None:
        return load_economy(args.economy.read_bytes())
    if args.gen is not None:
        cfg, seed = _gen_config(args.gen)
        return generate_economy(cfg, _seed(args) if seed is None else seed)
    raise UsageError("one of --economy or --gen is required")


def _params(args, seed: int = 0) -> MechanismParams:
    try:
        return MechanismParams(args.eps_b, args.eps_n, args.eps_f, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc))


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _dumps(doc) -> bytes:
    return json.dumps(doc, indent=2).encode() + b"\n"


# ---------------------------------------------------------------- subcommands


def cmd_gen(args) -> int:
    cfg, seed = _gen_config(args.gen)
    seed = _seed(args) if seed is None or args.seed is not None else seed
    data = save_economy(generate_economy(cfg, seed))
    if args.out:
        _write(args.out, data)
    else:
        sys.stdout.write(data.decode() + "\n")
    return 0


def cmd_run(args) -> int:
    seed = _seed(args)
    e = _economy(args)
    params = _params(args, seed)
    out = run_ocam(e, params)
    eco = save_economy(e)
    meta = {
        "version": __version__,
        "seed": seed,
        "config_hash": hashlib.sha256(eco + json.dumps(params.to_dict(), sort_keys=True).encode()).hexdigest(),
    }
    header = out.header()
    header.update(meta)
    header["budgets"] = [str(b) for b in out.budgets]
    _write(args.out / "economy.json", eco)
    _write(args.out / "sample_economy.json", save_economy(out.sample_economy))
    _write(args.out / "output.json", _dumps(header))
    _write(args.out / "trace.jsonl", out.trace_jsonl().encode())
    if out.eceei is not None:
        _write(args.out / "eceei.json", save_eceei(out.eceei))
    print(json.dumps({"n": e.n, "sample_size": out.sample_size, "failure_flag": out.failure_flag, **meta}))
    return 0


def load_run(run_dir: Path) -> tuple[Economy, MechanismParams, MechanismOutput]:
    e = load_economy((run_dir / "economy.json").read_bytes())
    header = json.loads((run_dir / "output.json").read_text())
    pd = header["params"]
    params = MechanismParams(
        Fraction(pd["eps_b"]),
        Fraction(pd["eps_n"]),
        Fraction(pd["eps_f"]),
        unseen_type_budget=Fraction(pd["unseen_type_budget"]),
        sample_budget=Fraction(pd["sample_budget"]),
        seed=pd["seed"],
        batch_size=pd["batch_size"],
    )
    lines = (run_dir / "trace.jsonl").read_text().splitlines()[1:]
    records = [json.loads(line) for line in lines]
    out = MechanismOutput(
        allocation=tuple(bundle_from_goods(r["bundle"], e.m) for r in records),
        agents=tuple(r["agent"] for r in records),
        budgets=tuple(Fraction(r["budget"]) for r in records),
        prices=tuple(Fraction(v) for v in header["prices"]),
        trace=tuple(records),
        sample_size=header["sample_size"],
        eceei=None,
        sample_economy=load_economy((run_dir / "sample_economy.json").read_bytes()),
        posterior=None,
        failure_flag=header["failure_flag"],
        params=params,
    )
    return e, params, out


def cmd_verify(args) -> int:
    e, params, out = load_run(args.out)
    online = range(out.sample_size + 1, e.n + 1)
    parts = [check_daceei(out, e, params)]
    ef1 = check_ef1(out.allocation, e, online)
    if not params.ef1_guaranteed(e.m):
        ef1.notes["guarantee"] = "eps_b >= 1/m: EF1 is not guaranteed for these parameters"
    parts.append(ef1)
    parts.append(check_pareto(out.allocation, e, agents=online, budget=args.pareto_budget))
    eceei_path = args.out / "eceei.json"
    if eceei_path.exists():
        parts.append(verify_eceei(out.sample_economy, load_eceei(eceei_path.read_bytes())))
    report = combine("verify", parts)
    if out.failure_flag:
        report.notes["failure_flag"] = out.failure_flag
    sys.stdout.write(json.dumps(report.to_dict(), indent=2) + "\n")
    return report.exit_code


def cmd_montecarlo(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    seed = _seed(args)
    e = _economy(args)
    cfg = RunConfig(e, _params(args), args.trials, seed, args.shuffle, args.jobs, args.diagnostic)

    def sink(partial):
        _write(args.out / "mc_report.partial.json", report_json(partial))

    report = monte_carlo(cfg, partial_sink=sink)
    _write(args.out / "mc_report.json", report_json(report))
    _write(args.out / "margins.csv", margins_csv(report))
    sys.stdout.write(json.dumps(report["summary"], indent=2) + "\n")
    return 0


def cmd_check_assumptions(args) -> int:
    e = _economy(args)
    params = _params(args)
    try:
        result = check_assumption2(e, params)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(json.dumps(result.to_dict(), indent=2) + "\n")
    return 0


def cmd_round(args) -> int:
    if args.out is not None:
        econ_path, eceei_path = args.out / "sample_economy.json", args.out / "eceei.json"
    elif args.economy is not None and args.eceei is not None:
        econ_path, eceei_path = args.economy, args.eceei
    else:
        raise UsageError("round needs --out DIR or both --economy and --eceei")
    e = load_economy(econ_path.read_bytes())
    x = load_eceei(eceei_path.read_bytes())
    check = verify_eceei(e, x)
    if not check.ok:
        sys.stdout.write(json.dumps(check.to_dict(), indent=2) + "\n")
        return 1
    result = shapley_folkman_round(e, x, seed=args.seed)
    sys.stdout.write(json.dumps(result.to_dict(), indent=2) + "\n")
    return 0 if result.ok else 1


COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "verify": cmd_verify,
    "montecarlo": cmd_montecarlo,
    "check-assumptions": cmd_check_assumptions,
    "round": cmd_round,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    except UsageError as exc:
        print(f"pseudomarket: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (EconomyFormatError, GeneratorError, FileNotFoundError) as exc:
        print(f"pseudomarket: error: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
