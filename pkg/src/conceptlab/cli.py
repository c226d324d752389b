"""Command-line entry point for running scenarios and protocol checks."""

from __future__ import annotations

import argparse
import json
import sys

from conceptlab.config import ConfigError, load_config
from conceptlab.schedule import make_schedule


def _parse_host_port(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {value!r}")
    return host, int(port)


def _add_oracle_args(p):
    p.add_argument(
        "--oracle",
        choices=("analytic", "remote"),
        default="analytic",
        help="epsilon backend (remote requires --remote host:port)",
    )
    p.add_argument("--remote", type=_parse_host_port, default=None, metavar="HOST:PORT")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptlab",
        description="Concept-editing experiments on exactly solvable diffusion worlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario document (or re-run a manifest)")
    run.add_argument("scenario", help="scenario JSON path, manifest path, or builtin name")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--threads", type=int, default=1)
    _add_oracle_args(run)

    rank = sub.add_parser("rank", help="numerical ranks of spanning-difference matrices")
    rank.add_argument("config", help="world config JSON path or builtin fixture name")
    rank.add_argument("--spaces", nargs="+", required=True, help="target concept spaces")
    rank.add_argument("--probes", type=int, default=8)
    rank.add_argument("--points", type=int, default=12)
    rank.add_argument("--seed", type=int, default=0)
    rank.add_argument("--T", type=int, default=1000)

    leak = sub.add_parser("leakage", help="recompute leakage metrics from saved runs")
    leak.add_argument("config", help="world config JSON path or builtin fixture name")
    leak.add_argument("--edited", required=True, help="edited run directory")
    leak.add_argument("--original", required=True, help="unedited run directory")
    leak.add_argument("--target-space", required=True)
    leak.add_argument("--off-space", required=True)
    leak.add_argument("--intended-prompt", required=True)
    leak.add_argument("--T", type=int, default=1000)

    check = sub.add_parser("protocol-check", help="validate a remote epsilon server")
    check.add_argument("address", type=_parse_host_port, metavar="HOST:PORT")
    check.add_argument("--config", default=None, help="reference world for value agreement")
    check.add_argument("--T", type=int, default=1000)
    check.add_argument("--probes", type=int, default=10)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--tol", type=float, default=1e-6)
    check.add_argument("--golden", default=None, help="replay a recorded transcript file")
    return parser


def _cmd_run(args) -> int:
    from conceptlab.scenarios import run_scenario

    report = run_scenario(
        args.scenario,
        args.out,
        seed=args.seed,
        oracle=args.oracle,
        remote=args.remote,
        threads=args.threads,
    )
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def _cmd_rank(args) -> int:
    from conceptlab.scenarios import rank_report

    cfg = load_config(args.config)
    if cfg.world is None:
        raise ConfigError("config does not define a world")
    report = rank_report(
        cfg.world,
        args.spaces,
        make_schedule(args.T),
        probes=args.probes,
        points=args.points,
        seed=args.seed,
    )
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def _cmd_leakage(args) -> int:
    from conceptlab.sampler import RunArtifact
    from conceptlab.scenarios import leakage

    cfg = load_config(args.config)
    if cfg.world is None or cfg.table is None:
        raise ConfigError("config must define a world and a prompt table")
    edited = RunArtifact.load(args.edited)
    original = RunArtifact.load(args.original)
    rep = leakage(
        cfg.world,
        make_schedule(args.T),
        edited.samples,
        original.samples,
        args.target_space,
        args.off_space,
        cfg.table.resolve(args.intended_prompt),
    )
    json.dump(rep.to_dict(), sys.stdout, indent=2)
    print()
    return 0


def _cmd_protocol_check(args) -> int:
    from conceptlab.oracle import AnalyticOracle
    from conceptlab.protocol import protocol_check, run_transcript

    host, port = args.address
    reference = None
    if args.config:
        cfg = load_config(args.config)
        if cfg.world is None or cfg.table is None:
            raise ConfigError("reference config must define a world and a prompt table")
        reference = AnalyticOracle(cfg.world, cfg.table, make_schedule(args.T))
    report = protocol_check(
        host, port, reference=reference, probes=args.probes, seed=args.seed, tol=args.tol
    )
    if args.golden:
        transcript = run_transcript(host, port, args.golden)
        report["transcript"] = transcript
        report["ok"] = report["ok"] and transcript["ok"]
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0 if report["ok"] else 1


_COMMANDS = {
    "run": _cmd_run,
    "rank": _cmd_rank,
    "leakage": _cmd_leakage,
    "protocol-check": _cmd_protocol_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
