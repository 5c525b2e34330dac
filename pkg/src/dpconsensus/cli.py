"""Command-line entry point: ``dpconsensus {run,sweep,check-graph,couple}``.

Exit status is 0 on success, 1 on invalid input, 2 on runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import ConfigError, cmd_check_graph, cmd_couple, cmd_run, cmd_sweep, load_config
from .graph import GraphFormatError


def _sigma_arg(text: str):
    text = text.strip()
    if text.startswith("["):
        return [float(v) for v in text[1:-1].split(",") if v.strip()]
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file")
    common.add_argument("--out", type=Path, help="directory for output files")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo runs")

    parser = argparse.ArgumentParser(prog="dpconsensus", description="Differentially private iterative averaging experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="sample one execution and summarise it")
    sub.add_parser("sweep", parents=[common], help="privacy/accuracy over a swept parameter")
    p = sub.add_parser("check-graph", parents=[common], help="spectral convergence condition of a graph")
    p.add_argument("--graph", type=Path, help="graph file (defaults to the config's graph_file)")
    p.add_argument("--sigma", type=_sigma_arg, help="sigma, scalar or [s1,...,sN] (defaults to the config's)")
    p = sub.add_parser("couple", parents=[common], help="verify the noise-shifting coupling")
    p.add_argument("--k", type=int, required=True, help="1-based client whose input is shifted")
    p.add_argument("--delta", type=float, default=1.0, help="size of the input shift")
    return parser


def _config(args):
    if args.config is None:
        raise ConfigError([("--config", "required for this command")])
    overrides = {"seed": args.seed} if args.seed is not None else None
    return load_config(args.config, overrides)


def _emit(text: str, args, name: str) -> None:
    sys.stdout.write(text)
    if args.out is not None and name:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / name).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            sys.stdout.write(cmd_run(_config(args), args.out, args.workers))
        elif args.command == "sweep":
            sys.stdout.write(cmd_sweep(_config(args), args.out, args.workers))
        elif args.command == "check-graph":
            cfg = _config(args) if args.config is not None else None
            graph = args.graph or (cfg.graph_file if cfg else None)
            sigma = args.sigma if args.sigma is not None else (cfg.sigma if cfg else None)
            if graph is None or sigma is None:
                raise ConfigError([("--graph/--sigma", "give both, or a config with graph_file and sigma")])
            _emit(cmd_check_graph(graph, sigma), args, "check_graph.txt")
        elif args.command == "couple":
            _emit(cmd_couple(_config(args), args.k, args.delta), args, "coupling.txt")
    except (ConfigError, GraphFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures: I/O, numerical blow-ups
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
