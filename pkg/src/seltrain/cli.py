"""Command-line entry point: ``seltrain <subcommand> [options]``.

Exit codes: 0 success, 2 config error, 3 infeasible policy/tau,
4 fixed-point non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .channel import channel_trajectory, write_trajectory
from .config import RateUnit, SystemConfig, load_config
from .errors import ConfigError, ConvergenceError, InfeasibleError
from .experiment import (SweepSpec, drop_for, policies_from_csv, run_episode, sweep_density,
                         sweep_tau)
from .rate import DetEqProblem, det_eq_rate, solve_fixed_point
from .selection import Policy
from .streams import EpisodeStreams

log = logging.getLogger("seltrain")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CONVERGENCE = 0, 2, 3, 4


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p):
    p.add_argument("--config", type=Path, help="flat key = value scenario file")
    p.add_argument("--seed", type=_u64, help="override rng_seed")
    p.add_argument("--unit", choices=[u.value for u in RateUnit], help="override rate_unit")
    p.add_argument("--out", type=Path, help="output path (default: stdout)")


def _add_sweep(p, default_policies, default_drops, default_realizations):
    _add_common(p)
    p.add_argument("--policies", default=default_policies,
                   help=f"comma-separated subset of DUS,RUS,US,FT (default {default_policies})")
    p.add_argument("--tau-min", type=int, default=0)
    p.add_argument("--tau-max", type=int, help="default: block_length")
    p.add_argument("--tau-step", type=int, default=1)
    p.add_argument("--drops", type=int, default=default_drops)
    p.add_argument("--realizations", type=int, default=default_realizations)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (-1: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seltrain",
                                     description="Selective uplink training simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-tau", help="rate vs. training length at fixed K")
    _add_sweep(p, "DUS,RUS,US,FT", 1, 10_000)

    p = sub.add_parser("sweep-density", help="rate vs. number of users at tau*")
    _add_sweep(p, "DUS,US,FT", 100, 1_000)
    p.add_argument("--k-list", type=_int_list, help="comma-separated K values")

    p = sub.add_parser("episode", help="per-block trace of one episode")
    _add_common(p)
    p.add_argument("--policy", default="DUS")
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--drop-index", type=int, default=0)
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("--dump-channels", type=Path,
                   help="write the channel trajectory in the binary dump format")

    p = sub.add_parser("solve-deteq", help="one fixed-point solve from a variance profile")
    p.add_argument("profile", type=Path,
                   help="normalized variances v_bar, comma/whitespace separated")
    _add_common(p)
    p.add_argument("--n-antennas", type=int, help="override n_antennas")
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)
    return parser


def resolve_config(args) -> SystemConfig:
    config = load_config(args.config) if args.config else SystemConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "unit", None) is not None:
        changes["rate_unit"] = RateUnit(args.unit)
    return config.replace(**changes) if changes else config


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _sweep_spec(args, config, k_values=None) -> SweepSpec:
    tau_max = config.block_length if args.tau_max is None else args.tau_max
    if args.tau_step < 1:
        raise ConfigError("--tau-step must be >= 1")
    taus = tuple(range(args.tau_min, tau_max + 1, args.tau_step))
    try:
        return SweepSpec(config, policies_from_csv(args.policies), taus, k_values,
                         args.drops, args.realizations, args.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_sweep_tau(args):
    config = resolve_config(args)
    result = sweep_tau(_sweep_spec(args, config))
    _emit(result.to_csv(), args.out)


def cmd_sweep_density(args):
    config = resolve_config(args)
    result = sweep_density(_sweep_spec(args, config, args.k_list))
    _emit(result.to_csv(), args.out)


def cmd_episode(args):
    config = resolve_config(args)
    try:
        policy = Policy.parse(args.policy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    drop = drop_for(config, args.drop_index)
    streams = EpisodeStreams(config.rng_seed, args.drop_index, args.realization)
    channels = channel_trajectory(drop, config.n_antennas, config.n_blocks,
                                  config.temporal_corr, streams)
    ep = run_episode(config, drop, policy, args.tau, streams, channels=channels)
    if args.dump_channels:
        write_trajectory(args.dump_channels, channels)
    conv = config.rate_unit.convert
    lines = ["block,n_selected,selected,beta,mc_rate,deteq_rate"]
    w = ep.warmup
    lines.append(f"0,{len(w.selected)},{' '.join(map(str, w.selected))},{w.beta!r},,")
    for b in ep.blocks:
        lines.append(f"{b.block},{len(b.selected)},{' '.join(map(str, b.selected))},"
                     f"{b.beta!r},{conv(b.mc_rate)!r},{conv(b.deteq_rate)!r}")
    _emit("\n".join(lines) + "\n", args.out)


def read_profile(path: Path) -> np.ndarray:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from exc
    values = []
    for row in csv.reader(line for line in text.splitlines()
                          if line.strip() and not line.lstrip().startswith("#")):
        for cell in row:
            for tok in cell.split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ConfigError(f"bad number in profile: {tok!r}") from None
    if not values:
        raise ConfigError("variance profile is empty")
    return np.asarray(values)


def cmd_solve_deteq(args):
    config = resolve_config(args)
    v_bar = read_profile(args.profile)
    n = args.n_antennas if args.n_antennas is not None else config.n_antennas
    try:
        problem = DetEqProblem(v_bar, n, v_bar.size, args.tau, config.block_length)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0 <= args.tau <= config.block_length:
        raise InfeasibleError(f"tau={args.tau} outside [0, {config.block_length}]")
    fp = solve_fixed_point(problem, args.tol, args.max_iter)
    rate = config.rate_unit.convert(det_eq_rate(problem, fp))
    _emit(f"t = {fp.t!r}\niterations = {fp.iterations}\nresidual = {fp.residual!r}\n"
          f"deteq_rate = {rate!r}\nunit = {config.rate_unit.value}\n", args.out)


COMMANDS = {
    "sweep-tau": cmd_sweep_tau,
    "sweep-density": cmd_sweep_density,
    "episode": cmd_episode,
    "solve-deteq": cmd_solve_deteq,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.info("kernel backend: %s", _kernels.backend())
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
