"""Command line: config-driven batch experiments plus one-shot estimation.

Every subcommand accepts ``--config`` (JSON, schema = ExperimentConfig field
names), ``--seed``, ``--trials``, ``--out``, ``--format csv|json`` and
``--jobs``; flags override the config file.  Without a config file the
reference operating point is used, except ``power-curve`` which defaults to
the fully pinned link-budget preset (both dBm overrides).
"""

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .config import ALL_ALGORITHMS, ExperimentConfig, link_budget_params, load_config
from .errors import ConfigError, MaglocError
from .estimators import Algorithm, InitSampler, multi_start
from .harness import (
    format_cell,
    generate_topology,
    run_algo_compare,
    run_crlb_cdf,
    run_peb_sweep,
    run_power_curve,
    run_topology,
    write_table,
)
from .physics import effective_coupling, effective_noise_variance


def _apply_flags(args):
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for flag, field in (
        ("seed", "seed"),
        ("trials", "trials"),
        ("out", "out_dir"),
        ("format", "format"),
        ("jobs", "jobs"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    try:
        return replace(config, **overrides) if overrides else config
    except MaglocError as error:
        raise ConfigError(str(error)) from error


def _emit(config, table):
    path = write_table(table, config.out_dir, config.format)
    print(f"wrote {path} ({len(table.rows)} rows)")
    return path


def cmd_topology(args):
    config = _apply_flags(args)
    _emit(config, run_topology(config))
    return 0


def cmd_power_curve(args):
    config = _apply_flags(args)
    if args.config is None:
        config = replace(config, params=link_budget_params())
    table = run_power_curve(config)
    _emit(config, table)
    print(
        "alignment_db:", format_cell(table.metadata["alignment_db"]),
        " coaxial_unit_snr_distance_m:",
        format_cell(table.metadata["coaxial_unit_snr_distance_m"]),
    )
    return 0


def cmd_peb_sweep(args):
    config = _apply_flags(args)
    table = run_peb_sweep(config)
    _emit(config, table)
    print("excluded_total:", table.metadata["excluded_total"])
    return 0


def cmd_crlb_cdf(args):
    config = _apply_flags(args)
    if args.realizations is not None:
        config = replace(config, noise_realizations=args.realizations)
    table = run_crlb_cdf(config)
    _emit(config, table)
    pebs = sorted(row[6] for row in table.rows)
    if pebs:
        print("median_peb_m:", format_cell(float(np.median(pebs))))
    print("excluded:", table.metadata["excluded"])
    return 0


def cmd_algo_compare(args):
    config = _apply_flags(args)
    if args.inits is not None:
        config = replace(config, init_count=args.inits)
    table = run_algo_compare(config)
    _emit(config, table)
    for label, rate in table.metadata["success_rate"].items():
        print(f"success_rate[{label}]:", format_cell(rate))
    return 0


def _read_measurements(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as error:
        raise ConfigError(f"cannot read measurements: {error}") from error
    try:
        if path.endswith(".json"):
            data = json.loads(text)
            if isinstance(data, dict):
                data = data.get("measurements")
            values = [float(v) for v in data]
        else:
            values = [float(token) for token in text.replace(",", " ").split()]
    except (TypeError, ValueError, json.JSONDecodeError) as error:
        raise ConfigError(f"{path}: cannot parse measurements ({error})") from error
    if not values:
        raise ConfigError(f"{path}: no measurements found")
    return np.array(values)


def cmd_estimate(args):
    config = _apply_flags(args)
    y = _read_measurements(args.input)
    topology = generate_topology(config.anchor_count, config.room)
    if y.size != len(topology):
        raise ConfigError(
            f"got {y.size} measurements for {len(topology)} anchors"
        )
    coupling = effective_coupling(config.params)
    noise_var = effective_noise_variance(config.params)
    starts = args.inits if args.inits is not None else config.init_count
    sampler = InitSampler(config.room.lower, config.room.upper, config.seed)
    estimate = multi_start(
        Algorithm(args.algorithm), y, topology, coupling, noise_var, starts, sampler
    )
    print("algorithm:", estimate.algorithm.value)
    print("position_m:", " ".join(format_cell(v) for v in estimate.pose.position))
    if estimate.pose.orientation is not None:
        print("azimuth_rad:", format_cell(estimate.pose.orientation.azimuth_rad))
        print("polar_rad:", format_cell(estimate.pose.orientation.polar_rad))
    print("residual_cost:", format_cell(estimate.residual_cost))
    print("iterations:", estimate.iterations)
    print("termination:", "" if estimate.termination is None else estimate.termination.value)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (ExperimentConfig schema)")
    common.add_argument("--seed", type=int, help="experiment seed (u64)")
    common.add_argument("--trials", type=int, help="number of trials/deployments")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="data file format")
    common.add_argument("--jobs", type=int, help="parallel worker processes")

    parser = argparse.ArgumentParser(
        prog="magloc",
        description="Magneto-inductive localization experiments and estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", parents=[common], help="emit the anchor layout")
    p.set_defaults(handler=cmd_topology)

    p = sub.add_parser(
        "power-curve", parents=[common], help="received power over distance"
    )
    p.set_defaults(handler=cmd_power_curve)

    p = sub.add_parser(
        "peb-sweep", parents=[common],
        help="median position bound over room size and anchor count",
    )
    p.set_defaults(handler=cmd_peb_sweep)

    p = sub.add_parser(
        "crlb-cdf", parents=[common],
        help="per-deployment bounds and truth-initialized ML errors",
    )
    p.add_argument("--realizations", type=int, help="noise realizations per deployment")
    p.set_defaults(handler=cmd_crlb_cdf)

    p = sub.add_parser(
        "algo-compare", parents=[common], help="estimator comparison trials"
    )
    p.add_argument("--inits", type=int, help="multi-start initializations")
    p.set_defaults(handler=cmd_algo_compare)

    p = sub.add_parser(
        "estimate", parents=[common], help="one-shot estimate from a measurement file"
    )
    p.add_argument("--input", required=True, help="measurement file (json or text)")
    p.add_argument(
        "--algorithm",
        default="cascade",
        choices=[a for a in ALL_ALGORITHMS if a != "baseline"],
    )
    p.add_argument("--inits", type=int, help="multi-start initializations")
    p.set_defaults(handler=cmd_estimate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (MaglocError, OSError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
