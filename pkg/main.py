#!/usr/bin/env python3
"""
NF/FF mismatch toolkit: command-line entry point.

  python3 main.py mme-map   --config configs/case1_mme_map.json --out case1.csv
  python3 main.py chest-map --config configs/case2_chest_map.json --out case2.csv
  python3 main.py ser-map   --config configs/case3_ser_map.json --out case3.csv
  python3 main.py metrics   --config configs/metrics_report.json --out metrics.json
  python3 main.py fraunhofer --n-antennas 128 --spacing-wavelengths 0.5 --carrier-hz 140e9
  python3 main.py validate  --config configs/case1_mme_map.json

Exit codes: 0 ok, 2 config/argument error, 3 numerical run-level failure, 4 I/O error.
"""

import argparse
import sys
from typing import List, Optional, Tuple
from config import Config, configure_logging, logger
from errors import (ConfigError, InvalidArgumentError, NoSolutionError, NumericalFailureError,
                    OutputError, RunLevelFailureError)
from array_geometry import aperture, build_ula, fraunhofer_distance
from sweep_config import ScenarioConfig, load_config
from scenarios import RUNNERS, run_metrics_report
from run_record import run_metadata, save_run
from progress_reporter import ProgressReporter

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

SUBCOMMAND_KINDS = {
    'mme-map': 'mme-map',
    'chest-map': 'chest-map',
    'ser-map': 'ser-map',
    'metrics': 'metrics-report',
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='nfff', description='Near-field / far-field model-mismatch toolkit')
    parser.add_argument('--version', action='version', version=f"%(prog)s {Config.VERSION}")
    sub = parser.add_subparsers(dest='command', required=True)

    for name in SUBCOMMAND_KINDS:
        p = sub.add_parser(name, help=f"run a {SUBCOMMAND_KINDS[name]} scenario")
        p.add_argument('--config', required=True, help='scenario JSON')
        p.add_argument('--out', required=True, help='result path (CSV for maps, JSON for metrics)')
        p.add_argument('--seed', type=int, help='override the config seed (unsigned 64-bit)')
        p.add_argument('--threads', type=int, help='worker threads (default: available cores)')
        p.add_argument('--quiet', action='store_true', help='only warnings and errors on stderr')

    fr = sub.add_parser('fraunhofer', help='print the Fraunhofer distance of a ULA')
    fr.add_argument('--config', help='take the array section of a scenario JSON')
    fr.add_argument('--n-antennas', type=int)
    fr.add_argument('--spacing-wavelengths', type=float, default=0.5)
    fr.add_argument('--carrier-hz', type=float)
    fr.add_argument('--quiet', action='store_true')

    val = sub.add_parser('validate', help='check a scenario JSON and exit')
    val.add_argument('--config', required=True)
    val.add_argument('--quiet', action='store_true')
    return parser


def _fraunhofer_line(n: int, spacing_wl: float, carrier_hz: float) -> str:
    wavelength = Config.SPEED_OF_LIGHT / carrier_hz
    geom = build_ula(n, spacing_wl * wavelength, carrier_hz)
    return (f"N={n} spacing={spacing_wl:g}λ carrier={carrier_hz:.6g} Hz "
            f"aperture={aperture(geom):.6f} m d_F={fraunhofer_distance(geom, wavelength):.4f} m")


def cmd_fraunhofer(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        for spacing in cfg.variants:
            print(_fraunhofer_line(cfg.array.n_antennas, spacing, cfg.array.carrier_hz))
        return EXIT_OK
    if args.n_antennas is None or args.carrier_hz is None:
        raise ConfigError("fraunhofer needs --config or both --n-antennas and --carrier-hz", 'n_antennas')
    if args.n_antennas < 1:
        raise ConfigError(f"--n-antennas must be >= 1, got {args.n_antennas}", 'n_antennas')
    if not args.carrier_hz > 0:
        raise ConfigError(f"--carrier-hz must be > 0, got {args.carrier_hz}", 'carrier_hz')
    if not args.spacing_wavelengths > 0:
        raise ConfigError(f"--spacing-wavelengths must be > 0, got {args.spacing_wavelengths}", 'spacing_wavelengths')
    print(_fraunhofer_line(args.n_antennas, args.spacing_wavelengths, args.carrier_hz))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: valid {cfg.kind} config (hash {cfg.config_hash()[:12]})", file=sys.stderr)
    return EXIT_OK


def _load_for(args) -> Tuple[ScenarioConfig, str]:
    cfg = load_config(args.config)
    expected = SUBCOMMAND_KINDS[args.command]
    if cfg.kind != expected:
        raise ConfigError(f"kind: config is '{cfg.kind}' but subcommand '{args.command}' needs '{expected}'", 'kind')
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}", 'seed')
        return cfg.with_seed(args.seed), 'cli'
    return cfg, 'config'


def cmd_run(args) -> int:
    cfg, seed_source = _load_for(args)
    threads = args.threads or Config.THREADS
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}", 'threads')

    if cfg.kind == 'metrics-report':
        total = len(cfg.metrics.probes) * len(cfg.variants)
        progress = ProgressReporter('metrics', total, quiet=args.quiet)
        progress.notify_start(f"seed {cfg.seed}")
        report = run_metrics_report(cfg, progress)
        wall = progress.elapsed_s
        save_run(args.out, report, run_metadata(cfg, seed_source, wall, 1, total, 0))
        progress.notify_summary(total, 0, wall, args.out)
        return EXIT_OK

    progress = ProgressReporter(cfg.kind, cfg.grid.n_cells * len(cfg.variants), quiet=args.quiet)
    progress.notify_start(f"seed {cfg.seed}, {threads} threads")
    try:
        result = RUNNERS[cfg.kind](cfg, threads=threads, progress=progress)
    except RunLevelFailureError as e:
        if e.result is not None:
            r = e.result
            save_run(args.out, r.frame, run_metadata(cfg, seed_source, r.wall_time_s, threads,
                                                     r.n_cells, r.n_failed, r.extras))
            progress.notify_summary(r.n_cells, r.n_failed, r.wall_time_s, args.out)
        raise
    save_run(args.out, result.frame, run_metadata(cfg, seed_source, result.wall_time_s, threads,
                                                  result.n_cells, result.n_failed, result.extras))
    progress.notify_summary(result.n_cells, result.n_failed, result.wall_time_s, args.out)
    return EXIT_OK


def dispatch(args) -> int:
    """Run one parsed invocation and map error kinds to exit codes."""
    try:
        if args.command == 'fraunhofer':
            return cmd_fraunhofer(args)
        if args.command == 'validate':
            return cmd_validate(args)
        return cmd_run(args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as e:
        logger.error(f"Invalid argument: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailureError, NoSolutionError) as e:
        logger.error(f"Numerical run-level failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OutputError as e:
        logger.error(f"Output error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    configure_logging(quiet=args.quiet)
    return dispatch(args)


if __name__ == '__main__':
    sys.exit(main())
