from __future__ import annotations

import argparse
import sys
from pathlib import Path

from distgp.errors import DistGPError, InternalError, InvalidParameter
from distgp.harness.config import PRESETS, ExperimentConfig, load_config, preset
from distgp.harness.experiments import (
    ExperimentResult,
    bound_curves,
    bounds_experiment,
    consensus_diagnostics,
    consistency_trend_experiment,
    fit_experiment,
    sure_vs_oracle_experiment,
    tune_experiment,
)
from distgp.harness.field import field_pipeline
from distgp.regression.data import Dataset
from distgp.util.io import to_json
from distgp.util.log import get_logger, setup_logging
from distgp.util.paths import DEFAULT_CONFIG_FILE

log = get_logger("distgp.cli")


def _config(args, default_preset: str | None = None) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.preset is not None:
        cfg = preset(args.preset)
    elif DEFAULT_CONFIG_FILE.exists():
        log.info("using %s", DEFAULT_CONFIG_FILE)
        cfg = load_config(DEFAULT_CONFIG_FILE)
    elif default_preset is not None:
        cfg = preset(default_preset)
    else:
        cfg = ExperimentConfig()
    return cfg.overridden(seed=args.seed, runs=args.runs, workers=args.workers, out_dir=args.out)


def _finish(result: ExperimentResult, cfg: ExperimentConfig) -> int:
    paths = result.write(cfg.out_dir)
    print(to_json({"experiment": result.name, **result.summary}))
    for p in paths:
        print("wrote:", p)
    return 0


def _data(args, cfg: ExperimentConfig) -> Dataset | None:
    if args.data is None:
        return None
    s2 = args.noise_variance if args.noise_variance is not None else cfg.noise_variance
    return Dataset.from_csv(args.data, noise_variance=s2, columns=cfg.field.columns or None)


def cmd_bounds(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args, "bounds-spline")
    if args.no_mc:
        return _finish(bound_curves(cfg), cfg)
    return _finish(bounds_experiment(cfg), cfg)


def cmd_fit(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args)
    if args.topology is not None:
        cfg = cfg.overridden(topology={"kind": "file", "path": args.topology})
    distributed = args.distributed or args.topology is not None
    return _finish(fit_experiment(cfg, data=_data(args, cfg), distributed=distributed), cfg)


def cmd_tune(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args)
    return _finish(tune_experiment(cfg, data=_data(args, cfg)), cfg)


def cmd_simulate(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args)
    if args.topology is not None:
        cfg = cfg.overridden(topology={"kind": "file", "path": args.topology})
    return _finish(consensus_diagnostics(cfg, N=args.agents), cfg)


def cmd_sure_study(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args, "sure-spline")
    return _finish(sure_vs_oracle_experiment(cfg), cfg)


def cmd_field(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args, "colorado")
    return _finish(field_pipeline(args.data, cfg), cfg)


def cmd_trend(args) -> int:
    setup_logging(args.verbose)
    cfg = _config(args, "trend")
    return _finish(consistency_trend_experiment(cfg), cfg)


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("config", nargs="?", type=Path, default=None, help="Experiment config (.json or .toml)")
    sp.add_argument("--preset", choices=PRESETS, default=None, help="Built-in config used when no file is given")
    sp.add_argument("--seed", type=int, default=None, help="Master seed (overrides the config)")
    sp.add_argument("--out", type=Path, default=None, help="Output directory for CSV/JSON files")
    sp.add_argument("--runs", type=int, default=None, help="Monte Carlo runs")
    sp.add_argument("--workers", type=int, default=None, help="Worker threads for independent runs")


class JsonArgumentParser(argparse.ArgumentParser):
    """Usage errors go to stderr as an invalid-parameter document; the exit status stays 2."""

    def error(self, message: str):
        err = InvalidParameter(message, usage=self.format_usage().strip())
        print(to_json(err.to_dict()), file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = JsonArgumentParser(prog="distgp")
    p.add_argument("-v", "--verbose", action="store_true")

    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("bounds", help="Error bounds over E, with Monte Carlo true errors")
    _common(sp)
    sp.add_argument("--no-mc", action="store_true", help="Only the bound curves (and bounds against M)")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("fit", help="SURE-tuned A/B fit, centralized or over consensus")
    _common(sp)
    sp.add_argument("--data", type=Path, default=None, help="CSV with x_1..x_d, y (synthetic if omitted)")
    sp.add_argument("--noise-variance", type=float, default=None)
    sp.add_argument("--distributed", action="store_true")
    sp.add_argument("--topology", type=Path, default=None, help="Edge-list CSV u,v (implies --distributed)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("tune", help="Emit SURE traces over the tuning grids")
    _common(sp)
    sp.add_argument("--data", type=Path, default=None)
    sp.add_argument("--noise-variance", type=float, default=None)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("simulate", help="Consensus-only diagnostics")
    _common(sp)
    sp.add_argument("--agents", type=int, default=20)
    sp.add_argument("--topology", type=Path, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sure-study", help="SURE against oracle tuning over Monte Carlo runs")
    _common(sp)
    sp.set_defaults(func=cmd_sure_study)

    sp = sub.add_parser("field", help="Field-data pipeline on a CSV")
    _common(sp)
    sp.add_argument("--data", type=Path, required=True)
    sp.set_defaults(func=cmd_field)

    sp = sub.add_parser("trend", help="Errors against M for fixed and growing E")
    _common(sp)
    sp.set_defaults(func=cmd_trend)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "verbose"):
        args.verbose = False
    try:
        return args.func(args)
    except DistGPError as e:
        print(to_json(e.to_dict()), file=sys.stderr)
        return 2
    except Exception as e:
        log.exception("distgp %s failed: %s", args.cmd, e)
        err = InternalError(str(e) or type(e).__name__, type=type(e).__name__)
        print(to_json(err.to_dict()), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
