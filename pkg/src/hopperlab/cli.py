"""hopperlab command-line interface.

Commands
    simulate   one hop trial (frames/truth/events + estimation CSVs)
    intrude    constant-speed intrusion grid
    estimate   estimation CSVs from existing frame CSVs
    identify   treatment report + intrusion-model fit from existing logs
    sweep      full grid: hops + intrusions + estimation + identification
    report     summary JSON + plot-ready CSVs

Exit codes: 0 success, 2 config error, 3 runtime/integration error,
4 missing-input error.  Output directory precedence: --out, then
HOPPERLAB_OUT, then the config's [output] dir.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import io
from .config import ExperimentConfig, load_config
from .errors import ConfigError, HopperlabError, MissingInputError
from .experiments import (
    estimate_from_frames,
    identify_outputs,
    run_sweep,
    run_single_hop,
    write_hop_artifacts,
    write_report,
)
from .simulator import run_constant_speed_intrusion


def _resolve_out(config: ExperimentConfig, args) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("HOPPERLAB_OUT")
    if env:
        return Path(env)
    return Path(config.output_dir)


def cmd_simulate(config: ExperimentConfig, args) -> int:
    out = _resolve_out(config, args)
    seeds = args.seeds if args.seeds else [config.sim.seed]
    kc_ncm = config.controller.k_compress / 100.0
    for seed in seeds:
        log, trial_id = run_single_hop(config, config.sim.drop_speed, kc_ncm, seed)
        write_hop_artifacts(config, log, trial_id, out)
        print(f"wrote trial {trial_id} to {out}")
    return 0


def cmd_intrude(config: ExperimentConfig, args) -> int:
    out = _resolve_out(config, args)
    out.mkdir(parents=True, exist_ok=True)
    from .experiments import intrusion_trial_id

    count = 0
    for speed in config.sweep.intrusion_speeds():
        for repeat in range(config.sweep.intrusion_repeats):
            log = run_constant_speed_intrusion(
                speed,
                config.sweep.intrusion_z_max,
                config.terrain,
                noise_config=config.noise,
                seed=[repeat, int(round(speed * 1e6))],
            )
            io.write_intrusion_csv(out / f"{intrusion_trial_id(speed, repeat)}.csv", log)
            count += 1
    print(f"wrote {count} intrusion logs to {out}")
    return 0


def cmd_estimate(config: ExperimentConfig, args) -> int:
    out = _resolve_out(config, args)
    frame_files = sorted(out.glob("*_frames.csv"))
    if not frame_files:
        raise MissingInputError(f"no *_frames.csv files in {out}")
    for path in frame_files:
        frames = io.read_frames_csv(path)
        est = estimate_from_frames(config, frames)
        truth_path = Path(str(path).replace("_frames.csv", "_truth.csv"))
        truth_dec = None
        if truth_path.exists():
            truth = io.read_truth_csv(truth_path)
            decim = config.sim.decimation
            n = len(est)
            truth_dec = {
                name: getattr(truth, name)[::decim][:n]
                for name in ("x_b", "v_b", "x_f", "v_f", "f_total")
            }
        est_path = Path(str(path).replace("_frames.csv", "_estimation.csv"))
        io.write_estimation_csv(est_path, est, truth_dec)
    print(f"estimated {len(frame_files)} trials in {out}")
    return 0


def cmd_identify(config: ExperimentConfig, args) -> int:
    out = _resolve_out(config, args)
    identify_outputs(config, out)
    print(f"wrote treatment_report.json and fits.csv to {out}")
    return 0


def cmd_sweep(config: ExperimentConfig, args) -> int:
    out = _resolve_out(config, args)
    if args.seeds:
        config.sweep = dataclasses.replace(config.sweep, seeds=tuple(args.seeds))
    manifest = run_sweep(config, out, jobs=args.jobs, resume=args.resume)
    n_hop = sum(1 for e in manifest["entries"] if e["kind"] == "hop")
    n_intr = len(manifest["entries"]) - n_hop
    print(f"sweep complete: {n_hop} hop trials, {n_intr} intrusion trials in {out}")
    return 0


def cmd_report(config: ExperimentConfig, args) -> int:
    out = _resolve_out(config, args)
    write_report(config, out)
    print(f"wrote summary.json and plot CSVs to {out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "intrude": cmd_intrude,
    "estimate": cmd_estimate,
    "identify": cmd_identify,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hopperlab",
        description="Granular hopping simulator and proprioceptive terrain identification workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seeds", type=_parse_seeds, default=None, help="comma-separated seed list")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
        p.add_argument("--resume", action="store_true", help="skip trials whose outputs exist")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingInputError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 4
    except HopperlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
