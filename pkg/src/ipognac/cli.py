"""Command-line interface.

    ipognac simulate-states [--override pattern=L,R,D]
    ipognac run-qkd --seed 7 --out run.csv [--plot]
    ipognac sweep --override sweep.key=snspd.dark_hz --override sweep.values=0,100,1000
    ipognac compare --out table.csv

Config precedence: defaults, then ``--config`` (or ``$IPOGNAC_CONFIG``), then
``--override`` in order, then ``--seed``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, ExperimentConfig, format_value, load_config, parse_overrides
from .polarization import JonesVector, fidelity, make_state, stokes_from_matrix
from .timing import ScheduleError

log = logging.getLogger("ipognac")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (flat 'key = value' lines)")
    common.add_argument("--seed", type=_u64, help="run seed (unsigned 64-bit)")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ipognac", description="Sagnac polarization encoder and QKD run simulator")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("simulate-states", parents=[common], help="print emitted states for the pattern")
    run = sub.add_parser("run-qkd", parents=[common], help="full run: per-bin QBER CSV and summary")
    run.add_argument("--plot", action="store_true", help="also write a QBER time-series PNG next to --out")
    sw = sub.add_parser("sweep", parents=[common], help="vary one config key, one run per value")
    sw.add_argument("--key", help="shorthand for --override sweep.key=...")
    sw.add_argument("--values", help="comma list or lo:hi:num; shorthand for sweep.values")
    sw.add_argument("--plot", action="store_true")
    cmp_ = sub.add_parser("compare", parents=[common], help="encoder comparison table")
    cmp_.add_argument("--plot", action="store_true")
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _need_out(args) -> None:
    if getattr(args, "plot", False) and not args.out:
        raise ConfigError("--plot", "needs --out to place the figure")


def emitted_state(encoder, phi_e: float, phi_l: float) -> JonesVector:
    if encoder.kind == "inline":
        f = encoder.field_out(phi_e)
    else:
        f = encoder.field_out(phi_e, phi_l)
    return JonesVector.from_array(f.jones()).normalized()


def simulate_states(cfg: ExperimentConfig) -> str:
    enc = harness.build_encoder(cfg)
    volts = harness.drive_voltages(cfg, enc)
    spectral = harness.spectral_model(cfg)
    cols = ["label", "v_early", "v_late", "phi_early", "phi_late", "re_h", "im_h", "re_v", "im_v",
            "s0", "s1", "s2", "s3", "dop", "fidelity_to_target"]
    lines = [",".join(cols)]
    labels = harness.label_alphabet(cfg) if cfg.pattern == ["RANDOM"] else cfg.pattern
    for lab in labels:
        ve, vl = volts[lab]
        pe, pl = float(enc.modulator.phase(ve)), float(enc.modulator.phase(vl))
        state = emitted_state(enc, pe, pl)
        s = stokes_from_matrix(enc.emitted_coherency(pe, pl, spectral))
        d = float(np.sqrt((s[1:] ** 2).sum()) / s[0])
        vals = [ve, vl, pe, pl, *state.serialize(), *s, d, fidelity(state, make_state(lab))]
        lines.append(",".join([lab] + [format_value(float(v)) for v in vals]))
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg, args) -> None:
    _emit(simulate_states(cfg), args.out)


def cmd_run(cfg, args) -> None:
    _need_out(args)
    samples, summary = harness.run_experiment(cfg)
    text = harness.csv_text(samples)
    if args.out:
        Path(args.out).write_text(text)
        Path(args.out).with_suffix(".summary.txt").write_text(summary.to_text())
        sys.stdout.write(summary.to_text())
        if args.plot:
            from .report import figure_path, plot_qber_series

            plot_qber_series(samples, summary, figure_path(args.out))
    else:
        sys.stdout.write(text)
        sys.stderr.write(summary.to_text())


def cmd_sweep(cfg, args) -> None:
    _need_out(args)
    extra = {}
    if args.key:
        extra["sweep.key"] = args.key
    if args.values:
        extra["sweep.values"] = args.values
    if extra:
        cfg = ExperimentConfig.from_flat(extra, cfg)
    points = harness.sweep(cfg)
    _emit(harness.sweep_csv(cfg.sweep.key, points), args.out)
    if args.plot:
        from .report import figure_path, plot_sweep

        plot_sweep(cfg.sweep.key, [p.value for p in points], [p.summary for p in points], figure_path(args.out))


def cmd_compare(cfg, args) -> None:
    _need_out(args)
    rows = harness.compare_encoders(cfg)
    _emit(harness.comparison_csv(rows), args.out)
    if args.plot:
        from .report import figure_path, plot_comparison

        plot_comparison(rows, figure_path(args.out))


COMMANDS = {
    "simulate-states": cmd_simulate,
    "run-qkd": cmd_run,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, parse_overrides(args.override), args.seed)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, ScheduleError) as exc:
        print(f"ipognac: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ipognac: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
