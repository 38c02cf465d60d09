"""Command-line front end.

    pcnfft sweep-m     --config exp.ini --out results/
    pcnfft sweep-snr   --config exp.ini --out results/
    pcnfft ff-cut      --config exp.ini --solver coherent+0
    pcnfft check-bound --config exp.ini
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .scenario import ConfigurationError

EXIT_CONFIG = 2


def _sweep(cfg, axis, threads):
    if cfg.sweep is None:
        cfg.sweep = axis
    if cfg.sweep != axis:
        raise ConfigurationError(f"config sweeps {cfg.sweep!r} but the command sweeps {axis!r}")
    if not cfg.values:
        cfg.values = (1.0, 2.0, 3.0, 4.0) if axis == "m_over_n" else (20.0, 40.0, 60.0, 80.0)
    records = harness.run_sweep(cfg, threads)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records written to {cfg.output_dir} ({failed} failed runs)")
    for row in harness.summarize(records, axis):
        print(f"{row.solver:16s} {axis}={row.value:<6g} mean {row.mean_db:8.2f} dB "
              f"[{row.min_db:8.2f}, {row.max_db:8.2f}]")


def cmd_sweep_m(cfg, args):
    _sweep(cfg, "m_over_n", args.threads)


def cmd_sweep_snr(cfg, args):
    _sweep(cfg, "snr_db", args.threads)


def cmd_ff_cut(cfg, args):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"ff_cut_{args.solver.replace('+0', '_plus0')}.dat"
    harness.emit_ff_cut(cfg, args.solver, path)
    print(f"cut written to {path}")


def cmd_check_bound(cfg, args):
    for d in harness.check_bound(cfg):
        print(f"{d['solver']:16s} m={d['m']} n={d['n']} rank_A={d['rank_A']} rank_BC={d['rank_BC']} "
              f"m-rank_A={d['m'] - d['rank_A']} bound_ok={d['bound_ok']} gap_ratio={d['gap_ratio']:.4g}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcnfft", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config (defaults used when omitted)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for repetitions")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep-m", parents=[common], help="sweep m/n").set_defaults(func=cmd_sweep_m)
    sub.add_parser("sweep-snr", parents=[common], help="sweep the SNR").set_defaults(func=cmd_sweep_snr)
    ff = sub.add_parser("ff-cut", parents=[common], help="theta = 90 deg far-field cut of one run")
    ff.add_argument("--solver", default="coherent", choices=harness.SOLVER_IDS)
    ff.set_defaults(func=cmd_ff_cut)
    sub.add_parser("check-bound", parents=[common],
                   help="uniqueness diagnostics for the configured geometry").set_defaults(func=cmd_check_bound)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg = harness.load_config(args.config, seed=args.seed, output_dir=args.out)
        args.func(cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
