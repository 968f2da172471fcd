"""Command-line entry point: ``interbank <command> --config FILE``."""

from __future__ import annotations

import argparse
import sys

from . import scenario as sc
from .errors import CertificationError, ConfigError, ConvergenceError, GuardViolation, NetworkError

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_CERT = 0, 2, 3, 4

COMMANDS = ("run-single", "sweep-correlation", "sweep-leverage", "term-structure", "core-periphery", "certify")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interbank", description="Clearing and systemic term structures on multinomial trees.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario YAML file")
        s.add_argument("--out", default=None, help="output directory (default: outputs.dir)")
        s.add_argument("--seed-split", type=int, default=None, help="seed for random maturity splits")
        s.add_argument("--seed-path", type=int, default=0, help="seed for the reported sample path")
        s.add_argument("--mode", choices=sc.MODES, default=None, help="accounting mode (default: model.accounting)")
        s.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = sc.load_config(args.config)
        out = args.out or cfg.out_dir
        mode = args.mode or cfg.accounting
        if args.seed_split is not None:
            cfg.seeds["split"] = args.seed_split
        if args.command == "run-single":
            summary = sc.run_single(cfg, out, seed_path=args.seed_path, mode=mode)
            for m, s in summary.items():
                print(f"{m}: P(0) = {s['P0'].round(6).tolist()}  K(0) = {s['K0'].round(6).tolist()}  [{s['method']}]")
        elif args.command == "sweep-correlation":
            rows = sc.sweep_correlation(cfg, out_dir=out, mode=mode, threads=args.threads)
            print(f"{len(rows)} rows written to {out}")
        elif args.command == "sweep-leverage":
            rows = sc.sweep_leverage(cfg, out_dir=out, mode=mode, threads=args.threads)
            print(f"{len(rows)} rows written to {out}")
        elif args.command == "term-structure":
            curves = sc.run_term_structure(cfg, out_dir=out, seed_split=args.seed_split, mode=mode)
            print(f"{len(curves)} curves written to {out}")
        elif args.command == "core-periphery":
            res = sc.run_core_periphery(cfg, out_dir=out, mode=mode)
            for (cv, m), (_, shapes) in sorted(res.items()):
                print(f"core variance {cv:g} {m}: {shapes}")
        elif args.command == "certify":
            for line in sc.certify(cfg, out_dir=out, seed_split=args.seed_split):
                print(line)
    except (ConfigError, NetworkError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardViolation as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (CertificationError, ConvergenceError) as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
