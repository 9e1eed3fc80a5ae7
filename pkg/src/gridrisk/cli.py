"""``gridrisk`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .report import PipelineConfig, PipelineError, run_combined, run_cyber, run_physical, run_pipeline


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON document holding any of the flags below")
    p.add_argument("--case", help="case file (JSON or MATPOWER); default: bundled IEEE 14-bus")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("-v", "--verbose", action="store_true")


def _cyber_flags(p):
    p.add_argument("--cyber", help="cyber graph JSON; default: one RTU per bus")
    p.add_argument("--strategy", choices=("meter-only", "rtu-only", "combined"))
    p.add_argument("--rtu-weight", type=float)
    p.add_argument("--meter-weight", type=float)


def _physical_flags(p):
    p.add_argument("--scenarios", help="CSV of MW snapshots with measurement descriptor headers")
    p.add_argument("--sweep", help="MTD levels as start:step:stop or a comma list")
    p.add_argument("--sd-mult", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--target-bus", type=int)
    p.add_argument("--target-branch", help="branch as from-to, e.g. 7-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrisk", description="FDI attack risk assessment under MTD.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cyber", help="rank buses by minimum intrusion cost")
    _common(p)
    _cyber_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("physical", help="MTD protection level of every overload attack")
    _common(p)
    _physical_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("combined", help="combined cyber/physical risk report")
    _common(p)
    _cyber_flags(p)
    _physical_flags(p)
    p.add_argument("--mix", type=float)
    p.add_argument("--out")

    p = sub.add_parser("all", help="run every stage and write all artifacts")
    _common(p)
    _cyber_flags(p)
    _physical_flags(p)
    p.add_argument("--mix", type=float)
    return parser


_NOT_CONFIG = {"command", "config", "out", "verbose"}


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineError("config", f"cannot read config {args.config}: {exc}") from None
        cfg = PipelineConfig.from_dict(doc)
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    return cfg.merged(**flags)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        out = getattr(args, "out", None)
        if args.command == "cyber":
            written = {"rankings": run_cyber(cfg, out)}
        elif args.command == "physical":
            written = run_physical(cfg, out)
        elif args.command == "combined":
            written = {"report": run_combined(cfg, out)}
        else:
            written = run_pipeline(cfg)
    except PipelineError as exc:
        print(f"gridrisk: error in stage {exc.stage}: {exc}", file=sys.stderr)
        return 2
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
