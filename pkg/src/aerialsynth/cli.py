"""Command line entry point.

    aerialsynth all --config demo.json --out run1
    aerialsynth render --out run1            # re-run one stage from persisted inputs
    aerialsynth eval --gt gt.ply --pred pred.ply --out scores

Exit codes: 0 success, 1 invalid config or arguments, 2 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as cfgmod
from .config import STAGES, ConfigError
from .pipeline import MANIFEST, StageError, run

log = logging.getLogger("aerialsynth")

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for stage failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run config (default: bundled demo config)")
    common.add_argument("--seed", type=int, metavar="N", help="root seed, overrides the config")
    common.add_argument("--out", metavar="DIR", help="output directory, overrides the config")
    common.add_argument("--workers", type=int, metavar="N", help="worker processes for rendering")
    common.add_argument("--unsafe-params", action="store_true",
                        help="allow flight altitudes outside the surveyed 25-120 m band")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="aerialsynth", description="Synthetic aerial photogrammetry point clouds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in STAGES:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        if name == "eval":
            sp.add_argument("--gt", metavar="PATH", help="ground-truth cloud (.ply or .txt)")
            sp.add_argument("--pred", metavar="PATH", help="predicted cloud with the same points")
    sp = sub.add_parser("all", parents=[common], help="run every enabled stage")
    sp.add_argument("--stage", choices=STAGES, action="append", metavar="NAME",
                    help="restrict to the named stage(s); may be repeated")
    sub.add_parser("show-config", parents=[common], help="print the normalized config and exit")
    return p


def _load(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(args.config, unsafe=args.unsafe_params) if args.config else cfgmod.demo_config()
    cfg = cfgmod.with_overrides(cfg, seed=args.seed, out=args.out, workers=args.workers)
    # overrides are re-validated like the file itself
    cfgmod.validate(cfg, unsafe=args.unsafe_params)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as e:
        print(f"aerialsynth: invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "show-config":
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    if args.command == "all":
        stages = args.stage
    else:
        stages = [args.command]
    eval_files = None
    if args.command == "eval" and (args.gt or args.pred):
        if not (args.gt and args.pred):
            print("aerialsynth: eval needs both --gt and --pred", file=sys.stderr)
            return EXIT_INVALID
        eval_files = (args.gt, args.pred)

    try:
        manifest = run(cfg, stages=stages, eval_files=eval_files)
    except StageError as e:
        print(f"aerialsynth: {e}", file=sys.stderr)
        print(f"aerialsynth: manifest so far written to {cfg.output_dir}/{MANIFEST}", file=sys.stderr)
        return EXIT_STAGE
    summary = {s: e.get("seconds") for s, e in manifest["stages"].items() if s in (stages or STAGES)}
    print(json.dumps({"out": cfg.output_dir, "seconds": summary, "warnings": len(manifest["warnings"])}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
