"""Command line entry point: ``eqzlab <subcommand> [--config cfg.json] ...``.

Exit codes: 0 when every asserted claim holds, 2 when a claim fails,
1 on invalid input or a numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import RUNNERS, ConfigError, ExperimentConfig
from .random_sections import mp_constant

EXIT_OK, EXIT_ERROR, EXIT_CLAIM = 0, 1, 2


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON experiment configuration")
    sp.add_argument("--out", help="output directory (overrides the config)")
    sp.add_argument("--cache", help="Gram matrix cache directory (overrides the config)")
    sp.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (overrides the config)")
    sp.add_argument("--threads", type=int, help="worker threads (never changes the output)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eqzlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        _common(sub.add_parser(name, help=RUNNERS[name].__doc__.splitlines()[0] if RUNNERS[name].__doc__ else None))
    mp = sub.add_parser("mp-constant", help="normalizing constant c_{d,k} of the multi-projective measure")
    _common(mp)
    mp.add_argument("--d", type=int, required=True)
    mp.add_argument("--k", type=int, required=True)
    return ap


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{args.config}: invalid JSON ({e})") from None
    for key in ("out", "cache", "seed", "threads"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mp-constant":
            print(f"{mp_constant(args.d, args.k):.17g}")
            return EXIT_OK
        cfg = load_config(args)
        report = RUNNERS[args.command](cfg)
        out = report.write()
        status = "PASS" if report.passed else "FAIL"
        for name, claim in report.claims.items():
            tag = "pass" if claim["passed"] else "fail"
            if not claim.get("asserted", True):
                tag += " (reported only)"
            print(f"{report.name}.{name}: {tag}")
        print(f"{status}: wrote {out}")
        return EXIT_OK if report.passed else EXIT_CLAIM
    except (ConfigError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
