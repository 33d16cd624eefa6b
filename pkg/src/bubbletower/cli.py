"""``bubbletower run``: exit 0 when every ledger entry passes, 2 on a verification
failure or an incomplete run, 3 when the configuration is rejected."""
from __future__ import annotations

import argparse
import sys

from .pipeline import ConfigError, emit_fields, emit_report, parse_config, run_pipeline

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubbletower")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="build and verify one bubble tower")
    run.add_argument("--config", help="JSON file with any of the options below")
    run.add_argument("--dim-n", dest="n", type=int)
    run.add_argument("--order-m", dest="m", type=int)
    run.add_argument("--bubbles", dest="N", type=int)
    run.add_argument("--epsilon", dest="eps", type=float)
    run.add_argument("--phi", help="power:q or exp (default power:4)")
    run.add_argument("--k", help="const, bump:amp=..,r0=..,r1=.. or quadratic:amp=..,R=..")
    run.add_argument("--probes", type=int)
    run.add_argument("--mc-samples", dest="mc_samples", type=int)
    run.add_argument("--tol", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--report", help="write the JSON report here")
    run.add_argument("--fields", help="directory for the field CSVs")
    run.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config", "quiet")}
    try:
        cfg = parse_config(values, args.config)
    except (ConfigError, OSError) as exc:
        print(f"bubbletower: configuration rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_pipeline(cfg)
    rep = result.report
    if cfg.report:
        emit_report(rep, cfg.report)
    if cfg.fields:
        emit_fields(result, cfg.fields)
    if not args.quiet:
        for entry in rep["ledger"]:
            margin = entry["margin"]
            shown = "-" if margin is None else f"{margin:.4g}"
            print(f"{entry['status']:>8}  {entry['label']:<22} margin {shown}")
        if "error" in rep:
            print(f"incomplete at stage {rep['error']['stage']}: {rep['error']['message']}")
        print(f"status: {rep['status']}")
    return EXIT_OK if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
