"""Command-line entry point.

    hvlab run --scenario <id> --config <file> --out <dir> [--workers k]
    hvlab fdll-verify --potential coulomb --n 3 --out report.csv

Exit status: 0 all verdicts pass, 1 a verdict failed, 2 configuration or
output error, 3 numeric failure.  Errors print one ``hvlab: error=<kind>
reason=<text>`` line on stderr.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
import warnings

from .core import AccuracyWarning, CapabilityError, ConfigurationError, GridIncompatibilityError, HVLabError, load_config
from .report import emit_report
from .scenarios import SCENARIOS, run_scenario

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fail(kind: str, reason: str, code: int) -> int:
    reason = " ".join(str(reason).split())
    print(f"hvlab: error={kind} reason={reason}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvlab", description="Hartree/Vlasov semiclassical experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named scenario")
    run.add_argument("--scenario", required=True, choices=SCENARIOS)
    run.add_argument("--config", default=None, help="INI file (sections run, grid, potential, initial, diagnostics, output)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--no-figures", action="store_true")

    fd = sub.add_parser("fdll-verify", help="indicator-reconstruction check for a radial potential")
    fd.add_argument("--potential", default="coulomb")
    fd.add_argument("--n", type=int, default=3)
    fd.add_argument("--a", type=float, default=None)
    fd.add_argument("--mu", type=float, default=None)
    fd.add_argument("--eps", type=float, default=None)
    fd.add_argument("--out", required=True, help="CSV path")
    fd.add_argument("--no-figures", action="store_true")
    return parser


def _check_writable(out_dir: str) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir):
            pass
    except OSError as exc:
        raise ConfigurationError(f"output path {out_dir} is not writable: {exc}") from None


def _execute(args) -> int:
    if args.command == "fdll-verify":
        pot = {"name": args.potential}
        for key in ("a", "mu", "eps"):
            if getattr(args, key) is not None:
                pot[key] = getattr(args, key)
        cfg = {"run": {"d": args.n}, "potential": pot}
        scenario = "fdll-verify"
        out_dir = os.path.dirname(os.path.abspath(args.out))
        workers = None
    else:
        cfg = load_config(args.config)
        scenario = args.scenario
        out_dir = args.out
        workers = args.workers
        if workers is not None and workers < 1:
            raise ConfigurationError("--workers must be >= 1")
    _check_writable(out_dir)

    with warnings.catch_warnings():
        warnings.simplefilter("default", AccuracyWarning)
        result = run_scenario(scenario, cfg, workers)

    inputs = {"scenario": scenario, "config": cfg}
    try:
        emit_report(result, out_dir, inputs, figures=not args.no_figures)
        if args.command == "fdll-verify":
            produced = os.path.join(out_dir, "fdll_verify.csv")
            if os.path.abspath(args.out) != produced:
                shutil.move(produced, args.out)
    except OSError as exc:
        raise ConfigurationError(f"cannot write report to {out_dir}: {exc}") from None

    failed = sorted(k for k, v in result.verdicts.items() if not v)
    if failed:
        return _fail("verdict", f"scenario {scenario} failed: {','.join(failed)}", EXIT_VERDICT)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _execute(args)
    except (ConfigurationError, CapabilityError, GridIncompatibilityError) as exc:
        return _fail("configuration", exc, EXIT_CONFIG)
    except HVLabError as exc:
        return _fail("numeric", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC)
    except (ArithmeticError, ValueError) as exc:
        return _fail("numeric", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
