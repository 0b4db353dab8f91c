"""Command-line interface: ``suscept scan`` and ``suscept validate``.

Configuration comes from a flat key = value file plus command-line flag
overrides; flags win.  Exit codes: 0 on success, 1 if some mu points
failed or a validation check did not pass, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .scan import (
    ConfigError,
    DEFAULT_EMIT,
    DEFAULT_MU_GRID,
    EMIT_CHOICES,
    OracleCheck,
    ScanConfig,
    load_config_file,
    run_scan,
    run_validation,
)

_CONFIG_KEYS = ("mu", "order", "rtol", "atol", "out", "emit", "jobs")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="suscept",
        description=(
            "Structural susceptibility of the van der Pol oscillator: "
            "eigen-spectra of the trajectory-change Hessian under polynomial "
            "perturbations of the dynamics, scanned over the time-scale "
            "parameter mu."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="run a mu scan and write result files")
    scan.add_argument("--config", help="flat key = value configuration file")
    scan.add_argument("--mu", help="comma-separated mu values (strictly increasing)")
    scan.add_argument("--order", type=int, help="polynomial order of the family")
    scan.add_argument("--rtol", type=float, help="relative integration tolerance")
    scan.add_argument("--atol", type=float, help="absolute integration tolerance")
    scan.add_argument("--out", help="output directory")
    scan.add_argument("--jobs", type=int, help="worker processes (default: CPUs)")
    scan.add_argument(
        "--emit",
        help=f"comma-separated subset of {','.join(EMIT_CHOICES)}",
    )

    val = sub.add_parser("validate", help="run the independent-oracle checks")
    val.add_argument("--config", help="flat key = value configuration file")
    return parser


def _merge_config(args: argparse.Namespace) -> ScanConfig:
    raw: dict[str, str] = {}
    if args.config:
        raw.update(load_config_file(args.config))
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(
            f"config file: unknown keys {sorted(unknown)}; valid keys are {_CONFIG_KEYS}"
        )
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag if isinstance(flag, str) else repr(flag)

    kwargs: dict = {}
    try:
        if "mu" in raw:
            kwargs["mu_values"] = tuple(float(v) for v in raw["mu"].split(","))
    except ValueError as exc:
        raise ConfigError(f"mu: {exc}") from exc
    for key, target, cast in (
        ("order", "order", int),
        ("rtol", "rtol", float),
        ("atol", "atol", float),
        ("jobs", "jobs", int),
    ):
        if key in raw:
            try:
                kwargs[target] = cast(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
    if "out" in raw:
        kwargs["output_dir"] = raw["out"]
    if "emit" in raw:
        kwargs["emit"] = tuple(v.strip() for v in raw["emit"].split(",") if v.strip())
    return ScanConfig(**kwargs)


def _print_checks(checks: Sequence[OracleCheck]) -> None:
    name_width = max(len(c.name) for c in checks)
    header = (
        f"{'check':<{name_width}}  {'measured':>13}  {'reference':>13}  "
        f"{'error':>9}  {'tol':>7}  status"
    )
    print(header)
    print("-" * len(header))
    for c in checks:
        print(
            f"{c.name:<{name_width}}  {c.measured:>13.6e}  {c.reference:>13.6e}  "
            f"{c.error:>9.2e}  {c.tolerance:>7.0e}  {'PASS' if c.passed else 'FAIL'}"
        )
    n_pass = sum(c.passed for c in checks)
    print(f"overall: {'PASS' if n_pass == len(checks) else 'FAIL'} ({n_pass}/{len(checks)})")


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _merge_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.command == "scan":
        report = run_scan(config)
        for record in report.records:
            if record.ok:
                print(
                    f"mu={record.mu:<10.6g} period={record.period:.9g} "
                    f"spread={record.spread:.3e} ({record.wall_time:.1f} s)"
                )
            else:
                print(f"mu={record.mu:<10.6g} FAILED: {record.error}")
        print(
            f"scan finished in {report.wall_time:.1f} s, "
            f"{len(report.records) - report.n_failed}/{len(report.records)} mu points ok, "
            f"outputs in {config.output_dir}"
        )
        return report.exit_code

    if args.command == "validate":
        checks = run_validation(order=config.order, settings=config.settings())
        _print_checks(checks)
        return 0 if all(c.passed for c in checks) else 1

    raise AssertionError(f"unhandled command {args.command!r}")  # pragma: no cover


if __name__ == "__main__":
    raise SystemExit(main())
