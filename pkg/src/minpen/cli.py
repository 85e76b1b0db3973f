"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 no jump detected, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import platform
import sys
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .calibration import CGrid, calibrate, check_assumptions
from .exceptions import InputError, NoJumpError, NumericalError
from .io import read_regression_csv, write_csv, write_json
from .kernels import KernelSpec, build_kernel_matrix, load_kernel_csv
from .simulation import (
    SimConfig,
    concentration_diagnostics,
    record_rows,
    run_comparison_experiment,
    run_curves_experiment,
    run_jump_experiment,
)
from .smoothers import RidgePath

EXIT_OK, EXIT_INPUT, EXIT_NO_JUMP, EXIT_NUMERICAL = 0, 2, 3, 4


def _versions():
    return {"minpen": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def _manifest(out: Path, command: str, config: dict, **extra):
    payload = {
        "command": command,
        "config": config,
        "versions": _versions(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    payload.update(extra)
    write_json(out / "manifest.json", payload)


def _load_config(args) -> SimConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    elif "seed" not in data:
        raise InputError("a seed is required: pass --seed or set 'seed' in the config")
    if args.threads is not None:
        data["threads"] = args.threads
    for key in ("methods", "trials"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    try:
        return SimConfig.from_dict(data)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def _config_payload(cfg: SimConfig) -> dict:
    d = cfg.to_dict()
    d.pop("threads")  # never part of the reproducible payload
    return d


def cmd_calibrate(args) -> int:
    out = Path(args.out)
    header, X, Y = read_regression_csv(args.data)
    n = Y.shape[0]
    if n < 10:
        raise InputError(f"need at least 10 observations, got {n}")
    if args.kernel_csv:
        K = load_kernel_csv(args.kernel_csv)
        if K.shape[0] != n:
            raise InputError(f"kernel is {K.shape[0]}x{K.shape[0]} but data has {n} rows")
        spec = KernelSpec("precomputed", matrix=K)
    else:
        spec = KernelSpec(args.kernel)
    family = RidgePath.from_kernel(build_kernel_matrix(spec, X))
    config = {"data": str(args.data), "kernel": spec.kind, "rule": args.rule, "xi": args.xi, "seed": args.seed,
              "n": n, "d": int(X.shape[1]), "columns": header}
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            result = calibrate(family, Y, CGrid.default(Y, n), rule=args.rule, xi=args.xi)
        except NoJumpError as exc:
            if exc.path is not None:
                write_csv(out / "path.csv", exc.path.rows(), ["C", "lambda_index", "df"])
            _manifest(out, "calibrate", config, status="no jump detected")
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NO_JUMP
    for msg in result.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    payload = result.to_dict()
    payload["assumptions"] = check_assumptions(family).to_dict()
    payload["assumptions"]["kappa_hat"] = "unverifiable"
    write_json(out / "calibration.json", payload)
    write_csv(out / "path.csv", result.path.rows(), ["C", "lambda_index", "df"])
    fitted = family.fit(result.selected_index, Y)
    write_csv(out / "fitted.csv", ({"index": i, "y": y, "fitted": f} for i, (y, f) in enumerate(zip(Y, fitted))))
    _manifest(out, "calibrate", config, status="ok")
    print(f"sigma2_hat={result.sigma2_hat:.6g} rule={result.rule_used} df_selected={result.df_selected:.6g}")
    return EXIT_OK


def cmd_jump(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_jump_experiment(cfg)
    write_csv(out / "jump.csv", rows)
    _manifest(out, "jump", _config_payload(cfg), seeds=[cfg.seed],
              notes=["mkl-gd optimizes eta continuously by projected gradient at n*lambda = 1; "
                     "this variant is outside the finite-family guarantees"])
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, records = run_comparison_experiment(cfg)
    write_csv(out / "comparison.csv", summary)
    write_csv(out / "records.csv", record_rows(records))
    reference = "oracle" if cfg.setting == "single" else "mallows-known-sigma2"
    _manifest(out, "compare", _config_payload(cfg), seeds=sorted({r.seed for r in records}),
              metric=f"true risk divided by the {reference} risk; failures excluded from means")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = concentration_diagnostics(cfg.diag_n, cfg.trials, cfg.x_values, cfg.seed, cfg.thetas)
    write_csv(out / "diagnostics.csv", rows)
    _manifest(out, "diagnose", _config_payload(cfg), seeds=[cfg.seed])
    return EXIT_OK


def cmd_curves(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "curves.csv", run_curves_experiment(cfg))
    _manifest(out, "curves", _config_payload(cfg), seeds=[cfg.seed])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minpen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with flat configuration keys")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker threads (default: all cores)")

    p = sub.add_parser("calibrate", help="calibrate kernel ridge on a CSV data set")
    p.add_argument("data", help="CSV with a header row, feature columns, response last")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--kernel", default="exponential-product", choices=["exponential-product", "linear"])
    p.add_argument("--kernel-csv", help="precomputed n x n kernel matrix (no header)")
    p.add_argument("--rule", default="auto", choices=["auto", "window", "relaxed-window", "max-jump"])
    p.add_argument("--xi", type=float, default=0.05)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("jump", help="selected df vs penalty strength")
    common(p)
    p.set_defaults(func=cmd_jump)

    p = sub.add_parser("compare", help="compare selection methods over replications")
    common(p)
    p.add_argument("--methods", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diagnose", help="Monte-Carlo check of the Gaussian concentration bounds")
    common(p)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("curves", help="bias, variance and penalty curves over a ridge path")
    common(p)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoJumpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_JUMP
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
