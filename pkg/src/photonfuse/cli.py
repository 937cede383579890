"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or unwritable output, 2 failed verification.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from .analysis import DEFAULT_GRID, parse_grid, rows_to_csv, rows_to_json, sweep, to_jsonable
from .protocol import ProtocolConfig, protocol_report
from .sources import (
    EmissionParams,
    LossParams,
    emission_from_loss,
    loss_from_emission,
    params_from_mapping,
)
from .verify import run_checks, summary

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2
TOL_ENV = "PHOTONFUSE_TOL"
SOURCE_KEYS = ("eta_s", "eta_a", "eta_b", "f_c", "f_a", "f_b")


class UsageError(ValueError):
    pass


def _add_common(p: argparse.ArgumentParser, fmt_default: Optional[str]) -> None:
    src = p.add_argument_group("source (give one parameterization)")
    for key in SOURCE_KEYS:
        src.add_argument("--" + key.replace("_", "-"), dest=key, type=float, default=None)
    p.add_argument("--eta-d", dest="eta_d", type=float, default=None, help="detector efficiency (default 1)")
    p.add_argument("--config", help="JSON file with the same keys as the flags; flags win")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="output format" + (f" (default {fmt_default})" if fmt_default else " (default: table)"))
    p.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photonfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ghz", help="run the four-source fusion protocol and report the heralded state")
    _add_common(p, None)

    p = sub.add_parser("verify", help="run the self-check suite")
    _add_common(p, "json")
    p.add_argument("--tol", type=float, default=None, help=f"override every tolerance (env {TOL_ENV})")
    p.add_argument("--inject-pbs-tilt", dest="pbs_tilt", type=float, default=0.0, help=argparse.SUPPRESS)

    p = sub.add_parser("sweep", help="tabulate loss-tolerance thresholds over a grid")
    _add_common(p, "csv")
    p.add_argument("--grid", action="append", default=None,
                   help=f"'var=start:stop:step' or 'var=v1,v2'; repeatable (default {DEFAULT_GRID})")
    p.add_argument("--slow-path", dest="slow_path", action="store_true", default=None,
                   help="also fit the loss rate from a full simulation at every point")

    p = sub.add_parser("convert", help="convert between emission and loss parameterizations")
    _add_common(p, "json")
    return parser


def merged_config(args: argparse.Namespace) -> dict:
    """File config overlaid by explicit flags; source flags replace the file's source block."""
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
    if any(k in flags for k in SOURCE_KEYS):
        cfg = {k: v for k, v in cfg.items() if k not in SOURCE_KEYS}
    cfg.update(flags)
    return cfg


def _source(cfg: dict):
    return params_from_mapping({k: cfg.get(k) for k in SOURCE_KEYS})


def _emit(text: str, out: Optional[str]) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc


def _table(pairs) -> str:
    width = max(len(k) for k, _ in pairs)
    lines = []
    for k, v in pairs:
        shown = f"{v:.9g}" if isinstance(v, float) else str(v)
        lines.append(f"{k:<{width}}  {shown}")
    return "\n".join(lines)


def cmd_ghz(cfg: dict) -> int:
    pc = ProtocolConfig(_source(cfg), float(cfg.get("eta_d", 1.0)))
    report = protocol_report(pc)
    fmt = cfg.get("format")
    if fmt == "json":
        text = json.dumps(report, indent=2)
    else:
        scalars = [(k, report[k]) for k in ("p_success", "p_success_formula", "epsilon", "epsilon_formula",
                                            "ghz4_fidelity", "residual")]
        scalars += [(f"sector_weight[{k}]", w) for k, w in enumerate(report["sector_weights"])]
        patterns = sorted(report["patterns"].items())
        if fmt == "csv":
            text = rows_to_csv([{"quantity": k, "value": v} for k, v in scalars + patterns])
        else:
            text = _table(scalars) + "\n\n" + _table([(k, v) for k, v in patterns])
    _emit(text, cfg.get("out"))
    return EXIT_OK


def _tolerance(cfg: dict) -> Optional[float]:
    if cfg.get("tol") is not None:
        return float(cfg["tol"])
    env = os.environ.get(TOL_ENV)
    if env:
        try:
            return float(env)
        except ValueError as exc:
            raise UsageError(f"{TOL_ENV} must be a number, got {env!r}") from exc
    return None


def cmd_verify(cfg: dict) -> int:
    results = run_checks(tol=_tolerance(cfg), pbs_tilt=float(cfg.get("pbs_tilt", 0.0)))
    doc = summary(results)
    if cfg.get("format") == "csv":
        text = rows_to_csv(doc["checks"])
    else:
        text = json.dumps(doc, indent=2)
    _emit(text, cfg.get("out"))
    return EXIT_OK if doc["passed"] else EXIT_VERIFY


def cmd_sweep(cfg: dict) -> int:
    specs = cfg.get("grid") or [DEFAULT_GRID]
    if isinstance(specs, str):
        specs = [specs]
    grid: dict = {}
    for spec in specs:
        var, values = parse_grid(spec)
        if var in grid:
            raise UsageError(f"grid variable {var} given twice")
        grid[var] = values
    has_source = any(cfg.get(k) is not None for k in SOURCE_KEYS)
    base = _source(cfg) if has_source else LossParams()
    rows = sweep(grid, base=base, eta_d=float(cfg.get("eta_d", 1.0)), simulate=bool(cfg.get("slow_path")))
    text = rows_to_json(rows) if cfg.get("format") == "json" else rows_to_csv(rows)
    _emit(text, cfg.get("out"))
    return EXIT_OK


def cmd_convert(cfg: dict) -> int:
    src = _source(cfg)
    if isinstance(src, EmissionParams):
        emission, loss = src, loss_from_emission(src)
    else:
        emission, loss = emission_from_loss(src), src
    doc = {"emission": emission.as_dict(), "loss": loss.as_dict()}
    if cfg.get("format") == "csv":
        text = rows_to_csv([{**emission.as_dict(), **loss.as_dict()}])
    else:
        text = json.dumps(to_jsonable(doc), indent=2)
    _emit(text, cfg.get("out"))
    return EXIT_OK


COMMANDS = {"ghz": cmd_ghz, "verify": cmd_verify, "sweep": cmd_sweep, "convert": cmd_convert}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](merged_config(args))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
