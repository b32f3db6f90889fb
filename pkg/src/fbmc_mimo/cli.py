"""Command-line experiment runner.

Subcommands::

    fbmc-mimo run      --config cfg.json --out results/
    fbmc-mimo sweep    --config cfg.json --axis N --values 32,64,128 --out results/
    fbmc-mimo validate --config cfg.json

Every run writes ``trials.csv`` (one row per trial and user), ``summary.csv``
(one row per configuration) and ``manifest.json`` (config echo, seed, version).
Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .config import NUMERIC_AXES, ConfigError, ScenarioConfig
from .simulation import NumericalFailure, ScenarioResult, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# short axis names accepted by ``sweep``
AXIS_ALIASES = {
    "N": "num_antennas",
    "N_AP": "num_aps",
    "K": "num_users",
    "M": "num_subcarriers",
    "Q": "antennas_per_ap",
    "L_FSP": "fsp_length",
    "kappa": "overlap",
}


def resolve_axis(axis: str) -> str:
    name = AXIS_ALIASES.get(axis, axis)
    if name not in NUMERIC_AXES:
        known = sorted(set(NUMERIC_AXES) | set(AXIS_ALIASES))
        raise ConfigError(f"unknown sweep axis {axis!r}; numeric axes are {', '.join(known)}")
    return name


def parse_values(name: str, text: str) -> list:
    """Comma-separated values cast to the type of config field ``name``."""
    kind = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}[name]
    cast = int if kind == "int" else float
    try:
        values = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse values {text!r} for {name} ({kind})") from None
    if not values:
        raise ConfigError("--values is empty")
    return values


def _parse_override(item: str) -> tuple:
    key, sep, raw = item.partition("=")
    if not sep:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_config(args) -> ScenarioConfig:
    """Config file fields, then ``--set`` overrides, then the dedicated flags."""
    data = {}
    if args.config:
        data = ScenarioConfig.load(args.config).to_dict()
    for item in args.set or []:
        key, value = _parse_override(item)
        data[key] = value
    for flag in ("seed", "trials", "threads"):
        value = getattr(args, flag, None)
        if value is not None:
            data[flag] = value
    if getattr(args, "case", None):
        data["case"] = args.case
    return ScenarioConfig.from_dict(data)


def trial_rows(result: ScenarioResult, extra: dict | None = None) -> list:
    """One dict per (trial, user)."""
    rows = []
    schemes = result.schemes()
    for t, trial in enumerate(result.trials):
        for k in range(result.config.num_users):
            row = dict(extra or {})
            row["trial"] = t
            row["user"] = k
            for s in schemes:
                row[f"sinr_db_{s}"] = float(trial.sinr_db[s][k])
                row[f"sir_db_{s}"] = float(trial.sir_db[s][k])
            if trial.ap_counts is not None:
                row["serving_aps"] = int(trial.ap_counts[k])
            rows.append(row)
    return rows


def write_csv(path: Path, rows: list) -> None:
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def write_manifest(path: Path, cfg: ScenarioConfig, **extra) -> None:
    manifest = {"version": __version__, "seed": cfg.seed, "config": cfg.to_dict(), **extra}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_dict(json.loads(Path(path).read_text())["config"])


def cmd_run(args) -> int:
    cfg = build_config(args)
    result = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trials.csv", trial_rows(result))
    write_csv(out / "summary.csv", [result.summary()])
    write_manifest(out / "manifest.json", cfg)
    for key, value in result.summary().items():
        print(f"{key}: {value:.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    name = resolve_axis(args.axis)
    values = parse_values(name, args.values)
    configs = [cfg.replace(**{name: v}) for v in values]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, trials = [], []
    for value, point in zip(values, configs):
        result = run_scenario(point)
        summary.append({args.axis: value, **result.summary()})
        trials.extend(trial_rows(result, {args.axis: value}))
        print(", ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in summary[-1].items()))
    write_csv(out / "summary.csv", summary)
    write_csv(out / "trials.csv", trials)
    write_manifest(out / "manifest.json", cfg, axis=name, values=values)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = build_config(args)
    print(cfg.to_json())
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbmc-mimo", description="FBMC-OQAM massive MIMO downlink simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--config", help="JSON scenario file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field (JSON value)")
        p.add_argument("--case", choices=["i", "ii", "iii", "iv", "v"], help="named imperfection case")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--threads", type=int)
        if with_out:
            p.add_argument("--out", default="results", help="output directory")

    common(sub.add_parser("run", help="run one scenario"))
    sweep = sub.add_parser("sweep", help="run a scenario over values of one numeric field")
    common(sweep)
    sweep.add_argument("--axis", required=True, help="config field or alias (N, N_AP, K, M, Q, L_FSP)")
    sweep.add_argument("--values", required=True, help="comma-separated values; write --values=-20,-10 when the first is negative")
    common(sub.add_parser("validate", help="check a config and print it normalized"), with_out=False)
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
