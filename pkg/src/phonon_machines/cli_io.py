"""Configuration parsing, run orchestration, and bit-stable data output.

Configs are strict JSON: unknown keys are rejected (numeric keys carry
their unit in the key name, e.g. ``t_merge_ms``), and validation reports
every violation at once.  Outputs are deterministic: CSV numbers carry 17
significant digits so files from identical configs are byte-identical and
round-trip exactly.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .gaussian import TOLERANCES, InvariantViolation
from .protocols import (MachineLayout, OttoConfig, RunRecord, SubsystemSpec,
                        ValveConfig, cooling_report, run_anomalous, run_merge,
                        run_otto, run_piston_bath, run_piston_stroke)
from .verification import run_all_checks

__all__ = ["ConfigError", "RunConfig", "parse_config", "write_outputs",
           "cli_main", "main", "config_schema"]


class ConfigError(ValueError):
    """Invalid configuration; carries the full list of violations."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


# --------------------------------------------------------------------------
# Schema


@dataclass(frozen=True)
class _Field:
    type: type
    default: object = None
    required: bool = False
    positive: bool = False
    non_negative: bool = False
    maximum: float | None = None
    choices: tuple | None = None


_SUBSYSTEM_SCHEMA = {
    "role": _Field(str, required=True),
    "length_um": _Field(float, required=True, positive=True),
    "temperature_nk": _Field(float, required=True, positive=True),
    "profile_kind": _Field(str, "erf_box",
                           choices=("homogeneous", "erf_box", "trapeze")),
    "peak_density_per_um": _Field(float, 100.0, positive=True),
    "edge_width_um": _Field(float, 4.0, positive=True),
    "edge_floor_fraction": _Field(float, 0.5, positive=True, maximum=1.0),
}

_LAYOUT_SCHEMA = {
    "dz_um": _Field(float, 0.5, positive=True),
    "sound_speed_um_per_ms": _Field(float, 2.0, positive=True),
    "tunnel_coupling_j_hz": _Field(float, 0.01, non_negative=True),
    "subsystems": _Field(list, required=True),
}

_NUMERICS_SCHEMA = {
    "dt_max_ms": _Field(float, 0.05, positive=True),
    "frame_stride": _Field(int, 20, positive=True),
    "validate_frames": _Field(bool, True),
}

_PROTOCOL_SCHEMAS = {
    "merge": {
        "t_merge_ms": _Field(float, 40.0, non_negative=True),
        "t_hold_ms": _Field(float, 0.0, non_negative=True),
        "t_split_ms": _Field(float, 0.0, non_negative=True),
        "decorrelate_on_split": _Field(bool, True),
        "bulk_fraction": _Field(float, 0.5, positive=True, maximum=1.0),
    },
    "piston": {
        "compression_ratio": _Field(float, 0.5, positive=True, maximum=1.0),
        "t_comp_ms": _Field(float, 15.0, positive=True),
    },
    "piston_bath": {
        "compression_ratio": _Field(float, 0.5, positive=True, maximum=1.0),
        "t_comp_ms": _Field(float, 15.0, positive=True),
        "t_merge_ms": _Field(float, 20.0, non_negative=True),
        "t_hold_ms": _Field(float, 0.0, non_negative=True),
        "t_split_ms": _Field(float, 20.0, non_negative=True),
    },
    "otto": {
        "t_comp_ms": _Field(float, 15.0, non_negative=True),
        "t_merge_ms": _Field(float, 20.0, non_negative=True),
        "t_split_ms": _Field(float, 20.0, non_negative=True),
        "t_hold_ms": _Field(float, 0.0, non_negative=True),
        "compression_ratio": _Field(float, 0.5, positive=True, maximum=1.0),
        "n_cycles": _Field(int, 3, non_negative=True),
        "reset_bath_and_piston": _Field(bool, False),
        "decorrelate_on_split": _Field(bool, True),
    },
    "anomalous": {
        "t_merge_ms": _Field(float, 60.0, non_negative=True),
        "t_hold_ms": _Field(float, 240.0, non_negative=True),
        "t_split_ms": _Field(float, 60.0, non_negative=True),
    },
    "oracle_check": {},
}

_TOP_SCHEMA = {
    "protocol": _Field(str, required=True,
                       choices=tuple(_PROTOCOL_SCHEMAS) ),
    "output_dir": _Field(str, None),
    "layout": _Field(dict, None),
    "numerics": _Field(dict, {}),
    **{name: _Field(dict, {}) for name in _PROTOCOL_SCHEMAS if name != "oracle_check"},
}


def config_schema() -> dict:
    """The config schema as plain data (types, defaults, constraints)."""

    def render(schema: dict) -> dict:
        out = {}
        for key, f in schema.items():
            entry: dict = {"type": f.type.__name__}
            if f.required:
                entry["required"] = True
            elif f.default is not None or f.type in (str, dict):
                entry["default"] = f.default
            if f.positive:
                entry["exclusive_minimum"] = 0
            if f.non_negative:
                entry["minimum"] = 0
            if f.maximum is not None:
                entry["maximum"] = f.maximum
            if f.choices:
                entry["choices"] = list(f.choices)
            out[key] = entry
        return out

    return {
        "schema_version": 1,
        "top_level": render(_TOP_SCHEMA),
        "layout": render(_LAYOUT_SCHEMA),
        "layout.subsystems[]": render(_SUBSYSTEM_SCHEMA),
        "numerics": render(_NUMERICS_SCHEMA),
        "protocols": {name: render(schema)
                      for name, schema in _PROTOCOL_SCHEMAS.items()},
    }


def _check_section(data: dict, schema: dict, path: str,
                   violations: list[str]) -> dict:
    """Validate one mapping against its schema; returns resolved values."""
    resolved = {}
    if not isinstance(data, dict):
        violations.append(f"{path}: expected an object")
        return resolved
    for key in data:
        if key not in schema:
            suffixed = [s for s in schema if s.startswith(key + "_")]
            if suffixed:
                violations.append(
                    f"{path}.{key}: unknown key; numeric keys carry unit "
                    f"suffixes (did you mean {suffixed[0]!r}?)")
            else:
                violations.append(f"{path}.{key}: unknown key")
    for key, f in schema.items():
        if key in data:
            value = data[key]
            if f.type is float and isinstance(value, int) \
                    and not isinstance(value, bool):
                value = float(value)
            if f.type is float and isinstance(value, float) \
                    and not math.isfinite(value):
                violations.append(f"{path}.{key}: must be finite")
                continue
            if not isinstance(value, f.type) or isinstance(value, bool) != (f.type is bool):
                violations.append(
                    f"{path}.{key}: expected {f.type.__name__}, "
                    f"got {type(value).__name__}")
                continue
            if f.positive and not value > 0:
                violations.append(f"{path}.{key}: must be > 0")
                continue
            if f.non_negative and value < 0:
                violations.append(f"{path}.{key}: must be >= 0")
                continue
            if f.maximum is not None and value > f.maximum:
                violations.append(f"{path}.{key}: must be <= {f.maximum}")
                continue
            if f.choices and value not in f.choices:
                violations.append(
                    f"{path}.{key}: must be one of {sorted(f.choices)}")
                continue
            resolved[key] = value
        elif f.required:
            violations.append(f"{path}.{key}: missing required key")
        else:
            resolved[key] = f.default
    return resolved


@dataclass
class RunConfig:
    """A fully validated run: protocol, machine layout, numeric controls."""

    protocol: str
    layout: MachineLayout | None
    params: dict
    numerics: dict
    output_dir: str | None
    resolved: dict


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; raises ConfigError listing every
    violation, not just the first."""
    violations: list[str] = []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected an object"])

    top = _check_section(data, _TOP_SCHEMA, "config", violations)
    protocol = top.get("protocol")
    params: dict = {}
    layout_resolved: dict = {}
    subsystems: list[dict] = []

    if protocol and protocol in _PROTOCOL_SCHEMAS:
        params = _check_section(data.get(protocol, {}),
                                _PROTOCOL_SCHEMAS[protocol], protocol,
                                violations)
        for section in _PROTOCOL_SCHEMAS:
            if section != protocol and section in data and data[section]:
                violations.append(
                    f"config.{section}: section does not match protocol "
                    f"{protocol!r}")

    needs_layout = protocol != "oracle_check"
    if needs_layout:
        if "layout" not in data or data.get("layout") is None:
            violations.append("config.layout: missing required key")
        else:
            layout_resolved = _check_section(data["layout"], _LAYOUT_SCHEMA,
                                             "layout", violations)
            raw_subs = data["layout"].get("subsystems")
            if isinstance(raw_subs, list) and raw_subs:
                for i, sub in enumerate(raw_subs):
                    subsystems.append(_check_section(
                        sub, _SUBSYSTEM_SCHEMA, f"layout.subsystems[{i}]",
                        violations))
            elif raw_subs is not None:
                violations.append("layout.subsystems: expected a non-empty list")

    numerics = _check_section(data.get("numerics", {}), _NUMERICS_SCHEMA,
                              "numerics", violations)
    if violations:
        raise ConfigError(violations)

    layout = None
    if needs_layout:
        try:
            layout = MachineLayout(
                subsystems=[SubsystemSpec(
                    role=s["role"], length_um=s["length_um"],
                    temperature_nk=s["temperature_nk"],
                    profile_kind=s["profile_kind"],
                    peak_density_per_um=s["peak_density_per_um"],
                    edge_width_um=s["edge_width_um"],
                    edge_floor=s["edge_floor_fraction"]) for s in subsystems],
                dz_um=layout_resolved["dz_um"],
                sound_speed_um_ms=layout_resolved["sound_speed_um_per_ms"],
                j_hz=layout_resolved["tunnel_coupling_j_hz"])
        except (ValueError, KeyError) as exc:
            raise ConfigError([f"layout: {exc}"]) from exc

    resolved = {
        "protocol": protocol,
        "output_dir": top.get("output_dir"),
        "numerics": numerics,
    }
    if needs_layout:
        resolved["layout"] = {**{k: v for k, v in layout_resolved.items()
                                 if k != "subsystems"},
                              "subsystems": subsystems}
    if params:
        resolved[protocol] = params
    return RunConfig(protocol=protocol, layout=layout, params=params,
                     numerics=numerics, output_dir=top.get("output_dir"),
                     resolved=resolved)


# --------------------------------------------------------------------------
# Output writers


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_outputs(record: RunRecord, out_dir: str | Path, resolved: dict,
                  extras: dict | None = None) -> list[Path]:
    """Write energy_density.csv, subsystems.csv and summary.json.

    Energy densities are normalized to the median initial per-um value;
    row order is deterministic and floats carry 17 significant digits.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    paths = []
    ref = record.initial_bulk_energy_per_um() if record.frames else math.nan

    path = out / "energy_density.csv"
    try:
        with path.open("w", newline="") as fh:
            fh.write("time_ms,pixel,z_um,energy_rel\n")
            for frame in record.frames:
                z = np.cumsum(frame.pixel_width_um) - 0.5 * frame.pixel_width_um
                rel = frame.energy / frame.pixel_width_um / ref
                t = _fmt(frame.time_ms)
                for p in range(frame.energy.size):
                    fh.write(f"{t},{p},{_fmt(z[p])},{_fmt(rel[p])}\n")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    paths.append(path)

    path = out / "subsystems.csv"
    with path.open("w", newline="") as fh:
        fh.write("time_ms,subsystem,energy_rel,energy_J,rel_entropy,"
                 "temp_fit_nK,mutual_info\n")
        names = record.subsystem_names
        e0 = {n: record.energy_j[n][0] for n in names} if record.times_ms else {}
        for i, t in enumerate(record.times_ms):
            for j, name in enumerate(names):
                e = record.energy_j[name][i]
                mi = record.mutual_info[i] if j == 0 else math.nan
                fh.write(",".join((
                    _fmt(t), name, _fmt(e / e0[name]), _fmt(e),
                    _fmt(record.rel_entropy[name][i]),
                    _fmt(record.temp_fit_nk[name][i]), _fmt(mi))) + "\n")
    paths.append(path)

    summary = {
        "version": __version__,
        "config": resolved,
        "tolerances": dict(TOLERANCES),
        "per_cycle_extracted_j": record.per_cycle_extracted_j()
        if record.cycle_boundaries_ms else [],
        "cycle_boundaries_ms": list(record.cycle_boundaries_ms),
        "flow_reversal_intervals_ms": [list(iv) for iv in
                                       record.reversal_intervals_ms],
        "series": {k: list(v) for k, v in sorted(record.series.items())},
    }
    if extras:
        summary.update(extras)
    path = out / "summary.json"
    with path.open("w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    paths.append(path)
    return paths


# --------------------------------------------------------------------------
# Protocol dispatch


def _execute(cfg: RunConfig) -> tuple[RunRecord | None, dict]:
    p = cfg.params
    num = cfg.numerics
    common = dict(frame_stride=num["frame_stride"], dt_max_ms=num["dt_max_ms"],
                  validate_frames=num["validate_frames"])
    extras: dict = {}
    if cfg.protocol == "merge":
        record = run_merge(cfg.layout, p["t_merge_ms"], p["t_hold_ms"],
                           p["t_split_ms"],
                           decorrelate_on_split=p["decorrelate_on_split"],
                           bulk_fraction=p["bulk_fraction"], **common)
    elif cfg.protocol == "piston":
        record = run_piston_stroke(cfg.layout, p["compression_ratio"],
                                   p["t_comp_ms"], **common)
    elif cfg.protocol == "piston_bath":
        valve = ValveConfig(p["t_merge_ms"], p["t_hold_ms"], p["t_split_ms"])
        record = run_piston_bath(cfg.layout, p["compression_ratio"],
                                 p["t_comp_ms"], valve, **common)
    elif cfg.protocol == "otto":
        otto = OttoConfig(
            t_comp_ms=p["t_comp_ms"], t_merge_ms=p["t_merge_ms"],
            t_split_ms=p["t_split_ms"], t_hold_ms=p["t_hold_ms"],
            compression_ratio=p["compression_ratio"], n_cycles=p["n_cycles"],
            reset_bath_and_piston=p["reset_bath_and_piston"],
            decorrelate_on_split=p["decorrelate_on_split"])
        record = run_otto(cfg.layout, otto, **common)
        system = cfg.layout.subsystems[cfg.layout.index_of("system")]
        extras["cooling_report"] = cooling_report(
            record, system.temperature_nk, system.peak_density_per_um,
            system.peak_density_per_um)
    elif cfg.protocol == "anomalous":
        record = run_anomalous(cfg.layout, p["t_merge_ms"], p["t_hold_ms"],
                               p["t_split_ms"], **common)
    elif cfg.protocol == "oracle_check":
        results = run_all_checks()
        extras["oracle_checks"] = [
            {"name": r.name, "passed": r.passed, "measured": r.measured,
             "tolerance": r.tolerance} for r in results]
        return None, extras
    else:  # pragma: no cover - schema forbids it
        raise ConfigError([f"unknown protocol {cfg.protocol!r}"])
    return record, extras


# --------------------------------------------------------------------------
# CLI


def cli_main(argv: list[str] | None = None) -> int:
    """Entry point; returns 0 on success, 1 on validation/configuration
    errors, 2 when a physics invariant is violated during a run."""
    parser = argparse.ArgumentParser(
        prog="phonon-machines",
        description="Simulate thermal-machine protocols on 1D quasi-condensates")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a protocol from a JSON config")
    run_p.add_argument("config", help="path to the JSON run configuration")
    run_p.add_argument("--out", help="output directory (overrides config)")
    run_p.add_argument("--frames", type=int, metavar="N",
                       help="emit a frame every N Trotter steps")
    run_p.add_argument("--quiet", action="store_true")
    check_p = sub.add_parser("oracle-check",
                             help="compare lattice results against closed forms")
    check_p.add_argument("--quiet", action="store_true")
    sub.add_parser("schema", help="print the config schema as JSON")

    args = parser.parse_args(argv)

    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2, sort_keys=True))
        return 0

    if args.command == "oracle-check":
        results = run_all_checks()
        if not args.quiet:
            for r in results:
                print(r.line())
        return 0 if all(r.passed for r in results) else 1

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}",
              file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1

    if args.frames is not None:
        if args.frames < 1:
            print("config error: --frames must be positive", file=sys.stderr)
            return 1
        cfg.numerics["frame_stride"] = args.frames
        cfg.resolved["numerics"]["frame_stride"] = args.frames
    out_dir = args.out or cfg.output_dir or "."

    if not args.quiet:
        print(json.dumps(cfg.resolved, indent=2, sort_keys=True))

    try:
        record, extras = _execute(cfg)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc.invariant}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1

    if record is not None:
        paths = write_outputs(record, out_dir, cfg.resolved, extras)
    else:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "summary.json"
        with path.open("w") as fh:
            json.dump({"version": __version__, "config": cfg.resolved,
                       **extras}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths = [path]
        if "oracle_checks" in extras \
                and not all(c["passed"] for c in extras["oracle_checks"]):
            return 1
    if not args.quiet:
        for p in paths:
            print(f"wrote {p}")
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
