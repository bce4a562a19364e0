"""Command-line front end.

    yudovich simulate       --config run.toml --out DIR
    yudovich check          [--config check.toml] [--manifest suite.json] [--jobs N] --out DIR
    yudovich kernel-report  --config kernel.toml --out DIR
    yudovich norms          --config norms.toml --out DIR
    yudovich farfield       --config farfield.toml --out DIR

Exit codes: 0 success, 1 configuration or input error (and failed checks),
2 when a simulation reaches the truncation buffer.  Every command writes a
``manifest.json`` that lists the files it produced with their SHA-256 digests;
nothing in the outputs depends on wall-clock time, so identical inputs give
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


from . import analysis
from .analysis import FieldSpec, build_field
from .biot_savart import velocity_from_vorticity
from .fields import Grid2D, ScalarField2D, VectorField2D, read_snapshot, write_snapshot
from .kernels import LambdaOutOfRange, decay_slope, envelope_constant, gamma_lambda
from .morrey import MorreyParams, TrustedRegionError, morrey_norm, radius_ladder
from .solver import SolverConfig, diagnostics_csv, simulate

log = logging.getLogger("yudovich")

OUTPUT_VERSION = 1


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# strict config schema
# --------------------------------------------------------------------------

_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}

SCHEMAS = {
    "simulate": {
        None: {"seed"},
        "grid": {"n", "L"},
        "scenario": {"kind", "params"},
        "solver": _SOLVER_KEYS,
        "output": {"record_times", "snapshots"},
    },
    "check": {
        None: set(),
        "check": {"manifest", "only", "calibrate"},
    },
    "kernel-report": {
        None: set(),
        "kernel": {"n", "L", "lambdas", "pad", "r_max"},
    },
    "norms": {
        None: set(),
        "norms": {"snapshot", "field", "p", "alpha", "trusted_radius", "r_min"},
    },
    "farfield": {
        None: set(),
        "farfield": {"initial", "final", "lambdas", "alpha", "pressure", "radius"},
    },
}

REQUIRED = {
    "simulate": {"grid": {"n", "L"}, "scenario": {"kind"}, "solver": {"dt", "t_end"}},
    "kernel-report": {"kernel": {"n", "L", "lambdas"}},
    "norms": {"norms": {"snapshot"}},
    "farfield": {"farfield": {"initial", "final", "lambdas"}},
}


def validate_config(cfg: dict, command: str) -> dict:
    schema = SCHEMAS[command]
    for key, val in cfg.items():
        if isinstance(val, dict):
            if key not in schema:
                raise ConfigError(f"unknown section [{key}]")
            extra = sorted(set(val) - schema[key])
            if extra:
                raise ConfigError(f"unknown key(s) in [{key}]: {', '.join(extra)}")
        elif key not in schema[None]:
            raise ConfigError(f"unknown top-level key {key!r}")
    for sec, keys in REQUIRED.get(command, {}).items():
        missing = sorted(keys - set(cfg.get(sec, {})))
        if missing:
            raise ConfigError(f"missing key(s) in [{sec}]: {', '.join(missing)}")
    return cfg


def load_config(path, command: str) -> tuple[dict, Path]:
    if path is None:
        return validate_config({}, command), Path.cwd()
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return validate_config(cfg, command), p.resolve().parent


def _resolve(base: Path, name) -> Path:
    q = Path(name)
    return q if q.is_absolute() else base / q


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


class Outputs:
    """Collects the files written by one command and emits the manifest."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[dict] = []

    def _record(self, rel: str, extra: dict | None = None) -> None:
        digest = hashlib.sha256((self.out / rel).read_bytes()).hexdigest()
        self.files.append({"path": rel, "sha256": digest, **(extra or {})})

    def text(self, rel: str, content: str, **extra) -> None:
        (self.out / rel).parent.mkdir(parents=True, exist_ok=True)
        with open(self.out / rel, "w", newline="") as fh:
            fh.write(content)
        self._record(rel, extra)

    def snapshot(self, rel: str, field, **extra) -> None:
        (self.out / rel).parent.mkdir(parents=True, exist_ok=True)
        write_snapshot(field, self.out / rel)
        self._record(rel, extra)

    def manifest(self, command: str, **body) -> None:
        doc = {"version": OUTPUT_VERSION, "command": command, **body, "files": self.files}
        with open(self.out / "manifest.json", "w") as fh:
            fh.write(analysis.to_json(doc) + "\n")


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def scenario_spec(cfg: dict) -> FieldSpec:
    sc = cfg["scenario"]
    params = dict(sc.get("params", {}))
    if sc["kind"] == "random_yudovich" and "seed" not in params:
        if "seed" not in cfg:
            raise ConfigError("random_yudovich needs a seed ([scenario.params] seed or top-level seed)")
        params["seed"] = int(cfg["seed"])
    try:
        return FieldSpec.from_dict({"kind": sc["kind"], "params": params})
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[scenario]: {exc}") from None


def cmd_simulate(cfg: dict, base: Path, out: Path, jobs: int) -> int:
    grid = Grid2D(int(cfg["grid"]["n"]), float(cfg["grid"]["L"]))
    spec = scenario_spec(cfg)
    try:
        config = SolverConfig(**cfg["solver"])
        field = build_field(spec, grid)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    opts = cfg.get("output", {})
    run = simulate(field.omega, config, record_times=opts.get("record_times", []))
    o = Outputs(out)
    if opts.get("snapshots", True):
        for k, (t, w) in enumerate(run.snapshots):
            o.snapshot(f"snapshots/omega_{k:04d}.yud", w, t=t)
    o.text("diagnostics.csv", diagnostics_csv(run))
    o.manifest(
        "simulate",
        config=cfg,
        scenario=spec.to_dict(),
        status=run.status,
        contaminated=run.contaminated,
        message=run.message,
        steps=run.steps,
        t_final=run.times()[-1],
    )
    if run.contaminated:
        log.error("run contaminated: %s (partial outputs in %s)", run.message, out)
        return 2
    return 0


def cmd_check(cfg: dict, base: Path, out: Path, jobs: int, manifest_path=None) -> int:
    sec = cfg.get("check", {})
    path = manifest_path or (sec.get("manifest") and _resolve(base, sec["manifest"]))
    try:
        m = analysis.load_manifest(path)
    except FileNotFoundError:
        raise ConfigError(f"suite manifest not found: {path}") from None
    except (json.JSONDecodeError, analysis.ManifestError, KeyError) as exc:
        raise ConfigError(f"bad suite manifest: {exc}") from None
    if sec.get("calibrate"):
        m["constants"] = {**m["constants"], **analysis.calibrate_suite(m)}
    only = sec.get("only")
    if only:
        unknown = sorted(set(only) - {c["claim_id"] for c in m.get("checks", [])})
        if unknown:
            raise ConfigError(f"unknown claim id(s): {', '.join(unknown)}")
    o = Outputs(out)
    if not m.get("checks") or (only is not None and not only):
        log.warning("suite contains no checks; nothing to do")
        o.manifest("check", constants=m.get("constants", {}), results={})
        return 0
    reports = analysis.run_suite(m, jobs=jobs, only=only)
    o.text("reports.json", analysis.to_json([r.to_dict() for r in reports]) + "\n")
    o.text("reports.csv", analysis.reports_csv(reports))
    results = {r.claim_id: r.status for r in reports}
    o.manifest("check", constants=m["constants"], results=results)
    bad = [r.claim_id for r in reports if not r.passed]
    for r in reports:
        print(f"{r.claim_id}: {r.status}")
    if bad:
        log.error("failing claims: %s", ", ".join(bad))
        return 1
    return 0


def cmd_kernel_report(cfg: dict, base: Path, out: Path, jobs: int) -> int:
    k = cfg["kernel"]
    grid = Grid2D(int(k["n"]), float(k["L"]))
    lams = [float(x) for x in k["lambdas"]]
    pad = int(k.get("pad", 4))
    r_max = k.get("r_max")
    rows = []
    for lam in lams:
        try:
            tab = gamma_lambda(grid, lam, pad=pad)
        except LambdaOutOfRange as exc:
            raise ConfigError(str(exc)) from None
        env = envelope_constant(tab, lam, r_max=r_max)
        try:
            slope = decay_slope(tab, lam)
        except LambdaOutOfRange:
            slope = None  # too few rings inside the table for a fit
        rows.append([lam, env, slope])
        del tab
    envs = [r[1] for r in rows]
    slopes = [r[2] for r in rows if r[2] is not None]
    summary = {"variation": max(envs) / min(envs), "max_slope": max(slopes) if slopes else None}
    o = Outputs(out)
    o.text("kernel_report.csv", _rows_csv(["lambda", "envelope_constant", "decay_slope"],
                                          [[repr(a), repr(b), "" if c is None else repr(c)] for a, b, c in rows]))
    o.text("kernel_report.json", analysis.to_json({"grid": {"n": grid.n, "L": grid.L}, "pad": pad,
                                                   "rows": rows, **summary}) + "\n")
    o.manifest("kernel-report", config=cfg, summary=summary)
    return 0


def _load_field(base: Path, name) -> ScalarField2D | VectorField2D:
    path = _resolve(base, name)
    try:
        return read_snapshot(path)
    except FileNotFoundError:
        raise ConfigError(f"snapshot not found: {path}") from None


def _as_velocity(f) -> VectorField2D:
    if isinstance(f, VectorField2D):
        return f
    return velocity_from_vorticity(f, check_support=False)


def cmd_norms(cfg: dict, base: Path, out: Path, jobs: int) -> int:
    sec = cfg["norms"]
    f = _load_field(base, sec["snapshot"])
    which = sec.get("field", "velocity")
    if which == "velocity":
        f = _as_velocity(f)
    elif which != "vorticity" or not isinstance(f, ScalarField2D):
        raise ConfigError("[norms] field must be 'velocity', or 'vorticity' for a scalar snapshot")
    p = float(sec.get("p", 2.0))
    alpha = float(sec.get("alpha", 0.0))
    tr = sec.get("trusted_radius", 0.75 * f.grid.L)
    try:
        rep = morrey_norm(f, MorreyParams(p, alpha), radius_ladder(f.grid, tr, r_min=float(sec.get("r_min", 1.0))),
                          trusted_radius=tr)
    except (TrustedRegionError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    o = Outputs(out)
    o.text("morrey.json", rep.to_json() + "\n")
    o.text("morrey.csv", rep.to_csv())
    o.manifest("norms", config=cfg, norm=rep.norm)
    return 0


def cmd_farfield(cfg: dict, base: Path, out: Path, jobs: int) -> int:
    sec = cfg["farfield"]
    u0 = _as_velocity(_load_field(base, sec["initial"]))
    ut = _as_velocity(_load_field(base, sec["final"]))
    lams = [float(x) for x in sec["lambdas"]]
    alpha = float(sec.get("alpha", 0.25))
    try:
        tab = analysis.farfield_diagnostic(ut, u0, lams, alpha, pressure=bool(sec.get("pressure", False)))
    except (ValueError, LambdaOutOfRange) as exc:
        raise ConfigError(str(exc)) from None
    body = {"lambdas": tab.lambdas, "velocity": tab.velocity, "decays": tab.decays()}
    rows = [[repr(l), repr(v), "", ""] for l, v in zip(tab.lambdas, tab.velocity)]
    if tab.pressure is not None:
        d = tab.pressure
        body["pressure"] = dataclasses.asdict(d)
        rows = [[repr(l), repr(v), repr(a), repr(b)] for l, v, a, b in zip(d.lambdas, tab.velocity, d.I1_sup, d.I2_ball)]
    o = Outputs(out)
    o.text("farfield.csv", _rows_csv(["lambda", "velocity", "I1_sup", "I2_ball"], rows))
    o.text("farfield.json", analysis.to_json(body) + "\n")
    o.manifest("farfield", config=cfg)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "check": cmd_check,
    "kernel-report": cmd_kernel_report,
    "norms": cmd_norms,
    "farfield": cmd_farfield,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="yudovich", description="2D Euler verification suite")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("--out", default="out", help="output directory (default: ./out)")
        sp.add_argument("--jobs", type=int, default=1, help="parallel jobs (check only)")
        if name == "check":
            sp.add_argument("--manifest", help="suite manifest JSON (default: the packaged suite)")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        log.error("--jobs must be >= 1")
        return 1
    if args.command not in ("check",) and args.config is None:
        log.error("%s needs --config", args.command)
        return 1
    try:
        cfg, base = load_config(args.config, args.command)
        if args.command == "check":
            return cmd_check(cfg, base, Path(args.out), args.jobs, args.manifest)
        return COMMANDS[args.command](cfg, base, Path(args.out), args.jobs)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
