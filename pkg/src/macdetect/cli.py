"""Experiment runner: ``macdetect CONFIG [options]``.

A config is a JSON object::

    {
      "seed": 0,                       # optional, default 0
      "experiments": [ {"name": "...", "id": "...", ...}, ... ]
    }

Every experiment writes CSV files (12 significant digits, ``#`` header lines
listing every parameter) under ``OUT/<id>/`` and the run writes
``OUT/manifest.json`` describing each file. See ``EXPERIMENTS`` for the keys
each experiment accepts and their defaults.

Exit codes: 0 success, 1 an experiment failed (its partial outputs are
removed), 2 invalid configuration or arguments.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import experiments as E
from .errors import ConfigError, MacDetectError
from .montecarlo import PROFILES, STRATEGIES, TrialConfig
from .spectra import FrequencyGrid, psd_config_errors, psd_from_config

OUTPUT_ROOT_ENV = "MACDETECT_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"

PDE_DEFAULT = {"kind": "pde2d", "a0": -5.0, "ax": 1.0, "ay": 1.0, "variance": 1.0}

_COMMON = {"name": None, "id": None, "label": "", "psd": None, "snr_m_db": 5.0, "energy": 1.0,
           "grid": None, "rule": "max-root", "workers": 1}

EXPERIMENTS = {
    "exponent-vs-snrc": {
        "beta": 0.6, "curves": list(E.CURVES), "restrict": False,
        "snr_c_db": {"start": -15.0, "stop": 10.0, "step": 0.25},
    },
    "beta-star-vs-beta": {
        "snr_c_db": [-10.0, 0.0, 10.0],
        "beta": {"start": 0.01, "stop": 1.0, "step": 0.01},
    },
    "energy-profile": {"beta": 0.6, "snr_c_db": [-10.0, 0.0, 10.0]},
    "energy-gap-table": {
        "beta": 0.6, "levels": [0.1, 0.01, 0.001], "profiles": ["SEP", "OEP"],
        "snr_c_db": {"start": -40.0, "stop": 30.0, "step": 0.25},
    },
    "mc-2d": {
        "psd": PDE_DEFAULT, "orders": [[4, 4], [6, 6], [8, 8], [10, 10]], "snr_c_db": -10.0, "beta": 1.0,
        "profile": "OEP", "strategies": ["PCS", "PFS"], "trials": 20000, "calibration_trials": None,
        "alpha": 0.01, "block_size": 512,
    },
    "toeplitz-convergence": {"orders": [128, 256, 512]},
}

AXES = {
    "exponent-vs-snrc": ("SNR_C [dB]", "miss exponent [nats/sensor]", "log"),
    "beta-star-vs-beta": ("beta", "beta*", "linear"),
    "energy-profile": ("nu", "xi(nu)", "linear"),
    "energy-gap-table": ("exponent level", "energy gap vs CEP [dB]", "linear"),
    "mc-2d": ("sensors n", "miss exponent estimate [nats/sensor]", "linear"),
    "toeplitz-convergence": ("n", "distribution gap", "log"),
}


@dataclass
class ExperimentSpec:
    name: str
    id: str
    params: dict
    label: str = ""


@dataclass
class RunConfig:
    experiments: list
    seed: int = 0
    source: str | None = None
    extra: dict = field(default_factory=dict)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_sweep(val, where, errors, lo=None, hi=None):
    if not isinstance(val, dict) or set(val) != {"start", "stop", "step"} or not all(_is_num(v) for v in val.values()):
        errors.append(f"{where}: expected {{start, stop, step}} numbers")
        return
    if not val["step"] > 0:
        errors.append(f"{where}.step: must be positive")
    if val["stop"] < val["start"]:
        errors.append(f"{where}: empty range (stop < start)")
    if lo is not None and val["start"] <= lo:
        errors.append(f"{where}.start: must exceed {lo}")
    if hi is not None and val["stop"] > hi:
        errors.append(f"{where}.stop: must not exceed {hi}")


def _check_list(val, where, errors, pred=_is_num, what="numbers"):
    if not isinstance(val, list) or not val or not all(pred(v) for v in val):
        errors.append(f"{where}: expected a non-empty list of {what}")


def _validate_experiment(raw, k, errors, base_dir):
    where = f"experiments[{k}]"
    if not isinstance(raw, dict):
        errors.append(f"{where}: expected an object")
        return None
    name = raw.get("name")
    if name not in EXPERIMENTS:
        errors.append(f"{where}.name: must be one of {sorted(EXPERIMENTS)}")
        return None
    where = f"{where}({name})"
    schema = {**_COMMON, **EXPERIMENTS[name]}
    for key in sorted(set(raw) - set(schema)):
        errors.append(f"{where}.{key}: unknown key")
    p = copy.deepcopy(schema)
    p.update(copy.deepcopy(raw))

    psd = p["psd"]
    if psd is None:
        errors.append(f"{where}.psd: required")
    else:
        if isinstance(psd, dict) and set(psd) == {"file"}:
            path = Path(psd["file"])
            path = path if path.is_absolute() else Path(base_dir) / path
            try:
                psd = json.loads(path.read_text())
                p["psd"] = psd
            except (OSError, ValueError) as exc:
                errors.append(f"{where}.psd.file: cannot read {path}: {exc}")
                psd = None
        if psd is not None:
            psd_errors = psd_config_errors(psd, f"{where}.psd")
            errors.extend(psd_errors)
            if not psd_errors:
                try:
                    psd_from_config(psd)
                except (MacDetectError, ValueError) as exc:
                    errors.append(f"{where}.psd: {exc}")
    for key in ("snr_m_db", "energy"):
        if not _is_num(p[key]):
            errors.append(f"{where}.{key}: expected a number")
    if not (_is_num(p["energy"]) and p["energy"] > 0):
        errors.append(f"{where}.energy: must be positive")
    if p["grid"] is not None and not (isinstance(p["grid"], int) and p["grid"] >= 8):
        errors.append(f"{where}.grid: expected an integer >= 8")
    if p["rule"] not in ("max-root", "lagrangian"):
        errors.append(f"{where}.rule: must be 'max-root' or 'lagrangian'")
    if not (isinstance(p["workers"], int) and p["workers"] >= 1):
        errors.append(f"{where}.workers: expected a positive integer")
    if "beta" in p and not isinstance(p["beta"], dict):
        if not (_is_num(p["beta"]) and 0 < p["beta"] <= 1):
            errors.append(f"{where}.beta: must lie in (0, 1]")

    if name == "exponent-vs-snrc":
        _check_sweep(p["snr_c_db"], f"{where}.snr_c_db", errors)
        _check_list(p["curves"], f"{where}.curves", errors, lambda c: c in E.CURVES, f"names in {list(E.CURVES)}")
        if not isinstance(p["restrict"], bool):
            errors.append(f"{where}.restrict: expected true or false")
    elif name == "beta-star-vs-beta":
        _check_list(p["snr_c_db"], f"{where}.snr_c_db", errors)
        _check_sweep(p["beta"], f"{where}.beta", errors, lo=0.0, hi=1.0)
    elif name == "energy-profile":
        _check_list(p["snr_c_db"], f"{where}.snr_c_db", errors)
    elif name == "energy-gap-table":
        _check_sweep(p["snr_c_db"], f"{where}.snr_c_db", errors)
        _check_list(p["levels"], f"{where}.levels", errors, lambda x: _is_num(x) and x > 0, "positive numbers")
        _check_list(p["profiles"], f"{where}.profiles", errors, lambda c: c in ("SEP", "OEP", "ONOFF"),
                    "names in ['SEP', 'OEP', 'ONOFF']")
    elif name == "mc-2d":
        _check_list(p["orders"], f"{where}.orders", errors,
                    lambda o: (isinstance(o, int) and o > 0)
                    or (isinstance(o, list) and o and all(isinstance(x, int) and x > 0 for x in o)),
                    "positive integers or integer lists")
        if not _is_num(p["snr_c_db"]):
            errors.append(f"{where}.snr_c_db: expected a number")
        if p["profile"] not in PROFILES:
            errors.append(f"{where}.profile: must be one of {list(PROFILES)}")
        _check_list(p["strategies"], f"{where}.strategies", errors, lambda s: s in STRATEGIES,
                    f"names in {list(STRATEGIES)}")
        for key in ("trials", "block_size"):
            if not (isinstance(p[key], int) and p[key] >= 1):
                errors.append(f"{where}.{key}: expected a positive integer")
        if p["calibration_trials"] is not None and not (isinstance(p["calibration_trials"], int)
                                                        and p["calibration_trials"] >= 1):
            errors.append(f"{where}.calibration_trials: expected a positive integer or null")
        if not (_is_num(p["alpha"]) and 0 < p["alpha"] < 1):
            errors.append(f"{where}.alpha: must lie in (0, 1)")
    elif name == "toeplitz-convergence":
        _check_list(p["orders"], f"{where}.orders", errors, lambda o: isinstance(o, int) and o > 0,
                    "positive integers")
    return ExperimentSpec(name, str(p["id"] or name), p, str(p["label"]))


def parse_config_data(data, base_dir=".", source=None) -> RunConfig:
    """Validate a config mapping; raises :class:`ConfigError` listing every problem."""
    errors = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a JSON object"])
    for key in sorted(set(data) - {"seed", "experiments"}):
        errors.append(f"{key}: unknown key")
    seed = data.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        errors.append("seed: expected a non-negative integer")
    exps = data.get("experiments")
    specs = []
    if not isinstance(exps, list) or not exps:
        errors.append("experiments: expected a non-empty list")
    else:
        for k, raw in enumerate(exps):
            spec = _validate_experiment(raw, k, errors, base_dir)
            if spec is not None:
                specs.append(spec)
        ids = [s.id for s in specs]
        for dup in sorted({i for i in ids if ids.count(i) > 1}):
            errors.append(f"experiments: duplicate id {dup!r}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(specs, seed, source)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    except ValueError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return parse_config_data(data, path.parent, str(path))


def shipped_configs() -> dict:
    """Example configs bundled with the package, keyed by file stem."""
    root = Path(__file__).with_name("configs")
    return {p.stem: p for p in sorted(root.glob("*.json")) if "experiments" in json.loads(p.read_text())}


# -- output ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.12g" % v
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def write_csv(path: Path, rows: list, header: dict) -> list:
    """Fixed column order from the first row; ``# key=value`` lines first."""
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        for k in sorted(header):
            fh.write(f"# {k}={json.dumps(header[k], sort_keys=True)}\n")
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    return cols


def _grid(spec, psd):
    g = spec.params["grid"]
    return FrequencyGrid(psd.dimension, g) if g else FrequencyGrid.default(psd.dimension)


def run(spec: ExperimentSpec, out_dir: Path, seed: int = 0, streams: int | None = None) -> list:
    """Run one experiment into ``out_dir`` and return its manifest entries."""
    p = spec.params
    psd = psd_from_config(p["psd"])
    grid = _grid(spec, psd)
    workers = streams or p["workers"]
    header = {k: v for k, v in p.items() if k not in ("workers",)}
    header["seed"] = seed
    header["grid_points_per_axis"] = grid.points_per_axis
    files = []
    xl, yl, scale = AXES[spec.name]

    def emit(fname, rows, curve=None):
        cols = write_csv(out_dir / fname, rows, {**header, **({"curve": curve} if curve else {})})
        files.append({"file": f"{spec.id}/{fname}", "experiment": spec.name, "id": spec.id,
                      "label": spec.label, "curve": curve, "columns": cols,
                      "x_label": xl, "y_label": yl, "y_scale": scale})

    common = dict(snr_m_db=p["snr_m_db"], energy=p["energy"], grid=grid, rule=p["rule"])
    if spec.name == "exponent-vs-snrc":
        s = p["snr_c_db"]
        tables = E.exponent_vs_snrc(psd, E.sweep(s["start"], s["stop"], s["step"]), tuple(p["curves"]),
                                    p["beta"], restrict=p["restrict"], workers=workers, **common)
        for name in p["curves"]:
            emit(f"{name.lower()}.csv", tables[name], name)
    elif spec.name == "beta-star-vs-beta":
        b = p["beta"]
        for snr in p["snr_c_db"]:
            rows = E.beta_star_vs_beta(psd, E.sweep(b["start"], b["stop"], b["step"]), snr, workers=workers,
                                       **common)
            emit(f"snrc_{_fmt(float(snr))}dB.csv", rows, f"SNR_C={_fmt(float(snr))} dB")
    elif spec.name == "energy-profile":
        for snr in p["snr_c_db"]:
            rows, res = E.energy_profile(psd, p["beta"], snr, **common)
            emit(f"snrc_{_fmt(float(snr))}dB.csv", rows, f"SNR_C={_fmt(float(snr))} dB")
    elif spec.name == "energy-gap-table":
        s = p["snr_c_db"]
        rows, tables = E.energy_gap_table(psd, p["levels"], p["beta"], E.sweep(s["start"], s["stop"], s["step"]),
                                          profiles=tuple(p["profiles"]), workers=workers, **common)
        emit("gaps.csv", rows)
        for name, t in tables.items():
            emit(f"curve_{name.lower()}.csv", t, name)
    elif spec.name == "mc-2d":
        cfg = TrialConfig(
            psd, tuple(tuple(o) if isinstance(o, list) else o for o in p["orders"]), p["snr_m_db"], p["snr_c_db"],
            p["energy"], p["beta"], p["profile"], tuple(p["strategies"]), p["trials"], p["calibration_trials"],
            p["alpha"], seed, workers, grid, p["block_size"],
        )
        emit("estimates.csv", E.mc_2d(cfg))
    elif spec.name == "toeplitz-convergence":
        emit("convergence.csv", E.toeplitz_convergence(psd, p["orders"], p["snr_m_db"], grid))
    return files


def run_all(cfg: RunConfig, out_root: Path, only=None, streams=None) -> list:
    out_root.mkdir(parents=True, exist_ok=True)
    entries = []
    for spec in cfg.experiments:
        if only and spec.name not in only and spec.id not in only:
            continue
        final = out_root / spec.id
        tmp = out_root / f".{spec.id}.partial"
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir()
        try:
            entries.extend(run(spec, tmp, cfg.seed, streams))
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        shutil.rmtree(final, ignore_errors=True)
        tmp.rename(final)
    manifest = {"config": cfg.source, "seed": cfg.seed, "files": entries}
    (out_root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return entries


def apply_overrides(cfg: RunConfig, seed=None, trials=None, grid=None) -> RunConfig:
    if seed is not None:
        cfg.seed = seed
    for spec in cfg.experiments:
        if trials is not None and "trials" in spec.params:
            spec.params["trials"] = trials
        if grid is not None:
            spec.params["grid"] = grid
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="macdetect",
        description="Run error-exponent, energy-allocation and Monte Carlo experiments from a JSON config.",
        epilog=f"Exit codes: 0 ok, 1 experiment failure, 2 bad config/arguments. "
               f"Default output root: ${OUTPUT_ROOT_ENV} or ./{DEFAULT_OUTPUT_ROOT}.",
    )
    ap.add_argument("config", nargs="?", help="config path, or the name of a shipped config")
    ap.add_argument("-o", "--out", help="output directory")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--trials", type=int, help="override Monte Carlo trials per hypothesis")
    ap.add_argument("--grid", type=int, help="override frequency-grid points per axis")
    ap.add_argument("--only", action="append", metavar="NAME", help="run only experiments with this name or id")
    ap.add_argument("--streams", type=int, help="parallel workers/streams (results do not depend on it)")
    ap.add_argument("--list", action="store_true", help="list shipped configs and experiment names")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list:
        for name, path in shipped_configs().items():
            print(f"config  {name:28s} {path}")
        for name in EXPERIMENTS:
            print(f"experiment  {name}")
        return 0
    if not args.config:
        ap.print_usage(sys.stderr)
        print("macdetect: error: a config is required", file=sys.stderr)
        return 2
    path = Path(args.config)
    if not path.exists() and args.config in shipped_configs():
        path = shipped_configs()[args.config]
    for flag, low in (("trials", 1), ("grid", 8), ("streams", 1), ("seed", 0)):
        val = getattr(args, flag)
        if val is not None and val < low:
            print(f"macdetect: error: --{flag} must be at least {low}", file=sys.stderr)
            return 2
    try:
        cfg = apply_overrides(parse_config(path), args.seed, args.trials, args.grid)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out or os.path.join(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT),
                                        Path(path).stem))
    try:
        entries = run_all(cfg, out, args.only, args.streams)
    except MacDetectError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for e in entries:
        print(out / e["file"])
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
