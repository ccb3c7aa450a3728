"""Command-line entry point.

    randflux {sample,verify,ids,lifshitz,merge,report} CONFIG.json [--output DIR] [--seed N] [--workers N]

Each command reads one JSON document, validates it against its schema
(unknown keys are rejected) and writes data files plus ``manifest.json``
into the output directory.  Relative output directories are resolved
against ``$RANDFLUX_OUTPUT_ROOT`` (default: the working directory).

Exit codes: 0 success, 1 computational failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from ._rng import sample_seed
from .bounds import (
    LedgerRow,
    TrialFunction,
    estimate_s0,
    feynman_hellmann_check,
    ledger_csv,
    lifshitz_schedule,
    norm_v_k,
    rayleigh_quotient_dirichlet,
    residual_norm,
    taylor_remainder_check,
    weyl_schedule,
)
from .eigensolve import dense_spectrum
from .gauge import gauge_shift, random_plaquette_errors
from .geometry import BoxGeometry, model_from_dict
from .hardy import verify_diamagnetic, verify_hardy_bound
from .ids import IDSCurve, default_energy_grid, lifshitz_fit, read_curve_csv, sample_counts
from .operators import Grid, assemble

OUTPUT_ROOT_ENV = "RANDFLUX_OUTPUT_ROOT"
SCHEMA_VERSION = 1
SUITES = ("gauge", "diamagnetic", "hardy", "weyl", "lower_bound", "chernoff", "taylor")


class ConfigError(Exception):
    """Invalid configuration (exit code 2)."""


class HardFailure(Exception):
    """Computation finished with failed checks or failed solves (exit code 1)."""


# ---------------------------------------------------------------------------
# Schemas

_FLUX = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["law", "value"],
         "properties": {"law": {"const": "constant"}, "value": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}},
        {"type": "object", "additionalProperties": False, "required": ["law"],
         "properties": {"law": {"const": "uniform"}, "upper": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}},
        {"type": "object", "additionalProperties": False, "required": ["law", "delta"],
         "properties": {"law": {"const": "power_tail"}, "delta": {"type": "number", "exclusiveMinimum": 0}}},
    ]
}

_DISPLACEMENT = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["law"],
         "properties": {"law": {"const": "constant"}, "dx": {"type": "number"}, "dy": {"type": "number"}}},
        {"type": "object", "additionalProperties": False, "required": ["law", "half_width"],
         "properties": {"law": {"const": "uniform"},
                        "half_width": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5}}},
    ]
}

MODEL_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["name", "rho", "flux"],
         "properties": {"name": {"const": "poisson"}, "rho": {"type": "number", "exclusiveMinimum": 0}, "flux": _FLUX}},
        {"type": "object", "additionalProperties": False, "required": ["name", "flux"],
         "properties": {"name": {"const": "perturbed_lattice"}, "displacement": _DISPLACEMENT, "flux": _FLUX}},
        {"type": "object", "additionalProperties": False, "required": ["name"],
         "properties": {"name": {"const": "accumulating_lattice"}, "m_max": {"type": "integer", "minimum": 2},
                        "max_points": {"type": "integer", "minimum": 1}}},
    ]
}

_COMMON = {
    "schema_version": {"const": SCHEMA_VERSION},
    "output": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
}

_INT_K = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_ENERGIES = {
    "oneOf": [
        _NUM_LIST,
        {"type": "object", "additionalProperties": False, "required": ["start", "stop", "num"],
         "properties": {"start": {"type": "number", "exclusiveMinimum": 0}, "stop": {"type": "number"},
                        "num": {"type": "integer", "minimum": 2}}},
    ]
}


def _schema(required, props):
    return {"type": "object", "additionalProperties": False, "required": ["schema_version", *required],
            "properties": {**_COMMON, **props}}


SCHEMAS = {
    "sample": _schema(["model", "k"], {"model": MODEL_SCHEMA, "k": _INT_K, "samples": _POS_INT}),
    "verify": _schema(["suite", "model", "k"], {
        "suite": {"enum": list(SUITES)},
        "model": MODEL_SCHEMA,
        "k": _INT_K,
        "M": _POS_INT,
        "samples": _POS_INT,
        "xi": {"type": "number"},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "lam": {"type": "number", "exclusiveMinimum": 0},
        "tol_factor": {"type": "number", "exclusiveMinimum": 0},
        "min_delta_over_h": {"type": ["number", "null"], "minimum": 0},
        "plaquettes": _POS_INT,
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "k_values": {"type": "array", "items": _POS_INT, "minItems": 1},
        "boxes": _POS_INT,
        "s0_samples": _POS_INT,
    }),
    "ids": _schema(["model", "k", "M", "samples"], {
        "model": MODEL_SCHEMA,
        "k": _INT_K,
        "M": _POS_INT,
        "samples": _POS_INT,
        "boundary": {"enum": ["dirichlet", "neumann", "both"]},
        "energies": _ENERGIES,
        "method": {"enum": ["auto", "dense", "sturm"]},
        "indices": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "max_failure_rate": {"type": "number", "minimum": 0, "maximum": 1},
    }),
    "lifshitz": _schema(["inputs"], {
        "inputs": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "n_bootstrap": {"type": "integer", "minimum": 0},
    }),
    "merge": _schema(["inputs"], {"inputs": {"type": "array", "items": {"type": "string"}, "minItems": 1}}),
    "report": _schema(["inputs"], {"inputs": {"type": "array", "items": {"type": "string"}, "minItems": 1}}),
}


def validate(command: str, config: dict) -> None:
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {e.message}") from None


# ---------------------------------------------------------------------------
# Output plumbing


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(config: dict) -> str:
    return _sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode())


class Output:
    """Single writer for one output directory."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        data = text.encode()
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.files[name] = _sha256(data)
        return path

    def manifest(self, command: str, config: dict, seeds, extra=None) -> Path:
        m = {
            "command": command,
            "config": config,
            "config_hash": config_hash(config),
            "code_version": __version__,
            "seeds": list(seeds),
            "files": dict(sorted(self.files.items())),
        }
        if extra:
            m.update(extra)
        return self.write_manifest(m)

    def write_manifest(self, m: dict) -> Path:
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
        return path


def _output_dir(config: dict, override: str | None, command: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    name = override or config.get("output") or f"randflux-{command}"
    path = Path(name)
    return path if path.is_absolute() else root / path


def _resolve_input(path: str) -> Path:
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / p


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# sample


def cmd_sample(config: dict, out: Output, workers: int = 1) -> int:
    model = model_from_dict(config["model"])
    seed = config.get("seed", 0)
    n = config.get("samples", 1)
    seeds = [sample_seed(seed, i) for i in range(n)]
    for i, s in enumerate(seeds):
        cfg = model.sample(s, BoxGeometry(config["k"]))
        out.write(f"config_{i:05d}.json", cfg.to_json(sort_keys=True) + "\n")
    out.manifest("sample", config, seeds)
    return 0


# ---------------------------------------------------------------------------
# verify


def _suite_gauge(cfg, params, rng):
    rows = []
    errs = random_plaquette_errors(cfg, params.get("plaquettes", 10), rng)
    rows.append(LedgerRow(cfg.seed, "plaquette_error", float(errs.max()) if errs.size else 0.0, 1e-9,
                          bool(errs.max() < 1e-9) if errs.size else True))
    if len(cfg):
        grid = Grid(cfg.box, params.get("M", 4))
        idx = int(rng.integers(len(cfg)))
        shifted = gauge_shift(cfg, idx, int(rng.choice([-2, -1, 1, 2])))
        for bc in ("dirichlet", "neumann"):
            a = dense_spectrum(assemble(cfg, grid, bc)).eigenvalues
            b = dense_spectrum(assemble(shifted, grid, bc)).eigenvalues
            d = float(np.max(np.abs(a - b)))
            rows.append(LedgerRow(cfg.seed, f"gauge_spectrum_{bc}", d, 1e-9, bool(d < 1e-9)))
    return rows


def _suite_diamagnetic(cfg, params, rng):
    rep = verify_diamagnetic(cfg, Grid(cfg.box, params.get("M", 4)), params.get("lam", 1.0),
                             seed=int(rng.integers(2**31)))
    return [
        LedgerRow(cfg.seed, "resolvent_entrywise", rep.min_slack, -1e-12, rep.entrywise_pass, ">="),
        LedgerRow(cfg.seed, "resolvent_hs", rep.hs_magnetic, rep.hs_free, rep.hs_pass),
    ]


def _suite_hardy(cfg, params, rng):
    rep = verify_hardy_bound(cfg, Grid(cfg.box, params.get("M", 8)), params.get("tol_factor", 10.0),
                             params.get("min_delta_over_h", 2.0))
    passed = None if rep.skipped else rep.passed
    return [LedgerRow(cfg.seed, "hardy_slack", rep.slack, -rep.tol, passed, ">=")]


def _suite_weyl(cfg, params, rng):
    k = cfg.box.k
    trial = TrialFunction("weyl", k, params.get("xi", 1.0))
    nv = norm_v_k(cfg, trial)
    res = residual_norm(cfg, trial)
    return nv.rows(cfg.seed) + res.rows(cfg.seed)


def _suite_lower_bound(cfg, params, rng):
    rep = rayleigh_quotient_dirichlet(cfg)
    rows = rep.rows(cfg.seed)
    rows.append(LedgerRow(cfg.seed, "dirichlet_quotient_min", rep.quotient + rep.error, 0.0,
                          bool(rep.quotient + rep.error >= 0), ">="))
    if "epsilon" in params:
        rows.append(LedgerRow(cfg.seed, "dirichlet_quotient_vs_epsilon", rep.quotient, params["epsilon"], "info"))
    return rows


def _suite_taylor(cfg, params, rng):
    grid = Grid(cfg.box, params.get("M", 4))
    fh = feynman_hellmann_check(cfg, grid, params.get("tau", 1e-4))
    rows = [LedgerRow(cfg.seed, "feynman_hellmann_error", fh["abs_error"], 1e-4, bool(fh["abs_error"] <= 1e-4))]
    tr = taylor_remainder_check(cfg, grid)
    if tr["skipped"]:
        rows.append(LedgerRow(cfg.seed, "taylor_remainder", math.nan, math.nan, None))
    for r in tr["rows"]:
        rows.append(LedgerRow(cfg.seed, f"taylor_remainder_t={r['t']!r}", r["remainder"], r["bound"], r["passed"]))
    return rows


_SUITE_FUNCS = {
    "gauge": _suite_gauge,
    "diamagnetic": _suite_diamagnetic,
    "hardy": _suite_hardy,
    "weyl": _suite_weyl,
    "lower_bound": _suite_lower_bound,
    "taylor": _suite_taylor,
}


def _schedule_rows(suite, params, seed):
    rows = []
    if suite == "weyl":
        eps = params.get("epsilon", 0.1)
        sch = weyl_schedule(eps, params.get("xi", 1.0))
        for key in ("k", "l", "rhs", "C0", "C1", "C2", "C5", "l0"):
            rows.append(LedgerRow(seed, f"schedule_{key}", float(sch[key]), eps if key == "rhs" else math.nan,
                                  bool(sch["rhs"] < eps) if key == "rhs" else "info"))
    elif suite == "lower_bound" and "epsilon" in params:
        try:
            sch = lifshitz_schedule(params["epsilon"])
        except ValueError as e:
            raise HardFailure(str(e)) from None
        for key in ("k", "l", "b", "t0"):
            rows.append(LedgerRow(seed, f"schedule_{key}", float(sch[key]), math.nan, "info"))
        rows.append(LedgerRow(seed, "schedule_t0_below_half_R", sch["t0"], sch["R"] / 2, sch["t0_below_half_R"]))
    return rows


def _verify_one(args):
    suite, model_dict, k, params, seed, i = args
    s = sample_seed(seed, i)
    cfg = model_from_dict(model_dict).sample(s, BoxGeometry(k))
    rng = np.random.default_rng([seed, i])
    try:
        return _SUITE_FUNCS[suite](cfg, params, rng)
    except Exception as e:  # solver or quadrature failure surfaces as a failed row
        return [LedgerRow(s, f"{suite}_error:{type(e).__name__}", math.nan, math.nan, False)]


def _map(func, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(func, items))
    return [func(x) for x in items]


def cmd_verify(config: dict, out: Output, workers: int = 1) -> int:
    suite = config["suite"]
    seed = config.get("seed", 0)
    n = config.get("samples", 1)
    params = {k: v for k, v in config.items() if k not in ("suite", "model", "k", "samples", "seed", "output")}
    rows = _schedule_rows(suite, params, seed)
    seeds = [sample_seed(seed, i) for i in range(n)]
    if suite == "chernoff":
        model = model_from_dict(config["model"])
        rep = estimate_s0(model, params.get("s0_samples", 1000), seed, tuple(params.get("k_values", [1, 2])),
                          params.get("boxes", 10_000))
        rows.append(LedgerRow(seed, "s0_hat", rep.s0_hat, math.nan, "info"))
        rows.append(LedgerRow(seed, "s0_degenerate", float(rep.degenerate), 0.0, not rep.degenerate))
        rows += rep.rows()
    else:
        items = [(suite, config["model"], config["k"], params, seed, i) for i in range(n)]
        for r in _map(_verify_one, items, workers):
            rows += r
    out.write("ledger.csv", ledger_csv(rows))
    failed = sum(r.status == "0" for r in rows)
    skipped = sum(r.status == "skip" for r in rows)
    out.manifest("verify", config, seeds, {"rows": len(rows), "failed": failed, "skipped": skipped})
    if skipped:
        _warn(f"{skipped} ledger rows skipped")
    if failed:
        print(f"{failed} of {len(rows)} checks failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# ids


def _energies(spec) -> np.ndarray:
    if spec is None:
        return default_energy_grid()
    if isinstance(spec, dict):
        E = np.geomspace(spec["start"], spec["stop"], spec["num"])
    else:
        E = np.asarray(spec, dtype=float)
    if np.any(np.diff(E) <= 0):
        raise ConfigError("energies must be strictly ascending")
    return E


def _count_one(args):
    model_dict, k, bc, M, seed, i, E, method = args
    try:
        return i, sample_counts(model_dict, k, bc, M, seed, i, E, method).tolist(), None
    except (np.linalg.LinAlgError, RuntimeError, ValueError) as e:
        return i, None, type(e).__name__


def _load_progress(path: Path, key_hash: str):
    done, failed = {}, {}
    if not path.exists():
        return done, failed
    lines = path.read_text().splitlines()
    if not lines or json.loads(lines[0]).get("key") != key_hash:
        raise ConfigError(f"{path} belongs to a different run; remove it or change the output directory")
    for line in lines[1:]:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:  # truncated final line of an interrupted run
            continue
        if rec.get("counts") is None:
            failed[rec["index"]] = rec.get("error", "error")
        else:
            done[rec["index"]] = rec["counts"]
    return done, failed


def cmd_ids(config: dict, out: Output, workers: int = 1) -> int:
    """Resumable IDS run: completed samples are kept in ``progress_<bc>.jsonl``."""
    seed = config.get("seed", 0)
    E = _energies(config.get("energies"))
    k, M = config["k"], config["M"]
    start, stop = config.get("indices", [0, config["samples"]])
    if not 0 <= start < stop <= config["samples"]:
        raise ConfigError("indices must satisfy 0 <= start < stop <= samples")
    bcs = ["dirichlet", "neumann"] if config.get("boundary", "neumann") == "both" else [config.get("boundary", "neumann")]
    method = config.get("method", "auto")
    model_dict = model_from_dict(config["model"]).to_dict()
    rate = config.get("max_failure_rate", 0.01)
    hard = False
    for bc in bcs:
        key = {"model": model_dict, "k": k, "M": M, "boundary": bc, "seed": seed,
               "energies": [repr(float(e)) for e in E], "method": method}
        khash = config_hash(key)
        prog = out.dir / f"progress_{bc}.jsonl"
        done, failed = _load_progress(prog, khash)
        todo = [i for i in range(start, stop) if i not in done and i not in failed]
        if not prog.exists():
            prog.write_text(json.dumps({"key": khash}) + "\n")
        items = [(model_dict, k, bc, M, seed, i, E, method) for i in todo]
        with prog.open("a") as fh:
            for i, counts, err in _map(_count_one, items, workers):
                rec = {"index": i, "counts": counts} if err is None else {"index": i, "counts": None, "error": err}
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
                if err is None:
                    done[i] = counts
                else:
                    failed[i] = err
        idx = sorted(i for i in done if start <= i < stop)
        counts = np.array([done[i] for i in idx], dtype=np.int64).reshape(len(idx), E.size)
        fails = sorted(i for i in failed if start <= i < stop)
        curve = IDSCurve(E, counts, idx, bc, k, M, seed, model_dict, fails)
        out.write(f"curve_{bc}.csv", curve.to_csv())
        out.write(f"curve_{bc}.json", curve.to_json() + "\n")
        if len(fails) > rate * (stop - start):
            print(f"{bc}: {len(fails)} of {stop - start} samples failed", file=sys.stderr)
            hard = True
    seeds = [sample_seed(seed, i) for i in range(start, stop)]
    out.manifest("ids", config, seeds)
    return 1 if hard else 0


# ---------------------------------------------------------------------------
# lifshitz, merge, report


def cmd_lifshitz(config: dict, out: Output, workers: int = 1) -> int:
    window = config.get("window")
    fits = []
    for name in config["inputs"]:
        path = _resolve_input(name)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {name}: {e}") from None
        if path.suffix == ".json":
            src = IDSCurve.from_json(text)
        else:
            src = read_curve_csv(text)
        try:
            if isinstance(src, IDSCurve):
                fit = lifshitz_fit(src, window=window, n_bootstrap=config.get("n_bootstrap", 1000),
                                   seed=config.get("seed", 0))
            else:
                fit = lifshitz_fit(src[0], src[1], window=window, n_bootstrap=0)
        except ValueError as e:
            print(f"{name}: {e}", file=sys.stderr)
            return 1
        fits.append((name, fit))
    for j, (name, fit) in enumerate(fits):
        out.write(f"fit_{j}.json", json.dumps({"input": name, **fit.to_dict()}, sort_keys=True, indent=2) + "\n")
        out.write(f"fit_{j}_plot.csv", fit.plot_csv())
    out.manifest("lifshitz", config, [config.get("seed", 0)])
    return 0


def cmd_merge(config: dict, out: Output, workers: int = 1) -> int:
    curves = []
    for name in config["inputs"]:
        try:
            curves.append(IDSCurve.from_json(_resolve_input(name).read_text()))
        except OSError as e:
            raise ConfigError(f"cannot read {name}: {e}") from None
    merged = curves[0]
    try:
        for c in curves[1:]:
            merged = merged.merge(c)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out.write(f"curve_{merged.boundary}.csv", merged.to_csv())
    out.write(f"curve_{merged.boundary}.json", merged.to_json() + "\n")
    out.manifest("merge", config, [sample_seed(merged.seed, i) for i in merged.indices.tolist()])
    return 0


def cmd_report(config: dict, out: Output, workers: int = 1) -> int:
    """Summarise ledgers (pass/fail/skip per quantity) of verify outputs."""
    summary = {}
    failed = 0
    for name in config["inputs"]:
        d = _resolve_input(name)
        ledger = d / "ledger.csv" if d.is_dir() else d
        try:
            rows = list(csv.DictReader(io.StringIO(ledger.read_text())))
        except OSError as e:
            raise ConfigError(f"cannot read {ledger}: {e}") from None
        for r in rows:
            q = r["quantity"].split("=")[0]
            s = summary.setdefault(q, {"1": 0, "0": 0, "skip": 0, "info": 0})
            s[r["pass"]] = s.get(r["pass"], 0) + 1
            failed += r["pass"] == "0"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["quantity", "passed", "failed", "skipped", "info"])
    for q in sorted(summary):
        s = summary[q]
        w.writerow([q, s["1"], s["0"], s["skip"], s["info"]])
    out.write("report.csv", buf.getvalue())
    out.manifest("report", config, [])
    return 1 if failed else 0


COMMANDS = {
    "sample": cmd_sample,
    "verify": cmd_verify,
    "ids": cmd_ids,
    "lifshitz": cmd_lifshitz,
    "merge": cmd_merge,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randflux", description="Experiments with magnetic Laplacians for random flux points")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", help="JSON configuration file")
        s.add_argument("--output", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="seed override")
        s.add_argument("--workers", type=int, default=1, help="worker processes (does not change results)")
    return p


def load_config(path: str, command: str, seed: int | None = None) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    if seed is not None:
        config["seed"] = seed
    validate(command, config)
    if "model" in config:
        try:
            model_from_dict(config["model"])
        except (ValueError, KeyError) as e:
            raise ConfigError(f"invalid model: {e}") from None
    return config


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        config = load_config(args.config, args.command, args.seed)
        out = Output(_output_dir(config, args.output, args.command))
        return COMMANDS[args.command](config, out, max(args.workers, 1))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except HardFailure as e:
        print(f"failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
