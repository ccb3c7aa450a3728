import csv
import hashlib
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from randflux import FluxConfiguration, IDSCurve, PoissonModel, ConstantFlux, estimate_ids
from randflux.cli import main

POISSON = {"name": "poisson", "rho": 1.0, "flux": {"law": "constant", "value": 0.5}}


def run(tmp_path, command, config, *extra, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"schema_version": 1, **config}))
    return main([command, str(path), *extra])


def read_ledger(directory):
    return list(csv.DictReader(io.StringIO((directory / "ledger.csv").read_text())))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- sample -------------------------------------------------------------------------


def test_sample_is_deterministic(tmp_path):
    cfg = {"model": POISSON, "k": 2, "seed": 7}
    assert run(tmp_path, "sample", cfg, "--output", str(tmp_path / "a")) == 0
    assert run(tmp_path, "sample", cfg, "--output", str(tmp_path / "b")) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["config_00000.json", "manifest.json"]
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    back = FluxConfiguration.from_json((tmp_path / "a" / "config_00000.json").read_text())
    assert back.box.k == 2


def test_sample_batch_manifest(tmp_path):
    out = tmp_path / "batch"
    assert run(tmp_path, "sample", {"model": POISSON, "k": 1, "samples": 100}, "--output", str(out)) == 0
    configs = sorted(out.glob("config_*.json"))
    assert len(configs) == 100
    m = json.loads((out / "manifest.json").read_text())
    assert len(m["seeds"]) == 100 and m["code_version"]
    for p in configs:
        assert m["files"][p.name] == digest(p)


@pytest.mark.parametrize("config", [
    {"model": {"name": "gaussian", "rho": 1.0}, "k": 1},
    {"model": POISSON, "k": 1, "unknown": 3},
    {"model": POISSON},
    {"model": {**POISSON, "rho": -1.0}, "k": 1},
])
def test_invalid_config_exit_2(tmp_path, config, capsys):
    assert run(tmp_path, "sample", config, "--output", str(tmp_path / "x")) == 2
    assert "schema error" in capsys.readouterr().err


def test_missing_or_malformed_file(tmp_path):
    assert main(["sample", str(tmp_path / "absent.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sample", str(bad)]) == 2
    assert main(["nonsense", str(bad)]) == 2


def test_output_root_override(tmp_path, monkeypatch):
    monkeypatch.setenv("RANDFLUX_OUTPUT_ROOT", str(tmp_path / "root"))
    assert run(tmp_path, "sample", {"model": POISSON, "k": 0, "output": "rel"}) == 0
    assert (tmp_path / "root" / "rel" / "manifest.json").exists()


def test_console_script_entry(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema_version": 1, "model": POISSON, "k": 0}))
    proc = subprocess.run([sys.executable, "-m", "randflux.cli", "sample", str(path), "--output", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


# -- verify -------------------------------------------------------------------------


def test_verify_gauge_suite(tmp_path):
    out = tmp_path / "g"
    cfg = {"suite": "gauge", "model": {"name": "poisson", "rho": 1.0, "flux": {"law": "uniform"}}, "k": 1,
           "samples": 20, "M": 3}
    assert run(tmp_path, "verify", cfg, "--output", str(out)) == 0
    rows = read_ledger(out)
    assert list(rows[0]) == ["seed", "quantity", "measured", "bound", "margin", "pass"]
    assert all(r["pass"] == "1" for r in rows)
    assert sum(r["quantity"] == "plaquette_error" for r in rows) == 20


def test_verify_hardy_skip_rule(tmp_path, capsys):
    # at M=2 every cell violates delta >= 2h, so all rows are skipped
    out = tmp_path / "h"
    cfg = {"suite": "hardy", "model": {"name": "poisson", "rho": 3.0, "flux": {"law": "uniform"}}, "k": 1,
           "samples": 5, "M": 2}
    assert run(tmp_path, "verify", cfg, "--output", str(out)) == 0
    rows = read_ledger(out)
    assert rows and all(r["pass"] == "skip" for r in rows)
    assert "warning" in capsys.readouterr().err


def test_verify_weyl_schedule_rows(tmp_path):
    out = tmp_path / "w"
    cfg = {"suite": "weyl", "k": 1, "samples": 2, "xi": 1.0, "epsilon": 0.1,
           "model": {"name": "perturbed_lattice", "displacement": {"law": "uniform", "half_width": 0.3},
                     "flux": {"law": "uniform", "upper": 0.02}}}
    assert run(tmp_path, "verify", cfg, "--output", str(out)) == 0
    rows = read_ledger(out)
    names = {r["quantity"] for r in rows}
    assert {"schedule_k", "schedule_l", "schedule_rhs", "schedule_l0"} <= names
    assert all(r["pass"] in ("1", "info") for r in rows)


def test_verify_lower_bound_infeasible_schedule(tmp_path):
    cfg = {"suite": "lower_bound", "model": POISSON, "k": 0, "epsilon": 10.0}
    assert run(tmp_path, "verify", cfg, "--output", str(tmp_path / "lb")) == 1


def test_verify_hard_failure_exit_1(tmp_path):
    # an absurd tolerance factor makes the Hardy check fail on a strong flux
    cfg = {"suite": "hardy", "model": POISSON, "k": 0, "samples": 3, "M": 8, "tol_factor": 1e-12,
           "min_delta_over_h": None}
    code = run(tmp_path, "verify", cfg, "--output", str(tmp_path / "f"))
    rows = read_ledger(tmp_path / "f")
    assert code == (1 if any(r["pass"] == "0" for r in rows) else 0)


def test_verify_chernoff_and_report(tmp_path):
    out = tmp_path / "c"
    cfg = {"suite": "chernoff", "model": POISSON, "k": 1, "s0_samples": 500, "boxes": 500}
    assert run(tmp_path, "verify", cfg, "--output", str(out)) == 0
    assert run(tmp_path, "report", {"inputs": [str(out)]}, "--output", str(tmp_path / "r"), name="r.json") == 0
    rep = list(csv.DictReader(io.StringIO((tmp_path / "r" / "report.csv").read_text())))
    assert {r["quantity"] for r in rep} >= {"s0_hat"}


def test_verify_workers_do_not_change_results(tmp_path):
    cfg = {"suite": "diamagnetic", "model": POISSON, "k": 0, "samples": 4, "M": 4}
    assert run(tmp_path, "verify", cfg, "--output", str(tmp_path / "w1")) == 0
    assert run(tmp_path, "verify", cfg, "--output", str(tmp_path / "w2"), "--workers", "2") == 0
    assert (tmp_path / "w1" / "ledger.csv").read_bytes() == (tmp_path / "w2" / "ledger.csv").read_bytes()


# -- ids, merge, lifshitz -----------------------------------------------------------


IDS = {"model": POISSON, "k": 1, "M": 3, "samples": 8, "seed": 2, "boundary": "both",
       "energies": {"start": 0.1, "stop": 8.0, "num": 6}}


def test_ids_matches_library_and_is_reproducible(tmp_path):
    assert run(tmp_path, "ids", IDS, "--output", str(tmp_path / "a")) == 0
    assert run(tmp_path, "ids", IDS, "--output", str(tmp_path / "b")) == 0
    for name in ("curve_dirichlet.csv", "curve_neumann.csv", "curve_neumann.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lib = estimate_ids(PoissonModel(1.0, ConstantFlux(0.5)), 1, "neumann", 3, 8,
                       np.geomspace(0.1, 8.0, 6), seed=2)
    assert (tmp_path / "a" / "curve_neumann.csv").read_bytes() == lib.to_csv().encode()


def test_ids_resume_after_interruption(tmp_path):
    full = tmp_path / "full"
    assert run(tmp_path, "ids", IDS, "--output", str(full)) == 0
    part = tmp_path / "part"
    assert run(tmp_path, "ids", IDS, "--output", str(part)) == 0
    # simulate an interruption: keep the header, three records and half a line
    for bc in ("dirichlet", "neumann"):
        prog = part / f"progress_{bc}.jsonl"
        lines = prog.read_text().splitlines()
        prog.write_text("\n".join(lines[:4]) + "\n" + lines[4][: len(lines[4]) // 2])
        (part / f"curve_{bc}.csv").unlink()
    assert run(tmp_path, "ids", IDS, "--output", str(part)) == 0
    for name in ("curve_dirichlet.csv", "curve_neumann.csv", "curve_dirichlet.json", "manifest.json"):
        assert (part / name).read_bytes() == (full / name).read_bytes()


def test_ids_progress_from_other_run_rejected(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "ids", IDS, "--output", str(out)) == 0
    assert run(tmp_path, "ids", {**IDS, "seed": 3}, "--output", str(out)) == 2


def test_ids_shards_merge_to_single_run(tmp_path):
    single = {**IDS, "boundary": "neumann"}
    assert run(tmp_path, "ids", single, "--output", str(tmp_path / "s")) == 0
    assert run(tmp_path, "ids", {**single, "indices": [0, 3]}, "--output", str(tmp_path / "p0")) == 0
    assert run(tmp_path, "ids", {**single, "indices": [3, 8]}, "--output", str(tmp_path / "p1")) == 0
    merge = {"inputs": [str(tmp_path / "p1" / "curve_neumann.json"), str(tmp_path / "p0" / "curve_neumann.json")]}
    assert run(tmp_path, "merge", merge, "--output", str(tmp_path / "m"), name="m.json") == 0
    for name in ("curve_neumann.csv", "curve_neumann.json"):
        assert (tmp_path / "m" / name).read_bytes() == (tmp_path / "s" / name).read_bytes()


def test_ids_bad_indices(tmp_path):
    assert run(tmp_path, "ids", {**IDS, "indices": [5, 20]}, "--output", str(tmp_path / "x")) == 2


def test_merge_of_different_runs_rejected(tmp_path):
    single = {**IDS, "boundary": "neumann", "samples": 2}
    run(tmp_path, "ids", single, "--output", str(tmp_path / "a"))
    run(tmp_path, "ids", {**single, "seed": 9}, "--output", str(tmp_path / "b"))
    merge = {"inputs": [str(tmp_path / "a" / "curve_neumann.json"), str(tmp_path / "b" / "curve_neumann.json")]}
    assert run(tmp_path, "merge", merge, "--output", str(tmp_path / "m"), name="m.json") == 2


def write_curve_csv(path, E, N):
    lines = ["E,N_hat,stderr,n_samples,bc,k,M,censored"]
    lines += [f"{float(e)!r},{float(n)!r},0.0,1,neumann,1,4,0" for e, n in zip(E, N)]
    path.write_text("\r\n".join(lines) + "\r\n")


def test_lifshitz_synthetic(tmp_path):
    E = np.linspace(0.05, 0.5, 10)
    write_curve_csv(tmp_path / "syn.csv", E, np.exp(-1 / E))
    out = tmp_path / "fit"
    assert run(tmp_path, "lifshitz", {"inputs": [str(tmp_path / "syn.csv")]}, "--output", str(out)) == 0
    fit = json.loads((out / "fit_0.json").read_text())
    assert abs(fit["slope"] + 1) < 1e-6 and abs(fit["C"] - 1) < 1e-9
    assert (out / "fit_0_plot.csv").exists()


def test_lifshitz_empty_window(tmp_path, capsys):
    E = np.linspace(0.05, 0.5, 10)
    write_curve_csv(tmp_path / "syn.csv", E, np.exp(-1 / E))
    cfg = {"inputs": [str(tmp_path / "syn.csv")], "window": [2.0, 3.0]}
    assert run(tmp_path, "lifshitz", cfg, "--output", str(tmp_path / "f")) == 1
    assert "fewer than 3 usable points" in capsys.readouterr().err


def test_lifshitz_on_curve_json_reports_ci(tmp_path):
    cfg = {"model": POISSON, "k": 1, "M": 2, "samples": 40, "boundary": "neumann",
           "energies": {"start": 0.5, "stop": 4.0, "num": 6}}
    assert run(tmp_path, "ids", cfg, "--output", str(tmp_path / "i")) == 0
    fit_cfg = {"inputs": [str(tmp_path / "i" / "curve_neumann.json")], "n_bootstrap": 50}
    assert run(tmp_path, "lifshitz", fit_cfg, "--output", str(tmp_path / "f"), name="f.json") == 0
    fit = json.loads((tmp_path / "f" / "fit_0.json").read_text())
    assert fit["slope_ci"] is not None and fit["C_ci"] is not None
    again = tmp_path / "f2"
    assert run(tmp_path, "lifshitz", fit_cfg, "--output", str(again), name="f.json") == 0
    assert (again / "fit_0.json").read_bytes() == (tmp_path / "f" / "fit_0.json").read_bytes()
