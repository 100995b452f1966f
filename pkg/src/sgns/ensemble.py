"""Ensemble orchestration and run-directory persistence.

A run directory is the durable record of one ensemble: the configuration
in both formats, one subdirectory per path with its ledger, snapshots and
per-path diagnostics inputs, an aggregate summary, and a manifest with a
checksum inventory. Everything written here is a pure function of the
configuration, so rerunning a config reproduces every byte, regardless of
worker count; nothing here records clocks, hosts or library versions
beyond the package version string.

Layout::

    run-<hash>/
      manifest.json         config hash, version, seeds, file checksums
      config.cfg            canonical flat text
      config.json           JSON mirror
      summary.json          per-path statistics and failure list
      diagnostics.json      written by analyze_run
      paths/<k>/ledger.csv
      paths/<k>/weakform.json
      paths/<k>/qv_emp.f64, qv_pred.f64
      paths/<k>/snapshots/snap-NNNN-rho.f64, snap-NNNN-c.f64, snap-NNNN.json
      paths/<k>/error.json  only when the path failed
"""

import json
import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as config_mod
from . import constitutive, diagnostics, solver, testfunctions, young
from .errors import (
    MissingArtifact,
    NegativeDensity,
    ParseError,
    SolverError,
)

__version__ = "0.1.0"

# Pass/fail thresholds used by analyze_run. Energy and entropy budgets are
# first order in dt and carry the quadratic variation of the noise, so
# their bands are far looser than the structural identities (weak form,
# Fenchel) that hold at rounding level.
DEFAULT_TOLERANCES = {
    "energy": 5e-3,
    "entropy": 5e-3,
    "bounds": 0.05,          # multiplicative slack on the density band
    "qv": 0.5,               # relative error of mean realized vs predicted
    "weakform": 1e-8,
    "fenchel": 1e-8,
    "orlicz": 1e-9,          # relative headroom inside the coercivity bound
    "stopping": 0.0,         # hit fractions must not increase with radius
}


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays to plain Python values."""
    if isinstance(obj, dict):
        return {key: _jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path, kind):
    if not os.path.exists(path):
        raise MissingArtifact(path)
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"{kind} file {path}: {err}") from err


def _clean(value):
    """Make a float JSON-safe (the formats below never store NaN)."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return value


def resolve_out(cfg: config_mod.RunConfig, out=None):
    """Target directory: argument, config, $SGNS_OUT_ROOT, then ./runs."""
    if out:
        return str(out)
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get("SGNS_OUT_ROOT", "runs")
    return os.path.join(root, f"run-{config_mod.config_hash(cfg)}")


def write_ledger(path, ledger, columns):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in np.asarray(ledger, dtype=float):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_ledger(path):
    """Read a ledger CSV back as (array, columns); exact round trip."""
    if not os.path.exists(path):
        raise MissingArtifact(path)
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ParseError(f"{path}: empty ledger file")
    columns = tuple(lines[0].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(columns):
            raise ParseError(
                f"{path}: line {lineno} has {len(parts)} fields, "
                f"expected {len(columns)}"
            )
        try:
            rows.append([float(v) for v in parts])
        except ValueError as err:
            raise ParseError(f"{path}: line {lineno}: {err}") from err
    if not rows:
        raise ParseError(f"{path}: ledger has no data rows")
    return np.array(rows, dtype=float), columns


def _write_snapshots(snap_dir, snapshots, cfg, k):
    os.makedirs(snap_dir, exist_ok=True)
    digest = config_mod.config_hash(cfg)
    for index, (t, rho, c) in enumerate(snapshots):
        stem = os.path.join(snap_dir, f"snap-{index:04d}")
        rho.astype("<f8").tofile(stem + "-rho.f64")
        c.astype("<f8").tofile(stem + "-c.f64")
        _dump_json(stem + ".json", {
            "index": index,
            "time": t,
            "grid": list(rho.shape),
            "coefficients": list(c.shape),
            "seed": cfg.ensemble.base_seed,
            "path": k,
            "parameters": {
                "dt": cfg.solver.dt,
                "hyper_viscosity": cfg.solver.hyper_viscosity,
                "regularization": cfg.solver.regularization,
                "config_hash": digest,
            },
        })


def read_snapshots(snap_dir):
    """Load stored snapshots back as the solver's (t, rho, c) triples."""
    if not os.path.isdir(snap_dir):
        raise MissingArtifact(snap_dir)
    sidecars = sorted(
        name for name in os.listdir(snap_dir)
        if name.startswith("snap-") and name.endswith(".json")
    )
    snapshots = []
    for name in sidecars:
        meta = _load_json(os.path.join(snap_dir, name), "snapshot")
        stem = os.path.join(snap_dir, name[:-5])
        rho = np.fromfile(stem + "-rho.f64", dtype="<f8")
        c = np.fromfile(stem + "-c.f64", dtype="<f8")
        try:
            rho = rho.reshape(meta["grid"])
            c = c.reshape(meta["coefficients"])
        except ValueError as err:
            raise ParseError(f"{stem}: {err}") from err
        snapshots.append((float(meta["time"]), rho, c))
    return snapshots


def _path_worker(config_text, k, paths_root):
    """Simulate one path and persist its artifacts; returns (k, stats).

    Module-level and argument-picklable so a process pool can run it; every
    byte written depends only on (config, k).
    """
    cfg = config_mod.parse_text(config_text)
    parts = config_mod.build_components(cfg)
    path_dir = os.path.join(paths_root, str(k))
    os.makedirs(path_dir, exist_ok=True)
    weak_tests = (
        testfunctions.canonical_weak_tests(parts.basis)
        if cfg.diagnostics.weakform else ()
    )
    s = cfg.solver
    try:
        result = solver.solve_path(
            parts.basis, parts.model, parts.forcing, parts.params, parts.law,
            s.t_final, seed=cfg.ensemble.base_seed, path=k,
            weak_tests=weak_tests,
            snapshot_every=s.snapshot_every if s.snapshot_every > 0 else None,
            stop_norm=s.stop_norm if math.isfinite(s.stop_norm) else None,
            stop_dissipation=(
                s.stop_dissipation if math.isfinite(s.stop_dissipation)
                else None
            ),
        )
    except (SolverError, NegativeDensity) as err:
        _dump_json(os.path.join(path_dir, "error.json"), {
            "error": type(err).__name__,
            "message": str(err),
            "t": _clean(getattr(err, "t", None)),
        })
        return k, {"failed": True, "error": type(err).__name__}

    write_ledger(os.path.join(path_dir, "ledger.csv"),
                 result.ledger, result.columns)
    if result.qv_emp is not None:
        result.qv_emp.astype("<f8").tofile(
            os.path.join(path_dir, "qv_emp.f64"))
        result.qv_pred.astype("<f8").tofile(
            os.path.join(path_dir, "qv_pred.f64"))
    if weak_tests:
        _dump_json(os.path.join(path_dir, "weakform.json"), result.weak)
    if s.snapshot_every > 0:
        _write_snapshots(os.path.join(path_dir, "snapshots"),
                         result.snapshots, cfg, k)

    ledger = result.ledger
    names = list(result.columns)
    mass = ledger[:, names.index("mass")]
    return k, {
        "failed": False,
        "rows": int(ledger.shape[0]),
        "final_t": float(ledger[-1, names.index("t")]),
        "stopped_at": _clean(result.stopped_at),
        "mass_initial": float(mass[0]),
        "mass_final": float(mass[-1]),
        "min_rho": float(np.min(ledger[:, names.index("min_rho")])),
        "final_kinetic": float(ledger[-1, names.index("kinetic")]),
        "max_norm_u": float(np.max(ledger[:, names.index("norm_u")])),
    }


def _inventory(root, skip=("manifest.json",)):
    files = {}
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root)
            if rel in skip:
                continue
            with open(full, "rb") as fh:
                data = fh.read()
            files[rel] = {
                "bytes": len(data),
                "fnv1a64": f"{config_mod.fnv1a64(data):016x}",
            }
    return files


def run_ensemble(cfg, out=None, workers=None, path_indices=None):
    """Simulate an ensemble into a fresh run directory; returns its path.

    Paths are independent given (config, index), so failures are isolated:
    a failing path leaves an error record and the run proceeds. The
    directory is assembled in a sibling staging directory and published
    atomically, so a crash never leaves a half-written run in place.
    """
    config_mod.validate(cfg)
    target = resolve_out(cfg, out)
    if os.path.exists(target):
        raise FileExistsError(f"run directory already exists: {target}")
    if workers is None:
        workers = int(os.environ.get("SGNS_WORKERS", "1"))
    if path_indices is None:
        path_indices = range(cfg.ensemble.paths)
    path_indices = [int(k) for k in path_indices]

    staging = target + ".partial"
    if os.path.exists(staging):
        shutil.rmtree(staging)
    os.makedirs(os.path.join(staging, "paths"))
    text = config_mod.to_text(cfg)
    with open(os.path.join(staging, "config.cfg"), "w") as fh:
        fh.write(text)
    with open(os.path.join(staging, "config.json"), "w") as fh:
        fh.write(config_mod.to_json_text(cfg))

    paths_root = os.path.join(staging, "paths")
    if workers > 1 and len(path_indices) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                _path_worker, [text] * len(path_indices), path_indices,
                [paths_root] * len(path_indices),
            ))
    else:
        results = [_path_worker(text, k, paths_root) for k in path_indices]

    stats = {str(k): entry for k, entry in results}
    failed = sorted(k for k, entry in results if entry["failed"])
    _dump_json(os.path.join(staging, "summary.json"), {
        "config_hash": config_mod.config_hash(cfg),
        "paths": stats,
        "failed_paths": failed,
    })
    _dump_json(os.path.join(staging, "manifest.json"), {
        "config_hash": config_mod.config_hash(cfg),
        "version": __version__,
        "paths": len(path_indices),
        "base_seed": cfg.ensemble.base_seed,
        "path_seeds": [[k, cfg.ensemble.base_seed, k] for k in path_indices],
        "files": _inventory(staging),
    })
    os.replace(staging, target)
    return target


def verify_manifest(run_dir):
    """Recompute the checksum inventory; returns sorted mismatched paths."""
    manifest = _load_json(os.path.join(run_dir, "manifest.json"), "manifest")
    fresh = _inventory(run_dir, skip=("manifest.json", "diagnostics.json"))
    stored = {
        rel: entry for rel, entry in manifest["files"].items()
        if rel != "diagnostics.json"
    }
    mismatched = set(stored) ^ set(fresh)
    for rel in set(stored) & set(fresh):
        if stored[rel] != fresh[rel]:
            mismatched.add(rel)
    return sorted(mismatched)


def read_summary(run_dir):
    return _load_json(os.path.join(run_dir, "summary.json"), "summary")


def read_diagnostics(run_dir):
    return _load_json(os.path.join(run_dir, "diagnostics.json"),
                      "diagnostics")


def load_run(run_dir):
    """Read manifest, config and per-path artifacts needed for analysis."""
    manifest = _load_json(os.path.join(run_dir, "manifest.json"), "manifest")
    config_path = os.path.join(run_dir, "config.cfg")
    if not os.path.exists(config_path):
        raise MissingArtifact(config_path)
    with open(config_path) as fh:
        cfg = config_mod.parse_text(fh.read())
    summary = _load_json(os.path.join(run_dir, "summary.json"), "summary")
    return manifest, cfg, summary


def _path_indices(manifest):
    return [entry[0] for entry in manifest["path_seeds"]]


def analyze_run(run_dir, selection=None):
    """Run the enabled diagnostics on a stored run; writes diagnostics.json.

    selection limits the checks (names from DEFAULT_TOLERANCES); a check
    whose preconditions are unmet is reported as skipped with the reason
    rather than silently passing. Returns the diagnostics mapping.
    """
    manifest, cfg, summary = load_run(run_dir)
    failed = set(summary["failed_paths"])
    live = [k for k in _path_indices(manifest) if k not in failed]
    toggles = cfg.diagnostics

    def wanted(name, enabled):
        if not enabled:
            return False
        return selection is None or name in selection

    ledgers = {}
    columns = None
    for k in live:
        ledger, cols = read_ledger(
            os.path.join(run_dir, "paths", str(k), "ledger.csv"))
        ledgers[k] = ledger
        columns = cols

    checks = {}
    if wanted("energy", toggles.energy):
        tol = DEFAULT_TOLERANCES["energy"]
        per_path = {}
        worst = -math.inf
        for k in live:
            _, res = diagnostics.ledger_residual(ledgers[k], columns)
            per_path[str(k)] = {
                "final": res["final"],
                "max_cumulative": res["max_cumulative"],
                "max_abs_cumulative": res["max_abs_cumulative"],
            }
            worst = max(worst, res["max_cumulative"])
        checks["energy"] = {
            "pass": bool(live) and worst <= tol,
            "tolerance": tol,
            "measured": _clean(worst if live else None),
            "per_path": per_path,
        }

    if wanted("entropy", toggles.entropy):
        tol = DEFAULT_TOLERANCES["entropy"]
        per_path = {}
        worst = 0.0
        for k in live:
            _, res = diagnostics.entropy_residual(ledgers[k], columns)
            per_path[str(k)] = res
            worst = max(worst, res["max_abs_cumulative"])
        checks["entropy"] = {
            "pass": bool(live) and worst <= tol,
            "tolerance": tol,
            "measured": _clean(worst if live else None),
            "per_path": per_path,
        }

    if wanted("bounds", toggles.bounds):
        slack = DEFAULT_TOLERANCES["bounds"]
        per_path = {}
        worst = math.inf
        ok = bool(live)
        for k in live:
            res = diagnostics.pointwise_bounds(ledgers[k], columns,
                                               slack=slack)
            per_path[str(k)] = {
                "satisfied": res["satisfied"],
                "worst_lower_margin": res["worst_lower_margin"],
                "worst_upper_margin": res["worst_upper_margin"],
            }
            ok = ok and res["satisfied"]
            worst = min(worst, res["worst_lower_margin"],
                        res["worst_upper_margin"])
        checks["bounds"] = {
            "pass": ok,
            "tolerance": slack,
            "measured": _clean(worst if live else None),
            "per_path": per_path,
        }

    if wanted("qv", toggles.qv):
        if cfg.noise.count == 0:
            checks["qv"] = {"skipped": "noise disabled (count = 0)"}
        else:
            emp, pred = [], []
            for k in live:
                base = os.path.join(run_dir, "paths", str(k))
                emp_path = os.path.join(base, "qv_emp.f64")
                if not os.path.exists(emp_path):
                    raise MissingArtifact(emp_path)
                emp.append(np.fromfile(emp_path, dtype="<f8"))
                pred.append(np.fromfile(
                    os.path.join(base, "qv_pred.f64"), dtype="<f8"))
            dim = cfg.domain.dim
            n = emp[0].size // dim
            emp = np.array(emp).reshape(len(live), dim, n)
            pred = np.array(pred).reshape(len(live), dim, n)
            res = diagnostics.martingale_qv_check(emp, pred)
            tol = DEFAULT_TOLERANCES["qv"]
            checks["qv"] = {
                "pass": res["total_relative_error"] <= tol,
                "tolerance": tol,
                "measured": res["total_relative_error"],
                "detail": res,
            }

    if wanted("weakform", toggles.weakform):
        weaks = []
        for k in live:
            weaks.append(_load_json(
                os.path.join(run_dir, "paths", str(k), "weakform.json"),
                "weakform"))
        summary_weak = diagnostics.weak_form_summary(weaks)
        tol = DEFAULT_TOLERANCES["weakform"]
        worst = max(
            (max(entry.values()) for entry in summary_weak.values()),
            default=0.0,
        )
        checks["weakform"] = {
            "pass": bool(weaks) and worst <= tol,
            "tolerance": tol,
            "measured": worst,
            "per_test": summary_weak,
        }

    if wanted("stopping", toggles.stopping):
        if not cfg.solver.stop_radii:
            checks["stopping"] = {"skipped": "no stop_radii configured"}
        else:
            names = list(columns)
            norm_series = [ledgers[k][:, names.index("norm_u")] for k in live]
            diss_series = [
                ledgers[k][:, names.index("dissipation_F")] for k in live
            ]
            report = diagnostics.stopping_statistics(
                norm_series, diss_series, cfg.solver.dt,
                cfg.solver.stop_radii)
            increases = [
                report.hit_fractions[i + 1] - report.hit_fractions[i]
                for i in range(len(report.hit_fractions) - 1)
            ]
            worst = max(increases, default=0.0)
            checks["stopping"] = {
                "pass": worst <= DEFAULT_TOLERANCES["stopping"],
                "tolerance": DEFAULT_TOLERANCES["stopping"],
                "measured": worst,
                "radii": list(report.radii),
                "norm_thresholds": list(report.norm_thresholds),
                "dissipation_thresholds": list(
                    report.dissipation_thresholds),
                "hit_fractions": list(report.hit_fractions),
                "fitted_constant": report.fitted_constant,
            }

    needs_snapshots = (
        wanted("fenchel", toggles.fenchel)
        or wanted("orlicz", toggles.orlicz)
    )
    snapshots = {}
    if needs_snapshots and cfg.solver.snapshot_every > 0:
        parts = config_mod.build_components(cfg)
        for k in live:
            snapshots[k] = read_snapshots(
                os.path.join(run_dir, "paths", str(k), "snapshots"))

    if wanted("fenchel", toggles.fenchel):
        if cfg.solver.snapshot_every == 0:
            checks["fenchel"] = {"skipped": "no snapshots stored"}
        else:
            tol = DEFAULT_TOLERANCES["fenchel"]
            per_path = {
                str(k): diagnostics.fenchel_checkpoint_check(
                    parts.basis, parts.model, snapshots[k])
                for k in live
            }
            worst = max(per_path.values(), default=0.0)
            checks["fenchel"] = {
                "pass": bool(live) and worst <= tol,
                "tolerance": tol,
                "measured": _clean(worst if live else None),
                "per_path": per_path,
            }

    if wanted("orlicz", toggles.orlicz):
        edges = cfg.domain.lengths_tuple()
        if cfg.solver.snapshot_every == 0:
            checks["orlicz"] = {"skipped": "no snapshots stored"}
        elif cfg.domain.family != "sine":
            checks["orlicz"] = {
                "skipped": "needs the boundary-vanishing family"}
        elif any(edge > 1.0 + 1e-12 for edge in edges):
            checks["orlicz"] = {"skipped": "needs box edges <= 1"}
        else:
            per_path = {}
            ok = bool(live)
            worst = 0.0
            for k in live:
                ratios = [
                    diagnostics.orlicz_velocity_check(
                        parts.basis, parts.model, c)
                    for _, _, c in snapshots[k]
                ]
                sat = all(r["satisfied"] for r in ratios)
                peak = max((r["ratio"] for r in ratios), default=0.0)
                per_path[str(k)] = {"satisfied": sat, "worst_ratio": peak}
                ok = ok and sat
                worst = max(worst, peak)
            checks["orlicz"] = {
                "pass": ok,
                "tolerance": DEFAULT_TOLERANCES["orlicz"],
                "measured": worst,
                "per_path": per_path,
            }

    ran = [c for c in checks.values() if "skipped" not in c]
    result = {
        "config_hash": manifest["config_hash"],
        "checks": checks,
        "failed_paths": sorted(failed),
        "all_pass": not failed and all(c["pass"] for c in ran),
    }
    _dump_json(os.path.join(run_dir, "diagnostics.json"), result)
    return result


def _csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def emit_report(run_dirs, out_dir):
    """Flatten diagnostics of one or more runs into per-family CSV tables.

    Each table carries a header row and a stable column order; a family
    absent from every run still gets its header-only file, so downstream
    consumers never branch on file existence. Returns the table paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    loaded = []
    for run_dir in run_dirs:
        diag_path = os.path.join(run_dir, "diagnostics.json")
        if os.path.exists(diag_path):
            diag = _load_json(diag_path, "diagnostics")
        else:
            diag = analyze_run(run_dir)
        loaded.append((os.path.basename(os.path.normpath(run_dir)), diag))

    checks_rows = []
    energy_rows, entropy_rows, bounds_rows = [], [], []
    qv_rows, weak_rows, stop_rows = [], [], []
    fenchel_rows, orlicz_rows = [], []
    for run, diag in loaded:
        for name in sorted(diag["checks"]):
            entry = diag["checks"][name]
            if "skipped" in entry:
                checks_rows.append([run, name, "skipped", "", ""])
                continue
            measured = entry.get("measured")
            checks_rows.append([
                run, name, entry["pass"],
                "" if measured is None else measured, entry["tolerance"],
            ])
        checks = diag["checks"]
        for k, res in sorted(checks.get("energy", {}).get(
                "per_path", {}).items(), key=lambda kv: int(kv[0])):
            energy_rows.append([run, k, res["final"], res["max_cumulative"],
                                res["max_abs_cumulative"]])
        for k, res in sorted(checks.get("entropy", {}).get(
                "per_path", {}).items(), key=lambda kv: int(kv[0])):
            entropy_rows.append([run, k, res["final"],
                                 res["max_abs_cumulative"]])
        for k, res in sorted(checks.get("bounds", {}).get(
                "per_path", {}).items(), key=lambda kv: int(kv[0])):
            bounds_rows.append([run, k, res["satisfied"],
                                res["worst_lower_margin"],
                                res["worst_upper_margin"]])
        qv = checks.get("qv", {})
        if "detail" in qv:
            qv_rows.append([run, qv["detail"]["paths"],
                            qv["detail"]["total_relative_error"],
                            qv["detail"]["worst_coefficient_error"],
                            qv["detail"]["significant_coefficients"]])
        for name, entry in sorted(checks.get("weakform", {}).get(
                "per_test", {}).items()):
            weak_rows.append([run, name, entry["momentum_residual"],
                              entry["continuity_residual"]])
        stopping = checks.get("stopping", {})
        if "radii" in stopping:
            for i, radius in enumerate(stopping["radii"]):
                stop_rows.append([
                    run, radius, stopping["norm_thresholds"][i],
                    stopping["dissipation_thresholds"][i],
                    stopping["hit_fractions"][i],
                ])
        for k, worst in sorted(checks.get("fenchel", {}).get(
                "per_path", {}).items(), key=lambda kv: int(kv[0])):
            fenchel_rows.append([run, k, worst])
        for k, res in sorted(checks.get("orlicz", {}).get(
                "per_path", {}).items(), key=lambda kv: int(kv[0])):
            orlicz_rows.append([run, k, res["satisfied"],
                                res["worst_ratio"]])

    tables = [
        ("checks.csv", ["run", "check", "passed", "measured", "tolerance"],
         checks_rows),
        ("energy.csv", ["run", "path", "final_residual", "max_cumulative",
                        "max_abs_cumulative"], energy_rows),
        ("entropy.csv", ["run", "path", "final_residual",
                         "max_abs_cumulative"], entropy_rows),
        ("bounds.csv", ["run", "path", "satisfied", "worst_lower_margin",
                        "worst_upper_margin"], bounds_rows),
        ("qv.csv", ["run", "paths", "total_relative_error",
                    "worst_coefficient_error", "significant_coefficients"],
         qv_rows),
        ("weakform.csv", ["run", "test", "max_momentum_residual",
                          "max_continuity_residual"], weak_rows),
        ("stopping.csv", ["run", "radius", "norm_threshold",
                          "dissipation_threshold", "hit_fraction"],
         stop_rows),
        ("fenchel.csv", ["run", "path", "worst_gap"], fenchel_rows),
        ("orlicz.csv", ["run", "path", "satisfied", "worst_ratio"],
         orlicz_rows),
    ]
    written = []
    for name, header, rows in tables:
        path = os.path.join(out_dir, name)
        _csv(path, header, rows)
        written.append(path)
    return written


def ym_analyze(run_dirs, time_bins, space_bins, out_dir):
    """Empirical-measure analysis of stored runs; writes young.json.

    Builds per-path empirical measures on a (time, space) partition from
    the stored snapshots, reports their first moments and the worst
    cellwise Fenchel gap, and, when several runs form a resolution ladder,
    the inter-resolution defect table. Measure supports are saved as CSV
    next to young.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    runs = []
    ladder = []
    for run_dir in run_dirs:
        manifest, cfg, summary = load_run(run_dir)
        if cfg.solver.snapshot_every == 0:
            raise MissingArtifact(
                os.path.join(run_dir, "paths", "0", "snapshots"))
        parts = config_mod.build_components(cfg)
        failed = set(summary["failed_paths"])
        live = [k for k in _path_indices(manifest) if k not in failed]
        blocks = []
        first_snapshots = None
        for k in live:
            snaps = read_snapshots(
                os.path.join(run_dir, "paths", str(k), "snapshots"))
            if first_snapshots is None:
                first_snapshots = snaps
            for t, rho, c in snaps:
                blocks.append(young.flow_block(
                    parts.basis, parts.model, k, t, rho, c))
        partition = young.PartitionSpec(
            t_final=cfg.solver.t_final,
            lengths=cfg.domain.lengths_tuple(),
            time_bins=time_bins,
            space_bins=(space_bins,) * cfg.domain.dim,
        )
        per_path = young.per_path_measures(blocks, partition)
        layout = young.state_layout(cfg.domain.dim)
        run_name = os.path.basename(os.path.normpath(run_dir))
        run_entry = {
            "run": run_name,
            "config_hash": manifest["config_hash"],
            "modes": list(cfg.domain.modes_tuple()),
            "paths": len(per_path),
            "cells": partition.cell_count,
            "measures": {},
        }
        for k, measure in per_path.items():
            def mean_r(positions, states):
                return states[:, layout["r"]].sum(axis=1)

            def kinetic(positions, states):
                r = states[:, layout["r"]].sum(axis=1)
                w = states[:, layout["w"]]
                return 0.5 * r * np.sum(w**2, axis=1)

            def fenchel_gap(positions, states):
                d = cfg.domain.dim
                s_flat = states[:, layout["s"]]
                d_flat = states[:, layout["d"]]
                stress = s_flat.reshape(-1, d, d).transpose(1, 2, 0)
                strain = d_flat.reshape(-1, d, d).transpose(1, 2, 0)
                return np.abs(constitutive.fenchel_gap(
                    parts.model, stress, strain))

            stem = os.path.join(out_dir, f"measure-{run_name}-path{k}")
            young.write_measure(measure, stem)
            run_entry["measures"][str(k)] = {
                "csv": os.path.basename(stem) + ".csv",
                "mean_r": float(np.mean(young.pair(measure, mean_r))),
                "mean_kinetic": float(
                    np.mean(young.pair(measure, kinetic))),
                "max_fenchel_gap": float(
                    np.max(young.pair(measure, fenchel_gap))),
            }
        runs.append(run_entry)
        ladder.append(young.LadderRun(
            modes=max(cfg.domain.modes_tuple()), basis=parts.basis,
            model=parts.model, snapshots=first_snapshots))

    report = {"runs": runs}
    if len(ladder) >= 2:
        ladder.sort(key=lambda r: r.modes)
        report["ladder"] = young.energy_defect_ladder(ladder)
    _dump_json(os.path.join(out_dir, "young.json"), report)
    return report
