"""Three-stage batch orchestration with a manifest and resumable run dirs.

A run directory is owned by one pipeline invocation at a time (lock file)
and carries a manifest recording the config hash, per-stage status and the
artifact listing.  Stages: grid sweep -> surrogate optimization -> nonlinear
gain, plus a pure reporting step that re-emits plot-ready tables.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .bayesopt import SearchSpace, optimize_metric
from .config import ConfigError, RunConfig, load_config
from .fileio import atomic_write_text, format_float, read_json, sha256_of_file, write_json
from .metric import MetricBreakdown
from .mixing import DriveSpec, optimize_working_point
from .network import DeviceParams, dispersion, simulate_linear
from .snail import JunctionSpec, SnailSpec, critical_current, expand_potential
from .sweep import (
    DIMENSION_NAMES,
    SweepConfig,
    bias_flux_for_alpha,
    build_analysis,
    device_from_values,
    evaluate_point,
    metric_frequency_grid,
    read_records_csv,
    run_sweep,
    table_grid,
    write_records_csv,
)
from .touchstone import write_touchstone

TOOL_VERSION = "0.1.0"

STAGE_ORDER = ("stage1", "optimize", "stage3", "report")

TRACE_COLUMNS = ("combo_id", "iteration") + DIMENSION_NAMES + (
    "metric_total", "is_incumbent")


class PipelineError(RuntimeError):
    """Unrecoverable runtime failure inside a stage."""


@dataclass(frozen=True)
class RunPaths:
    """Canonical artifact locations inside one run directory."""

    run_dir: str

    def _p(self, name):
        return os.path.join(self.run_dir, name)

    @property
    def manifest(self):
        return self._p("manifest.json")

    @property
    def config_copy(self):
        return self._p("config.json")

    @property
    def lock(self):
        return self._p("lock")

    @property
    def checkpoint(self):
        return self._p("stage1_checkpoint.jsonl")

    @property
    def stage1_csv(self):
        return self._p("stage1_records.csv")

    @property
    def stage1_analysis(self):
        return self._p("stage1_analysis.json")

    @property
    def trace_csv(self):
        return self._p("optimize_trace.csv")

    @property
    def pstar_json(self):
        return self._p("pstar.json")

    @property
    def pstar_s2p(self):
        return self._p("pstar.s2p")

    @property
    def working_points(self):
        return self._p("working_points.csv")

    @property
    def qstar_json(self):
        return self._p("qstar.json")

    def gain_profile(self, i):
        return self._p(f"gain_profile_{i:03d}.csv")

    @property
    def report_dir(self):
        return self._p("report")

    def report_file(self, name):
        return os.path.join(self.report_dir, name)


class RunLock:
    """Exclusive run-directory ownership via an O_EXCL lock file."""

    def __init__(self, paths: RunPaths):
        self.path = paths.lock
        self._fh = None

    def __enter__(self):
        try:
            self._fh = open(self.path, "x")
        except FileExistsError:
            raise PipelineError(
                f"run directory is locked by another process; remove "
                f"{self.path} if that run is no longer alive"
            ) from None
        self._fh.write(f"{os.getpid()}\n")
        self._fh.flush()
        return self

    def __exit__(self, *exc):
        if self._fh is not None:
            self._fh.close()
            try:
                os.unlink(self.path)
            except OSError:
                pass
        return False


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _new_manifest(config_sha: str) -> dict:
    return {
        "tool_version": TOOL_VERSION,
        "config_file": "config.json",
        "config_sha256": config_sha,
        "created_utc": _utcnow(),
        "updated_utc": _utcnow(),
        "stages": {name: {"status": "pending"} for name in STAGE_ORDER},
    }


def _save_manifest(paths: RunPaths, manifest: dict):
    manifest["updated_utc"] = _utcnow()
    write_json(paths.manifest, manifest)


def prepare_run_dir(config_path, cfg: RunConfig, force: bool = False):
    """Create/open the run directory, enforce config-hash consistency.

    Returns (paths, manifest).  An existing manifest with a different
    config hash is refused unless force is set, in which case the run state
    is reset and any stale sweep checkpoint is removed.
    """
    paths = RunPaths(cfg.output_dir)
    os.makedirs(paths.run_dir, exist_ok=True)
    config_sha = sha256_of_file(config_path)

    manifest = None
    if os.path.exists(paths.manifest):
        manifest = read_json(paths.manifest)
        if manifest.get("config_sha256") != config_sha:
            if not force:
                raise PipelineError(
                    f"config hash {config_sha[:12]} does not match the "
                    f"manifest in {paths.run_dir} "
                    f"({str(manifest.get('config_sha256'))[:12]}); pass "
                    f"--force to restart this run directory"
                )
            manifest = None
            if os.path.exists(paths.checkpoint):
                os.unlink(paths.checkpoint)  # keyed to the old config
    if manifest is None:
        manifest = _new_manifest(config_sha)

    if os.path.abspath(config_path) != os.path.abspath(paths.config_copy):
        with open(config_path, "rb") as fh:
            data = fh.read()
        atomic_write_text(paths.config_copy, data.decode("utf-8"))
    _save_manifest(paths, manifest)
    return paths, manifest


def _stage_begin(paths, manifest, name, **extra):
    manifest["stages"][name] = {
        "status": "running",
        "started_utc": _utcnow(),
        **extra,
    }
    _save_manifest(paths, manifest)


def _stage_finish(paths, manifest, name, outputs, **extra):
    stage = manifest["stages"][name]
    stage.update(status="complete", finished_utc=_utcnow(),
                 outputs=list(outputs), **extra)
    _save_manifest(paths, manifest)


def _stage_fail(paths, manifest, name, exc):
    manifest["stages"][name].update(
        status="failed", finished_utc=_utcnow(),
        error=f"{type(exc).__name__}: {exc}")
    _save_manifest(paths, manifest)


def stage_is_complete(paths: RunPaths, manifest: dict, name: str) -> bool:
    stage = manifest["stages"].get(name, {})
    if stage.get("status") != "complete":
        return False
    return all(
        os.path.exists(os.path.join(paths.run_dir, out))
        for out in stage.get("outputs", [])
    )


def _sweep_config(cfg: RunConfig) -> SweepConfig:
    return SweepConfig(
        cell_count=cfg.cell_count, freq_grid=cfg.freq_grid, cell=cfg.cell)


def run_stage1(cfg: RunConfig, paths: RunPaths, manifest: dict,
               workers: int = 1, progress=None) -> int:
    """Grid sweep -> records CSV + analysis JSON.  Returns failed-row count."""
    _stage_begin(paths, manifest, "stage1", workers=workers)
    try:
        records = run_sweep(
            cfg.grid, _sweep_config(cfg), cfg.metric,
            workers=workers, checkpoint_path=paths.checkpoint,
            progress=progress,
        )
        write_records_csv(paths.stage1_csv, records)
        analysis = build_analysis(cfg.grid, records, cfg.metric.cutoff)
        write_json(paths.stage1_analysis, analysis.to_document())
    except Exception as exc:
        _stage_fail(paths, manifest, "stage1", exc)
        raise
    failed = sum(1 for r in records if r.failed)
    _stage_finish(
        paths, manifest, "stage1",
        ["stage1_records.csv", "stage1_analysis.json",
         "stage1_checkpoint.jsonl"],
        grid_points=cfg.grid.size, failed_points=failed)
    return failed


def build_search_space(cfg: RunConfig) -> SearchSpace:
    """Continuous junction area / current density / thickness; the low-
    cardinality dimensions are enumerated exactly."""
    grid = cfg.grid
    continuous, enumerated = [], []
    for name, dim in (("A_J", grid.a_j), ("rho_Ic", grid.rho_ic), ("t", grid.t)):
        if dim.count == 1:
            enumerated.append((name, (float(dim.minimum),)))
        else:
            continuous.append((name, float(dim.minimum), float(dim.maximum)))
    for name, dim in (("alpha", grid.alpha), ("L_load", grid.l_load),
                      ("C_load", grid.c_load), ("pitch", grid.pitch)):
        enumerated.append((name, tuple(float(v) for v in dim.values())))
    if not continuous:
        raise ConfigError(
            "grid: surrogate optimization needs at least one continuous "
            "dimension (A_J, rho_Ic or t with more than one grid point)")
    return SearchSpace(continuous=tuple(continuous), enumerated=tuple(enumerated))


def make_objective(cfg: RunConfig):
    """Metric total as a function of a raw parameter dict."""
    sweep_cfg = _sweep_config(cfg)

    def objective(params: dict) -> float:
        device = device_from_values(
            [params[name] for name in DIMENSION_NAMES], cfg.cell_count)
        flux = bias_flux_for_alpha(
            device.alpha,
            JunctionSpec(device.junction_area, device.current_density))
        return evaluate_point(device, flux, sweep_cfg, cfg.metric).total

    return objective


def nearest_table_point(params: dict) -> dict:
    """Snap each parameter to the closest production-grid value."""
    table = table_grid()
    snapped = {}
    for name, dim in zip(DIMENSION_NAMES, table.dims()):
        values = dim.values()
        snapped[name] = float(values[np.argmin(np.abs(values - params[name]))])
    return snapped


def _write_trace_csv(path, history):
    lines = [",".join(TRACE_COLUMNS)]
    for h in history:
        fields = [str(h.combo_id), str(h.iteration)]
        for name in DIMENSION_NAMES:
            value = h.params[name]
            fields.append(
                str(int(round(value))) if name == "pitch"
                else format_float(float(value)))
        fields.append(format_float(float(h.metric)))
        fields.append("true" if h.is_incumbent else "false")
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _breakdown_doc(b: MetricBreakdown) -> dict:
    return {
        "matching_term": b.matching_term,
        "phase_term": b.phase_term,
        "harmonic_term": b.harmonic_term,
        "total": b.total,
        "band_mean_s11_re": float(np.real(b.band_mean_s11)),
        "band_mean_s11_im": float(np.imag(b.band_mean_s11)),
        "delta_k": b.delta_k,
        "matching_capped": b.matching_capped,
    }


def run_optimize(cfg: RunConfig, paths: RunPaths, manifest: dict,
                 stage1_csv=None, seed=None, budget=None,
                 cold_start: bool = False) -> dict:
    """Surrogate optimization -> trace CSV + p* JSON.  Returns the p* doc."""
    seed = cfg.bo_seed if seed is None else seed
    budget = cfg.bo_budget if budget is None else budget
    stage1_csv = stage1_csv or paths.stage1_csv

    warm = None
    if not cold_start:
        if not os.path.exists(stage1_csv):
            raise ConfigError(
                f"stage-1 records {stage1_csv} not found; run stage1 first "
                f"or pass --cold-start")
        warm = [(params, metric)
                for params, metric, _failed in read_records_csv(stage1_csv)]

    _stage_begin(paths, manifest, "optimize", seed=seed, budget=budget,
                 cold_start=cold_start)
    try:
        space = build_search_space(cfg)
        try:
            result = optimize_metric(
                space, make_objective(cfg), budget=budget, seed=seed,
                warm_start=warm)
        except ValueError as exc:  # budget precondition
            raise ConfigError(str(exc)) from exc
        _write_trace_csv(paths.trace_csv, result.history)

        device = device_from_values(
            [result.best_params[n] for n in DIMENSION_NAMES], cfg.cell_count)
        flux = bias_flux_for_alpha(
            device.alpha,
            JunctionSpec(device.junction_area, device.current_density))
        breakdown = evaluate_point(device, flux, _sweep_config(cfg), cfg.metric)
        doc = {
            "params": {n: result.best_params[n] for n in DIMENSION_NAMES},
            "cell_count": cfg.cell_count,
            "flux_ext_phi0": flux,
            "metric": _breakdown_doc(breakdown),
            "matching_mode": cfg.metric.matching_mode,
            "nearest_grid_point": nearest_table_point(result.best_params),
            "combo_id": result.best_combo_id,
            "seed": seed,
            "budget": budget,
            "new_evaluations": result.new_evaluations,
            "warm_start_size": 0 if warm is None else len(warm),
        }
        write_json(paths.pstar_json, doc)
    except Exception as exc:
        _stage_fail(paths, manifest, "optimize", exc)
        raise
    _stage_finish(paths, manifest, "optimize",
                  ["optimize_trace.csv", "pstar.json"],
                  inputs=[os.path.basename(stage1_csv)] if warm else [])
    return doc


def _device_from_doc(doc: dict) -> DeviceParams:
    params = doc["params"]
    return device_from_values(
        [params[n] for n in DIMENSION_NAMES], int(doc["cell_count"]))


def _resolve_stage3_flux(cfg: RunConfig, pstar_doc: dict) -> float:
    drive = cfg.drive
    if drive.flux_phi0 is not None:
        return float(drive.flux_phi0)
    if drive.flux_current_ua is not None:
        mutual = cfg.cell.mutual_phi0_per_ua
        if mutual is None:
            raise ConfigError(
                "drive.flux_current_ua requires cell.mutual_phi0_per_ua")
        return float(drive.flux_current_ua) * mutual
    return float(pstar_doc["flux_ext_phi0"])


def _write_gain_profile_csv(path, profile):
    lines = ["f_signal_Hz,gain_dB,pump_depletion"]
    for f, g, d in zip(profile.freqs, profile.gain_db, profile.pump_depletion):
        lines.append(",".join(
            (format_float(float(f)), format_float(float(g)),
             format_float(float(d)))))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_working_points_csv(path, rows):
    lines = ["pump_amplitude_uA,flux_phi0,performance_dB"]
    for row in rows:
        lines.append(",".join((
            format_float(row["pump_amplitude_ua"]),
            format_float(row["flux_phi0"]),
            format_float(row["performance_db"]),
        )))
    atomic_write_text(path, "\n".join(lines) + "\n")


def run_stage3(cfg: RunConfig, paths: RunPaths, manifest: dict,
               pstar_path=None) -> dict:
    """Nonlinear drive sweep at p* -> s2p, per-drive gain CSVs, q* JSON."""
    pstar_path = pstar_path or paths.pstar_json
    if not os.path.exists(pstar_path):
        raise ConfigError(f"p* file {pstar_path} not found; run optimize first")
    pstar_doc = read_json(pstar_path)

    _stage_begin(paths, manifest, "stage3",
                 inputs=[os.path.basename(pstar_path)])
    try:
        device = _device_from_doc(pstar_doc)
        junction = JunctionSpec(device.junction_area, device.current_density)
        flux = _resolve_stage3_flux(cfg, pstar_doc)

        grid = metric_frequency_grid(cfg.freq_grid, cfg.metric.pump_freq)
        resp = simulate_linear(device, flux, grid, cfg.cell)
        disp = dispersion(resp, device.cell_count)
        write_touchstone(paths.pstar_s2p, resp)

        expansion = expand_potential(
            SnailSpec(small_junction=junction, alpha=device.alpha,
                      flux_ext=flux))
        i_c_small = critical_current(junction)
        amps = cfg.drive.pump_amplitudes_ua
        template = DriveSpec(
            pump_freq=cfg.metric.pump_freq,
            signal_band=cfg.drive.signal_band,
            signal_step=cfg.drive.signal_step,
            pump_amplitude_ua=amps[0],
        )
        wp = optimize_working_point(
            disp, expansion, device.cell_count, i_c_small,
            template, amps, flux)

        outputs = ["pstar.s2p", "working_points.csv", "qstar.json"]
        best_profile_file = None
        for i, (row, profile) in enumerate(zip(wp.rows, wp.profiles), start=1):
            if profile is None:
                continue
            name = f"gain_profile_{i:03d}.csv"
            _write_gain_profile_csv(paths.gain_profile(i), profile)
            outputs.append(name)
            if (row["pump_amplitude_ua"] == wp.best["pump_amplitude_ua"]
                    and best_profile_file is None):
                best_profile_file = name
        _write_working_points_csv(paths.working_points, wp.rows)

        qstar_doc = {
            "pump_amplitude_ua": wp.best["pump_amplitude_ua"],
            "xi": wp.best["pump_amplitude_ua"] / (2.0 * i_c_small),
            "flux_phi0": flux,
            "performance_db": wp.best["performance_db"],
            "pump_freq_hz": cfg.metric.pump_freq,
            "signal_band_hz": list(cfg.drive.signal_band),
            "signal_step_hz": cfg.drive.signal_step,
            "gain_profile_file": best_profile_file,
            "n_drive_points": len(wp.rows),
            "n_failed_drive_points": sum(1 for r in wp.rows if r["failed"]),
        }
        write_json(paths.qstar_json, qstar_doc)
    except Exception as exc:
        _stage_fail(paths, manifest, "stage3", exc)
        raise
    _stage_finish(paths, manifest, "stage3", outputs)
    return qstar_doc


def _write_dispersion_csv(path, cfg: RunConfig, pstar_doc: dict):
    device = _device_from_doc(pstar_doc)
    flux = float(pstar_doc["flux_ext_phi0"])
    grid = metric_frequency_grid(cfg.freq_grid, cfg.metric.pump_freq)
    resp = simulate_linear(device, flux, grid, cfg.cell)
    disp = dispersion(resp, device.cell_count)

    f_p = cfg.metric.pump_freq
    freqs = np.unique(np.concatenate((disp.freqs, [f_p, f_p / 2.0])))
    k = disp.sample(freqs)
    k_half_doubled = 2.0 * disp.sample(freqs / 2.0)
    lines = ["f_Hz,k_rad_per_cell,two_k_half_rad_per_cell"]
    for f, k1, k2 in zip(freqs, k, k_half_doubled):
        lines.append(",".join((
            format_float(float(f)), format_float(float(k1)),
            format_float(float(k2)))))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_correlation_csv(path, analysis_doc: dict):
    dims = analysis_doc["dimensions"]
    lines = ["param," + ",".join(dims)]
    for name, row in zip(dims, analysis_doc["correlation"]):
        lines.append(name + "," + ",".join(format_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_histograms_csv(path, analysis_doc: dict):
    lines = ["dimension,value,weight"]
    for hist in analysis_doc["histograms"]:
        for value, weight in zip(hist["values"], hist["weights"]):
            lines.append(",".join((
                hist["name"], format_float(value), format_float(weight))))
    atomic_write_text(path, "\n".join(lines) + "\n")


def run_report(cfg: RunConfig, paths: RunPaths, manifest: dict) -> list:
    """Plot-ready CSV tables derived from completed stage artifacts."""
    for required in (paths.stage1_analysis, paths.pstar_json, paths.qstar_json):
        if not os.path.exists(required):
            raise PipelineError(
                f"report needs {required}; run the earlier stages first")

    _stage_begin(paths, manifest, "report")
    try:
        os.makedirs(paths.report_dir, exist_ok=True)
        pstar_doc = read_json(paths.pstar_json)
        analysis_doc = read_json(paths.stage1_analysis)
        qstar_doc = read_json(paths.qstar_json)

        _write_dispersion_csv(
            paths.report_file("dispersion.csv"), cfg, pstar_doc)
        _write_correlation_csv(
            paths.report_file("correlation.csv"), analysis_doc)
        _write_histograms_csv(
            paths.report_file("histograms.csv"), analysis_doc)

        profile_file = qstar_doc.get("gain_profile_file")
        outputs = ["report/dispersion.csv", "report/correlation.csv",
                   "report/histograms.csv"]
        if profile_file:
            with open(os.path.join(paths.run_dir, profile_file)) as fh:
                atomic_write_text(paths.report_file("gain_qstar.csv"), fh.read())
            outputs.append("report/gain_qstar.csv")
    except Exception as exc:
        _stage_fail(paths, manifest, "report", exc)
        raise
    _stage_finish(paths, manifest, "report", outputs)
    return outputs


def run_pipeline(config_path, cfg: RunConfig, workers: int = 1,
                 force: bool = False, progress=None) -> dict:
    """All stages in order, skipping stages already complete on disk."""
    paths, manifest = prepare_run_dir(config_path, cfg, force=force)
    with RunLock(paths):
        if not stage_is_complete(paths, manifest, "stage1"):
            run_stage1(cfg, paths, manifest, workers=workers,
                       progress=progress)
        if not stage_is_complete(paths, manifest, "optimize"):
            run_optimize(cfg, paths, manifest)
        if not stage_is_complete(paths, manifest, "stage3"):
            run_stage3(cfg, paths, manifest)
        if not stage_is_complete(paths, manifest, "report"):
            run_report(cfg, paths, manifest)
    return read_json(paths.manifest)


def open_run_dir(run_dir: str):
    """Load (cfg, paths, manifest) from an existing run directory."""
    paths = RunPaths(run_dir)
    if not os.path.exists(paths.manifest):
        raise PipelineError(f"{run_dir} has no manifest")
    if not os.path.exists(paths.config_copy):
        raise PipelineError(f"{run_dir} has no config copy")
    cfg = load_config(paths.config_copy)
    manifest = read_json(paths.manifest)
    return cfg, paths, manifest
