"""Stage 1: exhaustive metric evaluation over the device parameter grid.

The grid spans seven dimensions (junction area, current density, alpha,
dielectric thickness, the two load ratios, pitch) enumerated
lexicographically with the first dimension slowest.  Every point is biased
at its own Kerr-free flux, simulated, scored, and appended to a checkpoint
so an interrupted sweep resumes without recomputation.

Analysis helpers reduce the record table to a Pearson correlation matrix
and per-dimension histograms weighted by inverse metric, both over the
subset that survives a metric cutoff.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import atomic_write_text, format_float
from .metric import MetricBreakdown, MetricConfig, evaluate_metric
from .network import (
    CellConfig,
    DeviceParams,
    FrequencyGrid,
    dispersion,
    simulate_linear,
)
from .snail import JunctionSpec, kerr_free_flux

#: Grid dimensions in canonical order; also the parameter column order of
#: every artifact that carries device parameters.
DIMENSION_NAMES = ("A_J", "rho_Ic", "alpha", "t", "L_load", "C_load", "pitch")

#: Stage-1 CSV header.
CSV_COLUMNS = (
    "index",
    "A_J_um2",
    "rho_Ic_uA_um2",
    "alpha",
    "t_nm",
    "L_load",
    "C_load",
    "pitch",
    "flux_ext_phi0",
    "matching_term",
    "phase_term",
    "harmonic_term",
    "metric_total",
    "failed",
    "wall_time_s",
)


@dataclass(frozen=True)
class GridDimension:
    """One swept dimension: uniform values min + step * i up to max."""

    name: str
    minimum: float
    maximum: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"{self.name}: step must be positive")
        if self.maximum < self.minimum:
            raise ValueError(f"{self.name}: max below min")

    @property
    def count(self) -> int:
        return int(round((self.maximum - self.minimum) / self.step)) + 1

    def values(self) -> np.ndarray:
        return self.minimum + self.step * np.arange(self.count)


@dataclass(frozen=True)
class ParameterGrid:
    """The full seven-dimensional design grid."""

    a_j: GridDimension
    rho_ic: GridDimension
    alpha: GridDimension
    t: GridDimension
    l_load: GridDimension
    c_load: GridDimension
    pitch: GridDimension

    def dims(self) -> tuple[GridDimension, ...]:
        return (self.a_j, self.rho_ic, self.alpha, self.t, self.l_load,
                self.c_load, self.pitch)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.count for d in self.dims())

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def point_values(self, index: int) -> tuple[float, ...]:
        """Parameter values at a flat lexicographic index."""
        return tuple(
            float(d.values()[i]) for d, i in zip(self.dims(), self.multi_index(index))
        )

    def multi_index(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise IndexError(f"grid index {index} out of range")
        out = []
        for n in reversed(self.shape):
            out.append(index % n)
            index //= n
        return tuple(reversed(out))


def table_grid() -> ParameterGrid:
    """The production design grid (38 720 points)."""
    return ParameterGrid(
        a_j=GridDimension("A_J", 0.1, 0.6, 0.05),
        rho_ic=GridDimension("rho_Ic", 0.5, 1.5, 0.1),
        alpha=GridDimension("alpha", 0.23, 0.25, 0.02),
        t=GridDimension("t", 1.0, 20.0, 1.0),
        l_load=GridDimension("L_load", 1.5, 2.0, 0.5),
        c_load=GridDimension("C_load", 1.0, 1.5, 0.5),
        pitch=GridDimension("pitch", 2.0, 3.0, 1.0),
    )


def device_from_values(values, cell_count: int) -> DeviceParams:
    a_j, rho, alpha, t, l_load, c_load, pitch = values
    return DeviceParams(
        junction_area=float(a_j),
        current_density=float(rho),
        alpha=float(alpha),
        dielectric_thickness=float(t),
        inductance_load_ratio=float(l_load),
        capacitance_load_ratio=float(c_load),
        pitch=int(round(pitch)),
        cell_count=int(cell_count),
    )


def enumerate_grid(grid: ParameterGrid, cell_count: int) -> list[DeviceParams]:
    """All grid points in lexicographic order (first dimension slowest)."""
    return [
        device_from_values(grid.point_values(i), cell_count)
        for i in range(grid.size)
    ]


@dataclass(frozen=True)
class SweepConfig:
    """Simulation settings shared by every sweep point."""

    cell_count: int
    freq_grid: FrequencyGrid
    cell: CellConfig = field(default_factory=CellConfig)


@dataclass
class SweepRecord:
    """Outcome of one grid point."""

    index: int
    params: DeviceParams
    flux_ext: float
    breakdown: MetricBreakdown | None
    failed: bool
    error: str = ""
    wall_time: float = 0.0

    @property
    def metric_total(self) -> float:
        return self.breakdown.total if self.breakdown is not None else math.inf


def metric_frequency_grid(grid: FrequencyGrid, pump_freq: float) -> FrequencyGrid:
    """Extend the configured grid so the metric's 2 f_p sample is covered."""
    stop = max(grid.stop, 2.0 * pump_freq + 1e9)
    return FrequencyGrid(start=grid.start, stop=stop, step=grid.step)


def evaluate_point(
    params: DeviceParams,
    flux_ext: float,
    sweep_cfg: SweepConfig,
    metric_cfg: MetricConfig,
) -> MetricBreakdown:
    """Simulate one device at its flux bias and score it."""
    grid = metric_frequency_grid(sweep_cfg.freq_grid, metric_cfg.pump_freq)
    resp = simulate_linear(params, flux_ext, grid, sweep_cfg.cell)
    disp = dispersion(resp, params.cell_count)
    return evaluate_metric(resp, disp, metric_cfg)


def bias_flux_for_alpha(alpha: float, junction: JunctionSpec) -> float:
    """Kerr-free flux bias for the given junction ratio."""
    return kerr_free_flux(alpha, junction)


def _run_point(args):
    index, params, flux, sweep_cfg, metric_cfg = args
    t0 = time.perf_counter()
    try:
        breakdown = evaluate_point(params, flux, sweep_cfg, metric_cfg)
        return index, breakdown, "", time.perf_counter() - t0
    except Exception as exc:  # individual failures must not abort the sweep
        return index, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def _checkpoint_line(rec: SweepRecord) -> str:
    doc = {
        "index": rec.index,
        "flux_ext": rec.flux_ext,
        "failed": rec.failed,
        "error": rec.error,
        "wall_time": rec.wall_time,
    }
    if rec.breakdown is not None:
        b = rec.breakdown
        doc["breakdown"] = {
            "matching_term": b.matching_term,
            "phase_term": b.phase_term,
            "harmonic_term": b.harmonic_term,
            "total": b.total,
            "band_mean_re": b.band_mean_s11.real,
            "band_mean_im": b.band_mean_s11.imag,
            "delta_k": b.delta_k,
            "matching_capped": b.matching_capped,
        }
    return json.dumps(doc)


def _record_from_checkpoint(doc, params: DeviceParams) -> SweepRecord:
    breakdown = None
    if "breakdown" in doc:
        b = doc["breakdown"]
        breakdown = MetricBreakdown(
            matching_term=b["matching_term"],
            phase_term=b["phase_term"],
            harmonic_term=b["harmonic_term"],
            total=b["total"],
            band_mean_s11=complex(b["band_mean_re"], b["band_mean_im"]),
            delta_k=b["delta_k"],
            matching_capped=b["matching_capped"],
        )
    return SweepRecord(
        index=doc["index"],
        params=params,
        flux_ext=doc["flux_ext"],
        breakdown=breakdown,
        failed=doc["failed"],
        error=doc.get("error", ""),
        wall_time=doc.get("wall_time", 0.0),
    )


def _ends_with_newline(path) -> bool:
    with open(path, "rb") as fh:
        fh.seek(-1, 2)
        return fh.read(1) == b"\n"


def load_checkpoint(path, points: list[DeviceParams]) -> dict[int, SweepRecord]:
    """Completed records keyed by grid index; ignores a trailing torn line."""
    done: dict[int, SweepRecord] = {}
    path = Path(path)
    if not path.exists():
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                continue
            idx = doc["index"]
            if 0 <= idx < len(points):
                done[idx] = _record_from_checkpoint(doc, points[idx])
    return done


def run_sweep(
    grid: ParameterGrid,
    sweep_cfg: SweepConfig,
    metric_cfg: MetricConfig,
    workers: int = 1,
    checkpoint_path=None,
    progress=None,
) -> list[SweepRecord]:
    """Evaluate every grid point; returns records in grid order.

    The metric values are a pure function of (grid, configs); the only
    non-deterministic field is the measured wall time per point.  With a
    checkpoint path, completed points are appended as JSON lines and an
    interrupted sweep resumes exactly where it stopped.
    """
    points = enumerate_grid(grid, sweep_cfg.cell_count)

    flux_by_alpha: dict[float, float] = {}
    for p in points:
        if p.alpha not in flux_by_alpha:
            flux_by_alpha[p.alpha] = bias_flux_for_alpha(
                p.alpha, JunctionSpec(p.junction_area, p.current_density)
            )

    done = load_checkpoint(checkpoint_path, points) if checkpoint_path else {}
    pending = [i for i in range(len(points)) if i not in done]

    ckpt_fh = None
    if checkpoint_path:
        ckpt_fh = open(checkpoint_path, "a")
        # An interrupted run can leave a torn final line; start the next
        # record on a fresh line so it stays parseable.
        if ckpt_fh.tell() > 0 and not _ends_with_newline(checkpoint_path):
            ckpt_fh.write("\n")
    records: dict[int, SweepRecord] = dict(done)
    try:
        tasks = (
            (i, points[i], flux_by_alpha[points[i].alpha], sweep_cfg, metric_cfg)
            for i in pending
        )
        if workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                for index, breakdown, err, wall in pool.map(
                    _run_point, tasks, chunksize=8
                ):
                    rec = SweepRecord(
                        index=index,
                        params=points[index],
                        flux_ext=flux_by_alpha[points[index].alpha],
                        breakdown=breakdown,
                        failed=breakdown is None,
                        error=err,
                        wall_time=wall,
                    )
                    records[index] = rec
                    if ckpt_fh:
                        ckpt_fh.write(_checkpoint_line(rec) + "\n")
                        ckpt_fh.flush()
                    if progress:
                        progress(rec)
        else:
            for task in tasks:
                index, breakdown, err, wall = _run_point(task)
                rec = SweepRecord(
                    index=index,
                    params=points[index],
                    flux_ext=flux_by_alpha[points[index].alpha],
                    breakdown=breakdown,
                    failed=breakdown is None,
                    error=err,
                    wall_time=wall,
                )
                records[index] = rec
                if ckpt_fh:
                    ckpt_fh.write(_checkpoint_line(rec) + "\n")
                    ckpt_fh.flush()
                if progress:
                    progress(rec)
    finally:
        if ckpt_fh:
            ckpt_fh.close()

    return [records[i] for i in range(len(points))]


def params_as_row(p: DeviceParams) -> tuple[float, ...]:
    """Parameter values in DIMENSION_NAMES order."""
    return (
        p.junction_area,
        p.current_density,
        p.alpha,
        p.dielectric_thickness,
        p.inductance_load_ratio,
        p.capacitance_load_ratio,
        float(p.pitch),
    )


def write_records_csv(path, records: list[SweepRecord]):
    """Stage-1 record table with the canonical column set."""
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        row = params_as_row(r.params)
        b = r.breakdown
        fields = [
            str(r.index),
            format_float(row[0]),
            format_float(row[1]),
            format_float(row[2]),
            format_float(row[3]),
            format_float(row[4]),
            format_float(row[5]),
            str(int(row[6])),
            format_float(r.flux_ext),
            format_float(b.matching_term) if b else "inf",
            format_float(b.phase_term) if b else "inf",
            format_float(b.harmonic_term) if b else "inf",
            format_float(b.total) if b else "inf",
            "true" if r.failed else "false",
            format_float(r.wall_time),
        ]
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_records_csv(path):
    """Parse a stage-1 CSV into (params dict, metric_total, failed) tuples."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected sweep CSV header in {path}")
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(CSV_COLUMNS):
                continue
            params = {
                "A_J": float(parts[1]),
                "rho_Ic": float(parts[2]),
                "alpha": float(parts[3]),
                "t": float(parts[4]),
                "L_load": float(parts[5]),
                "C_load": float(parts[6]),
                "pitch": float(parts[7]),
            }
            rows.append((params, float(parts[12]), parts[13] == "true"))
    return rows


def filter_by_cutoff(records: list[SweepRecord], cutoff: float) -> list[SweepRecord]:
    """Records with metric strictly below the cutoff; failures never pass."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    return [r for r in records if r.metric_total < cutoff]


def correlation_matrix(records: list[SweepRecord]):
    """Pearson correlation of the seven parameter columns.

    Constant columns get zero off-diagonal correlation by convention and are
    reported in the flag list; the diagonal stays 1.  Returns
    (matrix, flagged dimension names).
    """
    if not records:
        raise ValueError("correlation requires a non-empty record subset")
    data = np.array([params_as_row(r.params) for r in records], dtype=float)
    std = data.std(axis=0)
    constant = std == 0.0
    centered = data - data.mean(axis=0)
    n = len(DIMENSION_NAMES)
    corr = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            if constant[i] or constant[j]:
                corr[i, j] = corr[j, i] = 0.0
            else:
                cov = float(np.mean(centered[:, i] * centered[:, j]))
                corr[i, j] = corr[j, i] = cov / (std[i] * std[j])
    flags = [DIMENSION_NAMES[i] for i in range(n) if constant[i]]
    return corr, flags


def weighted_histograms(grid: ParameterGrid, records: list[SweepRecord]):
    """Inverse-metric-weighted histograms over the grid values per dimension.

    Each record contributes weight 1 / metric_total to the bin of its value
    in every dimension.  Records with non-positive metric are excluded and
    counted; failed records carry infinite metric and contribute nothing.
    """
    dims = grid.dims()
    weights = [np.zeros(d.count) for d in dims]
    excluded = 0
    for r in records:
        total = r.metric_total
        if total <= 0:
            excluded += 1
            continue
        w = 1.0 / total
        for axis, i in enumerate(grid.multi_index(r.index)):
            weights[axis][i] += w
    histograms = [
        {
            "name": DIMENSION_NAMES[axis],
            "values": [float(v) for v in dims[axis].values()],
            "weights": [float(w) for w in weights[axis]],
        }
        for axis in range(len(dims))
    ]
    return histograms, excluded


@dataclass
class AnalysisReport:
    """Correlation + histogram summary of the surviving subset."""

    correlation: np.ndarray
    constant_dims: list[str]
    histograms: list[dict]
    filtered_count: int
    cutoff: float | None
    excluded_nonpositive: int

    def to_document(self) -> dict:
        return {
            "dimensions": list(DIMENSION_NAMES),
            "cutoff": self.cutoff,
            "filtered_count": self.filtered_count,
            "excluded_nonpositive": self.excluded_nonpositive,
            "correlation": [[float(x) for x in row] for row in self.correlation],
            "constant_dims": list(self.constant_dims),
            "histograms": self.histograms,
        }


def build_analysis(
    grid: ParameterGrid, records: list[SweepRecord], cutoff: float | None
) -> AnalysisReport:
    """Reduce sweep records to an analysis report.

    With a cutoff, statistics cover the surviving subset; an empty subset
    falls back to all non-failed records so the report stays well formed.
    """
    if cutoff is not None:
        subset = filter_by_cutoff(records, cutoff)
    else:
        subset = [r for r in records if not r.failed]
    if not subset:
        subset = [r for r in records if not r.failed]
    if not subset:
        raise ValueError("analysis requires at least one successful record")
    corr, flags = correlation_matrix(subset)
    histograms, excluded = weighted_histograms(grid, subset)
    return AnalysisReport(
        correlation=corr,
        constant_dims=flags,
        histograms=histograms,
        filtered_count=len(subset),
        cutoff=cutoff,
        excluded_nonpositive=excluded,
    )
