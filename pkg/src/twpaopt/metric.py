"""Scalar figure of demerit for the linear stage.

Three additive terms, all to be minimized: an in-band impedance matching
term built from the band-averaged complex S11, a phase-matching term
b * |k(f_p) - 2 k(f_p/2)|, and a second-harmonic term c * |S11(2 f_p)|.

The matching term supports two modes.  "verbatim" scores a / |mean S11|,
which rewards strong in-band reflection; "direct" scores a * |mean S11|,
which rewards good matching.  Both are kept because they rank devices very
differently and the choice materially changes what the optimizer returns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import DispersionCurve, TwoPortResponse

#: Band-mean magnitude below which the verbatim matching term is capped.
VERBATIM_CAP = 1e-15

MATCHING_MODES = ("verbatim", "direct")


class BandCoverageError(ValueError):
    """A frequency the metric needs lies outside the simulated grid."""


@dataclass(frozen=True)
class MetricConfig:
    """Weights, band and pump frequency for the metric.

    matching_mode is mandatory and must be "verbatim" or "direct".
    band is (f_lo, f_hi) in Hz; pump_freq in Hz.  cutoff, when set, is the
    analysis threshold applied after the sweep.  harmonic_use_s21 switches
    the second-harmonic term to |S21(2 f_p)|; default keeps |S11(2 f_p)|.
    """

    matching_mode: str
    band: tuple[float, float]
    pump_freq: float
    weight_a: float = 10.0
    weight_b: float = 1.0
    weight_c: float = 10.0
    cutoff: float | None = None
    harmonic_use_s21: bool = False

    def __post_init__(self):
        if self.matching_mode not in MATCHING_MODES:
            raise ValueError(
                f"matching_mode must be one of {MATCHING_MODES}, "
                f"got {self.matching_mode!r}"
            )
        lo, hi = self.band
        if not 0 <= lo < hi:
            raise ValueError(f"band must satisfy 0 <= f_lo < f_hi, got {self.band}")
        if not self.pump_freq > 0:
            raise ValueError("pump frequency must be positive")
        for w in (self.weight_a, self.weight_b, self.weight_c):
            if not w > 0:
                raise ValueError("metric weights must be positive")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ValueError("cutoff must be positive when given")


@dataclass(frozen=True)
class MetricBreakdown:
    """Per-term metric values; total is their sum."""

    matching_term: float
    phase_term: float
    harmonic_term: float
    total: float
    band_mean_s11: complex
    delta_k: float
    matching_capped: bool = False


def band_average(freqs: np.ndarray, values: np.ndarray, band: tuple[float, float]):
    """Trapezoidal mean of sampled values over [f_lo, f_hi], width-normalized.

    Band edges off the grid are handled by linear interpolation; edges must
    lie inside the sampled range.
    """
    lo, hi = band
    if not lo < hi:
        raise ValueError(f"band must be ordered, got {band}")
    if lo < freqs[0]:
        raise BandCoverageError(
            f"band edge {lo} Hz below grid start {freqs[0]} Hz"
        )
    if hi > freqs[-1]:
        raise BandCoverageError(
            f"band edge {hi} Hz above grid stop {freqs[-1]} Hz"
        )
    interior = (freqs > lo) & (freqs < hi)
    xs = np.concatenate(([lo], freqs[interior], [hi]))
    ys = np.concatenate((
        [_interp_complex(lo, freqs, values)],
        values[interior],
        [_interp_complex(hi, freqs, values)],
    ))
    return np.trapezoid(ys, xs) / (hi - lo)


def _interp_complex(f, freqs, values):
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return np.interp(f, freqs, values.real) + 1j * np.interp(
            f, freqs, values.imag
        )
    return np.interp(f, freqs, values)


def band_mean_s11(resp: TwoPortResponse, band: tuple[float, float]) -> complex:
    """Width-normalized trapezoidal mean of complex S11 over the band."""
    return complex(band_average(resp.freqs, resp.s11, band))


def delta_k(disp: DispersionCurve, pump_freq: float) -> float:
    """Phase mismatch |k(f_p) - 2 k(f_p/2)|, both linearly interpolated."""
    if pump_freq > disp.freqs[-1] or pump_freq / 2.0 < disp.freqs[0]:
        raise BandCoverageError(
            f"pump frequency {pump_freq} Hz not covered by the dispersion grid"
        )
    k_p = np.interp(pump_freq, disp.freqs, disp.k)
    k_half = np.interp(pump_freq / 2.0, disp.freqs, disp.k)
    return float(abs(k_p - 2.0 * k_half))


def evaluate_metric(
    resp: TwoPortResponse, disp: DispersionCurve, cfg: MetricConfig
) -> MetricBreakdown:
    """Evaluate all three terms; total = matching + phase + harmonic."""
    mean = band_mean_s11(resp, cfg.band)
    dk = delta_k(disp, cfg.pump_freq)

    f2 = 2.0 * cfg.pump_freq
    if f2 > resp.freqs[-1]:
        raise BandCoverageError(
            f"second harmonic {f2} Hz above grid stop {resp.freqs[-1]} Hz"
        )
    harmonic_source = resp.s21 if cfg.harmonic_use_s21 else resp.s11
    mag_2fp = abs(_interp_complex(f2, resp.freqs, harmonic_source))

    mean_mag = abs(mean)
    capped = False
    if cfg.matching_mode == "verbatim":
        if mean_mag < VERBATIM_CAP:
            matching = cfg.weight_a / VERBATIM_CAP
            capped = True
        else:
            matching = cfg.weight_a / mean_mag
    else:
        matching = cfg.weight_a * mean_mag

    phase = cfg.weight_b * dk
    harmonic = cfg.weight_c * mag_2fp
    total = matching + phase + harmonic
    return MetricBreakdown(
        matching_term=float(matching),
        phase_term=float(phase),
        harmonic_term=float(harmonic),
        total=float(total),
        band_mean_s11=mean,
        delta_k=dk,
        matching_capped=capped,
    )
