"""Stage 3: three-wave-mixing gain from coupled mode equations.

Signal, idler and pump amplitudes evolve along the cell index x as

    dA_s/dx = i kappa A_p conj(A_i) exp(-i dk x)
    dA_i/dx = i kappa A_p conj(A_s) exp(-i dk x)
    dA_p/dx = i kappa A_s A_i exp(+i dk x)

with dk = k_p - k_s - k_i the per-cell phase mismatch, kappa = g0 / xi and
pump input A_p(0) = xi, the pump current in units of twice the small
junction critical current.  The coupling g0 comes from the cubic/quadratic
coefficient ratio of the biased loop potential.

Integration is fixed-step RK4.  The conserved Manley-Rowe combinations
|A_s|^2 - |A_i|^2 and |A_s|^2 + |A_p|^2 and a step-halving comparison guard
accuracy.  In the undepleted-pump limit the signal power gain has the
closed form |cosh(g x) + (i dk / 2 g) sinh(g x)|^2 with
g = sqrt(g0^2 - (dk/2)^2), continued to oscillatory behavior when the
mismatch dominates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import band_average
from .network import DispersionCurve
from .snail import PotentialExpansion

RK4_STEP = 0.05
SEED_RATIO = 1e-6
HALVING_TOL = 1e-6


class AccuracyError(RuntimeError):
    """Step-halving disagreement above tolerance."""


@dataclass(frozen=True)
class DriveSpec:
    """Pump and signal drive settings.

    pump_freq in Hz; signal_band (lo, hi) in Hz with signal_step the gain
    grid spacing.  The pump strength is either ``xi`` directly (pump current
    over twice the small-junction critical current) or ``pump_amplitude_ua``
    in uA, resolved against the device.  The flux bias is either
    ``flux_phi0`` in Phi0 or ``flux_current_ua`` through a configured
    mutual.
    """

    pump_freq: float
    signal_band: tuple[float, float]
    signal_step: float
    pump_amplitude_ua: float | None = None
    xi: float | None = None
    flux_phi0: float | None = None
    flux_current_ua: float | None = None

    def __post_init__(self):
        if not self.pump_freq > 0:
            raise ValueError("pump frequency must be positive")
        lo, hi = self.signal_band
        if not 0 < lo < hi < self.pump_freq:
            raise ValueError(
                "signal band must satisfy 0 < f_lo < f_hi < f_pump"
            )
        if not self.signal_step > 0:
            raise ValueError("signal grid step must be positive")
        if self.xi is None and self.pump_amplitude_ua is None:
            raise ValueError("either xi or pump_amplitude_ua must be given")

    def resolve_xi(self, i_c_small_ua: float) -> float:
        """Normalized pump amplitude; xi = I_p / (2 I_c,small) when in uA."""
        if self.xi is not None:
            xi = float(self.xi)
        else:
            if not i_c_small_ua > 0:
                raise ValueError("critical current must be positive")
            xi = self.pump_amplitude_ua / (2.0 * i_c_small_ua)
        if not 0.0 <= xi < 1.0:
            raise ValueError(f"normalized pump amplitude {xi} outside [0, 1)")
        return xi

    def resolve_flux(self, mutual_phi0_per_ua: float | None) -> float | None:
        """Flux bias in Phi0, or None when unspecified."""
        if self.flux_phi0 is not None:
            return float(self.flux_phi0)
        if self.flux_current_ua is not None:
            if mutual_phi0_per_ua is None:
                raise ValueError(
                    "flux given as a line current but no mutual is configured"
                )
            return self.flux_current_ua * mutual_phi0_per_ua
        return None


@dataclass(frozen=True)
class CmeInputs:
    """Per-tone wavenumbers (rad/cell), coupling, and device length."""

    k_s: float
    k_i: float
    k_p: float
    g0: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells <= 0:
            raise ValueError("cell count must be positive")
        if self.g0 < 0:
            raise ValueError("coupling g0 cannot be negative")

    @property
    def delta_k(self) -> float:
        return self.k_p - self.k_s - self.k_i


@dataclass
class CmeTrajectory:
    """Amplitudes along the line, one sample per RK4 step."""

    x: np.ndarray = field(repr=False)
    a_s: np.ndarray = field(repr=False)
    a_i: np.ndarray = field(repr=False)
    a_p: np.ndarray = field(repr=False)

    def manley_rowe_drift(self) -> tuple[float, float]:
        """Max drift of the two conserved combinations along the line."""
        d1 = np.abs(self.a_s) ** 2 - np.abs(self.a_i) ** 2
        d2 = np.abs(self.a_s) ** 2 + np.abs(self.a_p) ** 2
        return (
            float(np.max(np.abs(d1 - d1[0]))),
            float(np.max(np.abs(d2 - d2[0]))),
        )


@dataclass
class GainProfile:
    """Signal power gain across the band for one drive point."""

    freqs: np.ndarray = field(repr=False)
    gain_db: np.ndarray = field(repr=False)
    pump_depletion: np.ndarray = field(repr=False)


@dataclass
class WorkingPointResult:
    """Drive-grid sweep outcome: per-amplitude performance and the best."""

    rows: list
    best: dict
    profiles: list


def coupling_constant(
    expansion: PotentialExpansion, xi: float, k_s: float, k_i: float
) -> float:
    """Three-wave coupling g0 = |c3| / (2 c2) * xi * sqrt(k_s k_i), rad/cell."""
    if not expansion.c2 > 0:
        raise ValueError("expansion must come from a stable minimum (c2 > 0)")
    if k_s < 0 or k_i < 0:
        raise ValueError("signal and idler wavenumbers must be non-negative")
    if not 0.0 <= xi < 1.0:
        raise ValueError(f"normalized pump amplitude {xi} outside [0, 1)")
    return abs(expansion.c3) / (2.0 * expansion.c2) * xi * np.sqrt(k_s * k_i)


def undepleted_gain(g0: float, delta_k: float, n_cells: int) -> float:
    """Closed-form undepleted-pump signal power gain over n_cells.

    Uses the complex square root, so the exponential branch
    (g0 > |dk|/2) and the oscillatory branch continue into each other.
    """
    if n_cells <= 0:
        raise ValueError("cell count must be positive")
    g = np.sqrt(complex(g0 * g0 - 0.25 * delta_k * delta_k))
    x = float(n_cells)
    gx = g * x
    if abs(gx) < 1e-8:
        sinhc = x * (1.0 + gx * gx / 6.0)  # sinh(g x)/g as g -> 0
    else:
        sinhc = np.sinh(gx) / g
    value = np.cosh(gx) + 0.5j * delta_k * sinhc
    return float(np.abs(value) ** 2)


def _cme_rhs(x, amps, kappa, delta_k):
    a_s, a_i, a_p = amps
    phase = np.exp(-1j * delta_k * x)
    return np.stack((
        1j * kappa * a_p * np.conj(a_i) * phase,
        1j * kappa * a_p * np.conj(a_s) * phase,
        1j * kappa * a_s * a_i * np.conj(phase),
    ))


def _rk4(amps0, kappa, delta_k, n_cells, step, keep_path=False):
    """Fixed-step RK4 over x in [0, n_cells]; state shape (3, F)."""
    n_steps = int(round(n_cells / step))
    h = n_cells / n_steps
    amps = np.array(amps0, dtype=complex)
    path = [amps.copy()] if keep_path else None
    x = 0.0
    for i in range(n_steps):
        x = i * h
        k1 = _cme_rhs(x, amps, kappa, delta_k)
        k2 = _cme_rhs(x + 0.5 * h, amps + 0.5 * h * k1, kappa, delta_k)
        k3 = _cme_rhs(x + 0.5 * h, amps + 0.5 * h * k2, kappa, delta_k)
        k4 = _cme_rhs(x + h, amps + h * k3, kappa, delta_k)
        amps = amps + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if keep_path:
            path.append(amps.copy())
    if keep_path:
        xs = np.linspace(0.0, float(n_cells), n_steps + 1)
        return amps, xs, np.array(path)
    return amps


def integrate_cme(
    inputs: CmeInputs,
    initial,
    step: float = RK4_STEP,
    accuracy_check: bool = True,
) -> CmeTrajectory:
    """Integrate the coupled mode equations from given initial amplitudes.

    ``initial`` is (A_s(0), A_i(0), A_p(0)); kappa is g0 / |A_p(0)| (zero
    pump input propagates unchanged).  With ``accuracy_check`` the run is
    repeated at half the step and must agree to HALVING_TOL in relative
    terms, otherwise AccuracyError suggests a smaller step.
    """
    a0 = np.asarray(initial, dtype=complex).reshape(3, 1)
    xi = float(np.abs(a0[2, 0]))
    kappa = inputs.g0 / xi if xi > 0 else 0.0
    final, xs, path = _rk4(
        a0, kappa, inputs.delta_k, inputs.n_cells, step, keep_path=True
    )
    if accuracy_check:
        final_half = _rk4(a0, kappa, inputs.delta_k, inputs.n_cells, step / 2.0)
        # Per-component comparison: the signal seed is orders of magnitude
        # below the pump, so normalizing by the overall scale would hide
        # integration error in exactly the mode whose gain is being measured.
        scale = max(float(np.max(np.abs(final_half))), 1e-300)
        denom = np.maximum(np.abs(final_half), 1e-9 * scale)
        err = float(np.max(np.abs(final - final_half) / denom))
        if err > HALVING_TOL:
            raise AccuracyError(
                f"step-halving disagreement {err:.3e} exceeds {HALVING_TOL}; "
                f"reduce the integration step"
            )
    return CmeTrajectory(
        x=xs,
        a_s=path[:, 0, 0],
        a_i=path[:, 1, 0],
        a_p=path[:, 2, 0],
    )


def signal_idler_grid(drive: DriveSpec) -> np.ndarray:
    lo, hi = drive.signal_band
    n = int(np.floor((hi - lo) / drive.signal_step + 1e-9)) + 1
    return lo + drive.signal_step * np.arange(n)


def gain_profile(
    disp: DispersionCurve,
    expansion: PotentialExpansion,
    drive: DriveSpec,
    n_cells: int,
    i_c_small_ua: float,
) -> GainProfile:
    """Signal gain across the band, idler at f_p - f_s, seeded from vacuum scale.

    All signal frequencies integrate in one vectorized RK4 pass (per-column
    phase mismatch), with a half-step verification pass.
    """
    xi = drive.resolve_xi(i_c_small_ua)
    f_s = signal_idler_grid(drive)
    f_i = drive.pump_freq - f_s
    k_s = disp.sample(f_s)
    k_i = disp.sample(f_i)
    k_p = float(disp.sample(drive.pump_freq))
    if np.any(k_s < 0) or np.any(k_i < 0):
        raise ValueError("negative wavenumber in the signal band")

    if xi == 0.0:
        zeros = np.zeros_like(f_s)
        return GainProfile(freqs=f_s, gain_db=zeros, pump_depletion=zeros)

    g0 = abs(expansion.c3) / (2.0 * expansion.c2) * xi * np.sqrt(k_s * k_i)
    delta_k = k_p - k_s - k_i
    kappa = g0 / xi

    seed = SEED_RATIO * xi
    a0 = np.zeros((3, f_s.size), dtype=complex)
    a0[0] = seed
    a0[2] = xi

    final = _rk4(a0, kappa, delta_k, n_cells, RK4_STEP)
    final_half = _rk4(a0, kappa, delta_k, n_cells, RK4_STEP / 2.0)
    scale = np.maximum(np.max(np.abs(final_half), axis=0), 1e-300)
    err = float(np.max(np.max(np.abs(final - final_half), axis=0) / scale))
    if err > HALVING_TOL:
        raise AccuracyError(
            f"step-halving disagreement {err:.3e} exceeds {HALVING_TOL}"
        )

    gain_db = 10.0 * np.log10(np.abs(final[0] / seed) ** 2)
    depletion = 1.0 - np.abs(final[2] / xi) ** 2
    return GainProfile(
        freqs=f_s,
        gain_db=gain_db,
        pump_depletion=np.maximum(depletion, 0.0),
    )


def performance(profile: GainProfile, band: tuple[float, float] | None = None) -> float:
    """Width-normalized trapezoidal mean of the gain (dB) over the band."""
    if band is None:
        band = (float(profile.freqs[0]), float(profile.freqs[-1]))
    return float(band_average(profile.freqs, profile.gain_db, band))


def optimize_working_point(
    disp: DispersionCurve,
    expansion: PotentialExpansion,
    n_cells: int,
    i_c_small_ua: float,
    drive_template: DriveSpec,
    pump_amplitudes_ua,
    flux_phi0: float,
) -> WorkingPointResult:
    """Exhaustive pump-amplitude sweep at fixed flux bias.

    Scores each amplitude by band-mean gain; ties resolve to the lower
    amplitude.  Per-point failures are recorded with -inf performance and
    skipped; if every point fails the sweep itself raises.
    """
    amplitudes = [float(a) for a in pump_amplitudes_ua]
    if not amplitudes:
        raise ValueError("pump amplitude grid is empty")
    rows, profiles = [], []
    best = None
    last_error = None
    for amp in amplitudes:
        drive = DriveSpec(
            pump_freq=drive_template.pump_freq,
            signal_band=drive_template.signal_band,
            signal_step=drive_template.signal_step,
            pump_amplitude_ua=amp,
            flux_phi0=flux_phi0,
        )
        try:
            profile = gain_profile(disp, expansion, drive, n_cells, i_c_small_ua)
            perf = performance(profile)
        except Exception as exc:
            last_error = exc
            rows.append({
                "pump_amplitude_ua": amp,
                "flux_phi0": flux_phi0,
                "performance_db": float("-inf"),
                "failed": True,
            })
            profiles.append(None)
            continue
        rows.append({
            "pump_amplitude_ua": amp,
            "flux_phi0": flux_phi0,
            "performance_db": perf,
            "failed": False,
        })
        profiles.append(profile)
        if best is None or perf > best["performance_db"]:
            best = rows[-1]
    if best is None:
        raise RuntimeError(
            f"every drive point failed; last error: {last_error}"
        )
    return WorkingPointResult(rows=rows, best=dict(best), profiles=profiles)
