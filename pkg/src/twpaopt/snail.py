"""Flux-biased SNAIL loop: potential, Taylor coefficients, effective inductance.

The element is a superconducting loop with one small Josephson junction in
parallel with a series branch of three larger junctions (each with area
``area / alpha``, so the small junction is the weaker one for alpha < 1).
An external DC flux through the loop shapes the potential seen by the
small-junction phase.  Away from zero flux the cubic coefficient turns on
(three-wave mixing), and at one particular bias the quartic coefficient
crosses zero, which is the operating point used for Kerr-free amplification.

Units: junction geometry is carried in fabrication units (area in um^2,
critical current density in uA/um^2, currents in uA); energies, inductances
and capacitances are SI.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .constants import REDUCED_FLUX_QUANTUM

TWO_PI = 2.0 * np.pi

#: Relative tolerance on the stationarity residual |U'(phi_min)| / E_Js.
_MIN_RESIDUAL_TOL = 1e-12


class NoKerrFreePointError(RuntimeError):
    """No quartic-coefficient zero crossing exists in the scanned flux range."""


class MinimumNotFoundError(RuntimeError):
    """The potential minimum search failed to converge."""


@dataclass(frozen=True)
class JunctionSpec:
    """Small-junction geometry.

    area: junction area in um^2.
    current_density: critical current density in uA/um^2.
    self_capacitance: per-junction capacitance in F.  Present for
        completeness; the lumped cell model does not use it.
    """

    area: float
    current_density: float
    self_capacitance: float = 0.0

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError(f"junction area must be positive, got {self.area}")
        if not self.current_density > 0:
            raise ValueError(
                f"current density must be positive, got {self.current_density}"
            )
        if self.self_capacitance < 0:
            raise ValueError("junction capacitance cannot be negative")


@dataclass(frozen=True)
class SnailSpec:
    """One SNAIL loop: small junction, junction-size ratio, applied flux.

    alpha is the ratio of small-junction to large-junction critical current
    (equivalently of areas at fixed current density), strictly inside (0, 1).
    flux_ext is the external flux through the loop in units of Phi0, in
    [0, 1).  n_large is fixed at 3; the potential below hard-codes the
    three-junction branch relation.
    """

    small_junction: JunctionSpec
    alpha: float
    flux_ext: float
    n_large: int = 3

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 <= self.flux_ext < 1.0:
            raise ValueError(f"flux_ext must be in [0, 1) Phi0, got {self.flux_ext}")
        if self.n_large != 3:
            raise ValueError("only the three-large-junction loop is modeled")

    @property
    def small_energy(self) -> float:
        """Josephson energy of the small junction, in J."""
        i_c = critical_current(self.small_junction) * 1e-6  # A
        return REDUCED_FLUX_QUANTUM * i_c

    @property
    def large_energy(self) -> float:
        """Josephson energy of each large junction, in J."""
        return self.small_energy / self.alpha


@dataclass(frozen=True)
class PotentialExpansion:
    """Taylor data of the potential about its minimum.

    Coefficients use the 1/n! convention, U(phi_min + x) = sum_n c_n x^n,
    and carry units of J.  phi_min is in rad.
    """

    phi_min: float
    c2: float
    c3: float
    c4: float


def critical_current(junction: JunctionSpec) -> float:
    """Critical current in uA, area times current density."""
    return junction.area * junction.current_density


def josephson_inductance(i_c_ua: float) -> float:
    """Josephson inductance Phi0 / (2 pi I_c) in H for a critical current in uA."""
    if not i_c_ua > 0:
        raise ValueError(f"critical current must be positive, got {i_c_ua}")
    return REDUCED_FLUX_QUANTUM / (i_c_ua * 1e-6)


def _phase_args(spec: SnailSpec, phi):
    phi_ext = TWO_PI * spec.flux_ext
    return phi, (phi_ext - np.asarray(phi)) / 3.0


def potential(spec: SnailSpec, phi) -> float:
    """Loop potential U(phi) in J at small-junction phase phi (rad).

    U(phi) = -E_Js cos(phi) - 3 E_Jl cos((phi_ext - phi) / 3), with
    phi_ext = 2 pi flux_ext and E_Jl = E_Js / alpha.
    """
    phi, u = _phase_args(spec, phi)
    e_s = spec.small_energy
    return e_s * (-np.cos(phi) - (3.0 / spec.alpha) * np.cos(u))


# Normalized derivative chain, in units of E_Js.  Closed forms follow from
# d/dphi [(phi_ext - phi)/3] = -1/3.


def _u1(alpha: float, phi_ext: float, phi):
    u = (phi_ext - np.asarray(phi)) / 3.0
    return np.sin(phi) - np.sin(u) / alpha


def _u2(alpha: float, phi_ext: float, phi):
    u = (phi_ext - np.asarray(phi)) / 3.0
    return np.cos(phi) + np.cos(u) / (3.0 * alpha)


def _u3(alpha: float, phi_ext: float, phi):
    u = (phi_ext - np.asarray(phi)) / 3.0
    return -np.sin(phi) + np.sin(u) / (9.0 * alpha)


def _u4(alpha: float, phi_ext: float, phi):
    u = (phi_ext - np.asarray(phi)) / 3.0
    return -np.cos(phi) - np.cos(u) / (27.0 * alpha)


def potential_derivative(spec: SnailSpec, phi, order: int = 1):
    """Analytic d^n U / d phi^n in J/rad^n, for order in 1..4."""
    funcs = {1: _u1, 2: _u2, 3: _u3, 4: _u4}
    if order not in funcs:
        raise ValueError(f"derivative order must be 1..4, got {order}")
    phi_ext = TWO_PI * spec.flux_ext
    return spec.small_energy * funcs[order](spec.alpha, phi_ext, phi)


@functools.lru_cache(maxsize=8192)
def _phase_minimum_normalized(alpha: float, flux_ext: float) -> float:
    """Potential minimum phase, independent of junction scale.

    Scans one full 6 pi period of the normalized potential, takes the global
    grid minimum (the branch continuously connected to phi = 0 at zero flux
    for the single-well alpha range used here), then refines by root finding
    on the first derivative plus Newton polish.
    """
    if flux_ext == 0.0:
        return 0.0
    phi_ext = TWO_PI * flux_ext

    grid = np.linspace(phi_ext - 3.0 * np.pi, phi_ext + 3.0 * np.pi, 4097)
    u_vals = -np.cos(grid) - (3.0 / alpha) * np.cos((phi_ext - grid) / 3.0)
    j = int(np.argmin(u_vals))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]

    f = lambda p: _u1(alpha, phi_ext, p)
    if not (f(lo) < 0.0 < f(hi)):
        raise MinimumNotFoundError(
            f"no bracketed minimum near phi={grid[j]:.6f} "
            f"(alpha={alpha}, flux_ext={flux_ext})"
        )
    phi_min = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
    # Two Newton steps push the residual to rounding level.
    for _ in range(2):
        d2 = _u2(alpha, phi_ext, phi_min)
        if d2 <= 0:
            break
        phi_min = phi_min - f(phi_min) / d2

    residual = abs(f(phi_min))
    curvature = _u2(alpha, phi_ext, phi_min)
    if residual >= _MIN_RESIDUAL_TOL or curvature <= 0.0:
        raise MinimumNotFoundError(
            f"minimum search failed: residual={residual:.3e} E_Js/rad, "
            f"curvature={curvature:.3e} E_Js (alpha={alpha}, flux_ext={flux_ext})"
        )
    return float(phi_min)


def find_phase_minimum(spec: SnailSpec) -> float:
    """Phase of the potential minimum, in rad.

    Satisfies |U'(phi_min)| < 1e-12 E_Js/rad and U''(phi_min) > 0.  At zero
    flux the minimum sits exactly at phi = 0.
    """
    return _phase_minimum_normalized(spec.alpha, spec.flux_ext)


@functools.lru_cache(maxsize=8192)
def _expansion_normalized(alpha: float, flux_ext: float):
    """(phi_min, c2, c3, c4) with coefficients in units of E_Js."""
    phi_min = _phase_minimum_normalized(alpha, flux_ext)
    phi_ext = TWO_PI * flux_ext
    c2 = _u2(alpha, phi_ext, phi_min) / 2.0
    c3 = _u3(alpha, phi_ext, phi_min) / 6.0
    c4 = _u4(alpha, phi_ext, phi_min) / 24.0
    return phi_min, float(c2), float(c3), float(c4)


def expand_potential(spec: SnailSpec) -> PotentialExpansion:
    """Analytic Taylor coefficients c2..c4 of U about its minimum, in J."""
    phi_min, c2, c3, c4 = _expansion_normalized(spec.alpha, spec.flux_ext)
    e_s = spec.small_energy
    return PotentialExpansion(phi_min=phi_min, c2=e_s * c2, c3=e_s * c3, c4=e_s * c4)


def effective_inductance(expansion: PotentialExpansion) -> float:
    """Linear inductance (Phi0 / 2 pi)^2 / (2 c2) of the expanded loop, in H."""
    if not expansion.c2 > 0:
        raise ValueError(
            f"no stable minimum: quadratic coefficient c2={expansion.c2:.3e} J"
        )
    return REDUCED_FLUX_QUANTUM**2 / (2.0 * expansion.c2)


@functools.lru_cache(maxsize=1024)
def _kerr_free_flux_normalized(alpha: float, scan_points: int, tol: float) -> float:
    fluxes = np.linspace(0.0, 0.5, scan_points + 1)[1:]
    c4 = np.array([_expansion_normalized(alpha, f)[3] for f in fluxes])

    sign_change = np.nonzero(np.diff(np.sign(c4)) != 0)[0]
    if sign_change.size == 0:
        raise NoKerrFreePointError(
            f"no c4 zero crossing in (0, 0.5) Phi0 for alpha={alpha}"
        )
    i = int(sign_change[0])
    lo, hi = float(fluxes[i]), float(fluxes[i + 1])

    f_lo = c4[i]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = _expansion_normalized(alpha, mid)[3]
        if f_mid == 0.0:
            return mid
        if (f_lo < 0) == (f_mid < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kerr_free_flux(
    alpha: float,
    junction: JunctionSpec,
    scan_points: int = 2000,
    tol: float = 1e-10,
) -> float:
    """Smallest flux in (0, 0.5) Phi0 where the quartic coefficient vanishes.

    Located by a uniform c4 scan followed by bisection down to ``tol`` Phi0.
    The returned bias does not depend on the junction scale (c4 is
    proportional to E_Js), but the junction argument keeps the call site
    explicit about which device is being biased.  Raises
    NoKerrFreePointError when no sign change exists for the given alpha.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    critical_current(junction)  # validates the junction spec
    flux = _kerr_free_flux_normalized(alpha, scan_points, tol)

    # The bias is only useful if three-wave mixing survives there.
    _, c2, c3, _ = _expansion_normalized(alpha, flux)
    if abs(c3) <= 1e-6 * c2:
        raise NoKerrFreePointError(
            f"cubic coefficient vanishes at the Kerr-free bias for alpha={alpha}"
        )
    return flux
