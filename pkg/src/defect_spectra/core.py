"""Shared constants, unit conversions, and RNG plumbing.

Internal unit conventions used across the package:

* energy shifts      meV   (positive = blueshift)
* wavelengths        nm
* times              ns  (irradiation schedules use seconds and say so)
* densities          cm^-3 for volume, cm^-2 for areal quantities
* strain             dimensionless
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ---------------------------------------------------------------------------
# physical constants
# ---------------------------------------------------------------------------

HC_EV_NM = 1239.842            # h*c in eV nm
SI_LATTICE_CONSTANT_NM = 0.5431  # conventional cubic cell edge of silicon
SI_ATOMIC_VOLUME_NM3 = 0.0200    # volume per Si atom (Omega_0)
KB_EV_K = 8.617333e-5          # Boltzmann constant in eV/K

# default emitter values for the 1278 nm carbon-pair center
ZPL_WAVELENGTH_NM = 1278.3
HOMOGENEOUS_FWHM_NM = 0.073
RADIATIVE_LIFETIME_NS = 45.0

STRAIN_COMPONENTS = ("e_xx", "e_yy", "e_zz", "e_xy", "e_xz", "e_yz")
STRAIN_CAP = 0.05  # hard physical cap on any single strain component


# ---------------------------------------------------------------------------
# error taxonomy
# ---------------------------------------------------------------------------

class DefectSpectraError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DefectSpectraError, ValueError):
    """An argument is structurally invalid (wrong sign, wrong shape, ...)."""


class ValidationError(DefectSpectraError, ValueError):
    """Input data violates a documented contract (bad table, bad config key)."""


class RangeError(DefectSpectraError, ValueError):
    """A value falls outside the supported range and no extrapolation is done."""


class ResolutionError(DefectSpectraError, ValueError):
    """A grid is too coarse for the structure it must resolve."""


class CoreRegionError(DefectSpectraError, ValueError):
    """A field was evaluated inside the excluded defect core region."""

    def __init__(self, message: str, defect_index: int | None = None):
        super().__init__(message)
        self.defect_index = defect_index


class EmptyEnsembleError(DefectSpectraError, ValueError):
    """An operation that needs samples received none."""


class FitError(DefectSpectraError, RuntimeError):
    """A fit could not be initialized or did not converge."""


class NoDecayError(FitError):
    """Trace shows no decaying section to fit."""


class NoRiseError(DefectSpectraError, ValueError):
    """Trace has no interior maximum, so a rise time is undefined."""


class UnboundedLineError(DefectSpectraError, ValueError):
    """A spectrum never crosses half maximum on both sides of its peak."""


class IntegrationError(DefectSpectraError, RuntimeError):
    """A rate-equation integration failed or produced nonphysical state."""


# ---------------------------------------------------------------------------
# emitter description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmitterParams:
    """Reference emitter: unstrained line position, homogeneous width, tau_r."""

    zpl_wavelength_nm: float = ZPL_WAVELENGTH_NM
    homogeneous_fwhm_nm: float = HOMOGENEOUS_FWHM_NM
    radiative_lifetime_ns: float = RADIATIVE_LIFETIME_NS

    def __post_init__(self):
        if self.zpl_wavelength_nm <= 0:
            raise InvalidArgumentError("zpl_wavelength_nm must be positive")
        if self.homogeneous_fwhm_nm <= 0:
            raise InvalidArgumentError("homogeneous_fwhm_nm must be positive")
        if self.radiative_lifetime_ns <= 0:
            raise InvalidArgumentError("radiative_lifetime_ns must be positive")

    @property
    def zpl_energy_ev(self) -> float:
        return HC_EV_NM / self.zpl_wavelength_nm


# ---------------------------------------------------------------------------
# unit conversion
# ---------------------------------------------------------------------------

def delta_lambda_from_delta_e(delta_e_mev, lambda0_nm=ZPL_WAVELENGTH_NM):
    """Convert an energy shift in meV to a wavelength shift in nm.

    First-order expansion about ``lambda0_nm``; a positive energy shift
    (blueshift) gives a negative wavelength shift. Accepts scalars or
    arrays.
    """
    if lambda0_nm <= 0:
        raise InvalidArgumentError("lambda0_nm must be positive")
    delta_e_mev = np.asarray(delta_e_mev, dtype=float)
    out = -(lambda0_nm ** 2) * delta_e_mev * 1e-3 / HC_EV_NM
    return float(out) if out.ndim == 0 else out


def delta_e_from_delta_lambda(delta_lambda_nm, lambda0_nm=ZPL_WAVELENGTH_NM):
    """Inverse of :func:`delta_lambda_from_delta_e` (same linearization)."""
    if lambda0_nm <= 0:
        raise InvalidArgumentError("lambda0_nm must be positive")
    delta_lambda_nm = np.asarray(delta_lambda_nm, dtype=float)
    out = -delta_lambda_nm * HC_EV_NM * 1e3 / lambda0_nm ** 2
    return float(out) if out.ndim == 0 else out


def validate_strain(strain) -> np.ndarray:
    """Check a strain vector (or array of them, last axis 6) and return it.

    Components are ordered ``e_xx, e_yy, e_zz, e_xy, e_xz, e_yz``.
    """
    arr = np.asarray(strain, dtype=float)
    if arr.shape[-1] != 6:
        raise InvalidArgumentError(
            f"strain vector needs 6 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("strain components must be finite")
    if np.any(np.abs(arr) > STRAIN_CAP):
        worst = float(np.max(np.abs(arr)))
        raise RangeError(
            f"strain component magnitude {worst:.4g} exceeds the physical cap "
            f"{STRAIN_CAP}")
    return arr


# ---------------------------------------------------------------------------
# deterministic RNG streams
# ---------------------------------------------------------------------------

def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Return a counter-based generator for stream ``key`` under ``seed``.

    The same (seed, key) always yields the same sequence, no matter how many
    other streams were drawn from before it. Samplers derive one stream per
    fixed-size work chunk, so results do not depend on thread scheduling.
    """
    if seed < 0:
        raise InvalidArgumentError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
