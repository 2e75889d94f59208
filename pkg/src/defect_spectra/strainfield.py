"""Continuum strain fields of point defects near an emitter at the origin.

Each defect is a center of dilatation. At displacement r from the defect
the strain tensor is

    eps_ij = (A / r^3) (delta_ij - 3 rhat_i rhat_j),   A = dV / (4 pi)

with dV the relaxation volume. The field is traceless: a vacancy
(negative dV) is radially tensile and tangentially compressive, an
interstitial (positive dV) the reverse. Anisotropy of the real defects
is deliberately not modeled; the relaxation volume is the single knob.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    SI_ATOMIC_VOLUME_NM3,
    CoreRegionError,
    InvalidArgumentError,
)

# relaxation volumes in units of the atomic volume, by defect kind
DEFAULT_RELAXATION_VOLUMES = {
    "vacancy": -0.25,
    "interstitial": +0.60,
}


@dataclass(frozen=True)
class ElasticParams:
    atomic_volume_nm3: float = SI_ATOMIC_VOLUME_NM3
    core_cutoff_nm: float = 0.25

    def __post_init__(self):
        if self.atomic_volume_nm3 <= 0:
            raise InvalidArgumentError("atomic_volume_nm3 must be positive")
        if self.core_cutoff_nm <= 0:
            raise InvalidArgumentError("core_cutoff_nm must be positive")


@dataclass(frozen=True)
class PointDefect:
    """A dilatation center at ``position_nm`` relative to the emitter."""

    kind: str
    position_nm: tuple
    relaxation_volume_omega0: float | None = None

    def __post_init__(self):
        if self.kind not in DEFAULT_RELAXATION_VOLUMES:
            raise InvalidArgumentError(
                f"unknown defect kind {self.kind!r}; expected one of "
                f"{sorted(DEFAULT_RELAXATION_VOLUMES)}")

    def relaxation_volume(self) -> float:
        if self.relaxation_volume_omega0 is not None:
            return self.relaxation_volume_omega0
        return DEFAULT_RELAXATION_VOLUMES[self.kind]


def dilatation_strain(defect: PointDefect, points_nm,
                      params: ElasticParams = ElasticParams(),
                      defect_index: int | None = None) -> np.ndarray:
    """Strain 6-vectors (e_xx, e_yy, e_zz, e_xy, e_xz, e_yz) at points.

    Raises CoreRegionError when any point falls within the core cutoff of
    the defect, where the continuum form is meaningless.
    """
    pts = np.atleast_2d(np.asarray(points_nm, dtype=float))
    if pts.shape[-1] != 3:
        raise InvalidArgumentError("points must have 3 Cartesian components")
    rvec = pts - np.asarray(defect.position_nm, dtype=float)
    r = np.linalg.norm(rvec, axis=-1)
    if np.any(r < params.core_cutoff_nm):
        raise CoreRegionError(
            f"field point within core cutoff ({params.core_cutoff_nm} nm) of "
            f"{defect.kind} at {tuple(defect.position_nm)}",
            defect_index=defect_index)

    amp = defect.relaxation_volume() * params.atomic_volume_nm3 / (4.0 * np.pi)
    n = rvec / r[..., None]
    a = amp / r ** 3
    out = np.empty(pts.shape[:-1] + (6,))
    out[..., 0] = a * (1.0 - 3.0 * n[..., 0] * n[..., 0])
    out[..., 1] = a * (1.0 - 3.0 * n[..., 1] * n[..., 1])
    out[..., 2] = a * (1.0 - 3.0 * n[..., 2] * n[..., 2])
    out[..., 3] = a * (-3.0 * n[..., 0] * n[..., 1])
    out[..., 4] = a * (-3.0 * n[..., 0] * n[..., 2])
    out[..., 5] = a * (-3.0 * n[..., 1] * n[..., 2])
    if np.asarray(points_nm).ndim == 1:
        return out[0]
    return out


def superpose(defects, points_nm,
              params: ElasticParams = ElasticParams()) -> np.ndarray:
    """Total strain from several defects; linear superposition.

    Core-region violations propagate with the index of the offending
    defect attached.
    """
    pts = np.asarray(points_nm, dtype=float)
    total = np.zeros((np.atleast_2d(pts).shape[0], 6))
    for i, defect in enumerate(defects):
        total = total + np.atleast_2d(
            dilatation_strain(defect, pts, params, defect_index=i))
    if pts.ndim == 1:
        return total[0]
    return total
