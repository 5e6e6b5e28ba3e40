"""Quadrupole-coil field geometry, Zeeman shifts and site detuning maps.

Positions are in micrometres in the tweezer-array frame. ``array_offset_um``
is the array-frame origin measured from the field zero, so the field zero
sits at ``-array_offset_um`` in array coordinates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FWHM_PER_SIGMA, DomainError

G_PER_CM_TO_G_PER_UM = 1e-4
DEFAULT_ZEEMAN_PER_MF = 2.5e6  # Hz/G per unit m_F on the 1S0-3P2 line


@dataclass(frozen=True)
class FieldConfig:
    """Bias field (G), axial gradient (G/cm), array offset (um), Zeeman slope (Hz/G per m_F)."""

    bias_z: float = 0.9
    gradient: float = 20.5
    array_offset_um: tuple = (0.0, 0.0, 1200.0)
    zeeman_per_mF: float = DEFAULT_ZEEMAN_PER_MF

    def __post_init__(self):
        if self.gradient < 0:
            raise DomainError("gradient must be >= 0")
        if not self.zeeman_per_mF > 0:
            raise DomainError("zeeman_per_mF must be positive")
        off = tuple(float(v) for v in self.array_offset_um)
        if len(off) != 3:
            raise DomainError("array_offset_um needs three components")
        object.__setattr__(self, "array_offset_um", off)

    @property
    def gradient_G_per_um(self) -> float:
        return self.gradient * G_PER_CM_TO_G_PER_UM

    def replace(self, **changes) -> "FieldConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class ArrayGeometry:
    """Tweezer sites (N x 3, um) and the plane index of each site.

    Planes are renumbered ``0..P-1`` in order of increasing mean z.
    """

    sites: np.ndarray
    plane_of: np.ndarray
    spacings: tuple = field(default=(np.nan, np.nan))

    def __post_init__(self):
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        planes = np.asarray(self.plane_of).astype(int).reshape(-1)
        if sites.ndim != 2 or sites.shape[1] != 3:
            raise DomainError("sites must be an (N, 3) array")
        if planes.shape[0] != sites.shape[0]:
            raise DomainError("plane_of must assign exactly one plane to each site")
        if sites.shape[0] == 0:
            raise DomainError("geometry has no sites")
        labels = np.unique(planes)
        mean_z = np.array([sites[planes == p, 2].mean() for p in labels])
        rank = {lab: i for i, lab in enumerate(labels[np.argsort(mean_z, kind="stable")])}
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "plane_of", np.array([rank[p] for p in planes]))
        object.__setattr__(self, "spacings", tuple(float(s) for s in self.spacings))

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def n_planes(self) -> int:
        return int(self.plane_of.max()) + 1

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.sites.min(axis=0) + self.sites.max(axis=0))

    def plane_indices(self, plane: int) -> np.ndarray:
        if not 0 <= plane < self.n_planes:
            raise DomainError(f"plane {plane} does not exist (have {self.n_planes})")
        return np.flatnonzero(self.plane_of == plane)

    def translated(self, shift) -> "ArrayGeometry":
        return ArrayGeometry(self.sites + np.asarray(shift, dtype=float), self.plane_of, self.spacings)

    @classmethod
    def cuboid(cls, nx: int, ny: int, nz: int, dxy: float, dz: float) -> "ArrayGeometry":
        """Regular ``nx x ny x nz`` grid centred on the origin."""
        if min(nx, ny, nz) < 1:
            raise DomainError("cuboid dimensions must be >= 1")
        if dxy < 0 or dz < 0:
            raise DomainError("spacings must be >= 0")
        x = (np.arange(nx) - (nx - 1) / 2) * dxy
        y = (np.arange(ny) - (ny - 1) / 2) * dxy
        z = (np.arange(nz) - (nz - 1) / 2) * dz
        zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
        sites = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        planes = np.repeat(np.arange(nz), nx * ny)
        return cls(sites, planes, (dxy, dz))

    @classmethod
    def from_csv(cls, path) -> "ArrayGeometry":
        """Read ``site_id, x_um, y_um, z_um, plane`` rows (header required)."""
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            need = {"site_id", "x_um", "y_um", "z_um", "plane"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise DomainError(f"geometry CSV must have columns {sorted(need)}")
            rows = list(reader)
        ids = [r["site_id"] for r in rows]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate site_id in geometry CSV")
        sites = [[float(r["x_um"]), float(r["y_um"]), float(r["z_um"])] for r in rows]
        return cls(np.array(sites), np.array([int(r["plane"]) for r in rows]))

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["site_id", "x_um", "y_um", "z_um", "plane"])
            for i, ((x, y, z), p) in enumerate(zip(self.sites, self.plane_of)):
                w.writerow([i, repr(float(x)), repr(float(y)), repr(float(z)), int(p)])


def field_magnitude(pos, cfg: FieldConfig):
    """|B| in gauss at array-frame position(s) ``pos`` (..., 3) in um."""
    p = np.asarray(pos, dtype=float) + np.asarray(cfg.array_offset_um)
    b = cfg.gradient_G_per_um
    bx = 0.5 * b * p[..., 0]
    by = 0.5 * b * p[..., 1]
    bz = b * p[..., 2] + cfg.bias_z
    return np.sqrt(bx * bx + by * by + bz * bz)


def zeeman_shift(B, m_F: float, cfg: FieldConfig):
    """Linear Zeeman shift (Hz) of the addressed sublevel."""
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise DomainError("field magnitude must be >= 0")
    out = m_F * cfg.zeeman_per_mF * B
    return float(out) if out.ndim == 0 else out


def plane_sensitivity(b: float, m_F: float, cfg: FieldConfig | None = None) -> float:
    """Detuning gradient in Hz per um for a field gradient ``b`` in G/cm."""
    if b < 0:
        raise DomainError("gradient must be >= 0")
    zeeman = DEFAULT_ZEEMAN_PER_MF if cfg is None else cfg.zeeman_per_mF
    return m_F * zeeman * b * G_PER_CM_TO_G_PER_UM


def site_detuning_map(geom: ArrayGeometry, cfg: FieldConfig, m_F: float) -> np.ndarray:
    """Per-site Zeeman shift (Hz) relative to the shift at the array centre."""
    shifts = zeeman_shift(field_magnitude(geom.sites, cfg), m_F, cfg)
    ref = zeeman_shift(field_magnitude(geom.center, cfg), m_F, cfg)
    return np.atleast_1d(shifts - ref)


def inhomogeneity_fwhm(shifts) -> float:
    """Gaussian-equivalent FWHM of a set of shifts (population standard deviation)."""
    s = np.asarray(shifts, dtype=float).reshape(-1)
    if s.size < 2:
        raise DomainError("need at least two sites")
    return float(FWHM_PER_SIGMA * s.std())


def plane_inhomogeneity(geom: ArrayGeometry, cfg: FieldConfig, m_F: float, plane: int | None = None) -> float:
    """In-plane inhomogeneity FWHM; ``plane`` defaults to the middle plane."""
    if plane is None:
        plane = geom.n_planes // 2
    shifts = site_detuning_map(geom, cfg, m_F)
    return inhomogeneity_fwhm(shifts[geom.plane_indices(plane)])


def ripple_broadening(relative_sd: float, fluctuating_field: float, m_F: float, cfg: FieldConfig | None = None) -> float:
    """FWHM (Hz) from a relative current ripple acting on ``fluctuating_field`` gauss."""
    if relative_sd < 0 or fluctuating_field < 0:
        raise DomainError("relative_sd and fluctuating_field must be >= 0")
    zeeman = DEFAULT_ZEEMAN_PER_MF if cfg is None else cfg.zeeman_per_mF
    return float(FWHM_PER_SIGMA * relative_sd * fluctuating_field * abs(m_F) * zeeman)


def gauss_to_hz_fwhm(noise_G: float, m_F: float, cfg: FieldConfig | None = None) -> float:
    """Magnetic noise FWHM in gauss to detuning FWHM in Hz."""
    if noise_G < 0:
        raise DomainError("noise must be >= 0")
    zeeman = DEFAULT_ZEEMAN_PER_MF if cfg is None else cfg.zeeman_per_mF
    return float(noise_G * abs(m_F) * zeeman)
