"""Phase-only SLM holograms for 3D tweezer arrays.

Each site at ``(x_m, y_m, z_m)`` (um, sample plane) is generated by a blazed
grating plus a Fresnel lens across the SLM pixels ``(x_s, y_s)``::

    phase = 2 pi M (x_m x_s + y_m y_s) / (lambda f) + pi M^2 z_m (x_s^2 + y_s^2) / (lambda f^2)

Sites are superposed with random phases, and the result is checked with a
scalar Fraunhofer model: the focal field is the discrete Fourier transform of
the unit-amplitude aperture, whose focal pixel is ``lambda f / (M N pitch)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter

from .core import DomainError

TWO_PI = 2.0 * np.pi
UM, MM, NM = 1e-6, 1e-3, 1e-9


@dataclass(frozen=True)
class OpticsParams:
    """4f magnification, objective focal length (mm) and wavelength (nm)."""

    magnification: float = 5.0 / 3.0
    focal_length_mm: float = 20.0
    wavelength_nm: float = 532.0

    def __post_init__(self):
        if min(self.magnification, self.focal_length_mm, self.wavelength_nm) <= 0:
            raise DomainError("optics parameters must be positive")

    @property
    def lam_f(self) -> float:
        """lambda * f in m^2."""
        return self.wavelength_nm * NM * self.focal_length_mm * MM


@dataclass(frozen=True)
class SlmGrid:
    """Pixel pitch (um) and a ``(height, width)`` phase array wrapped to [0, 2 pi)."""

    pitch_um: float = 12.5
    width: int = 1024
    height: int = 1024
    phases: np.ndarray | None = None

    def __post_init__(self):
        if not self.pitch_um > 0 or self.width < 1 or self.height < 1:
            raise DomainError("invalid SLM grid dimensions")
        if self.phases is not None:
            ph = np.asarray(self.phases, dtype=float)
            if ph.shape != (self.height, self.width):
                raise DomainError(f"phase array shape {ph.shape} != {(self.height, self.width)}")
            ph = np.mod(ph, TWO_PI)
            ph[ph >= TWO_PI] = 0.0  # mod can round up to exactly 2 pi
            ph.setflags(write=False)
            object.__setattr__(self, "phases", ph)

    def coords(self):
        """Pixel-centre coordinates in metres, origin at the grid centre."""
        xs = (np.arange(self.width) - self.width // 2) * self.pitch_um * UM
        ys = (np.arange(self.height) - self.height // 2) * self.pitch_um * UM
        return xs, ys

    def with_phases(self, phases) -> "SlmGrid":
        return SlmGrid(self.pitch_um, self.width, self.height, phases)

    def focal_pixel_um(self, optics: OpticsParams):
        """Focal-plane sampling (x, y) in um."""
        px = optics.lam_f / (optics.magnification * self.width * self.pitch_um * UM) / UM
        py = optics.lam_f / (optics.magnification * self.height * self.pitch_um * UM) / UM
        return px, py


@dataclass(frozen=True)
class SiteWeights:
    """Complex amplitude per site."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.size == 0 or not np.any(np.abs(v) > 0):
            raise DomainError("at least one site weight must be nonzero")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, n: int) -> "SiteWeights":
        return cls(np.full(n, 1.0 / np.sqrt(n), dtype=complex))

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.values)


def _sites(sites) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sites, dtype=float))
    if s.shape[1] != 3 or s.shape[0] < 1:
        raise DomainError("sites must be an (N, 3) array in um")
    return s


def _quadratic_coeff(z_um, optics):
    return np.pi * optics.magnification ** 2 * z_um * UM / (optics.lam_f * optics.focal_length_mm * MM)


def elementary_phase(site, grid: SlmGrid, optics: OpticsParams) -> np.ndarray:
    """Unwrapped phase (rad) that places one tweezer at ``site`` (um)."""
    x_m, y_m, z_m = (float(v) for v in site)
    xs, ys = grid.coords()
    k = TWO_PI * optics.magnification / optics.lam_f
    lin_x = k * x_m * UM * xs
    lin_y = k * y_m * UM * ys
    q = _quadratic_coeff(z_m, optics)
    return lin_y[:, None] + lin_x[None, :] + q * (ys[:, None] ** 2 + xs[None, :] ** 2)


def superpose(sites, weights: SiteWeights | None, grid: SlmGrid, optics: OpticsParams, seed: int = 0) -> SlmGrid:
    """Phase of the randomly phased weighted sum of elementary site fields."""
    sites = _sites(sites)
    if weights is None:
        weights = SiteWeights.uniform(len(sites))
    if weights.values.size != len(sites):
        raise DomainError("one weight per site required")
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, TWO_PI, size=len(sites))
    xs, ys = grid.coords()
    k = TWO_PI * optics.magnification / optics.lam_f
    total = np.zeros((grid.height, grid.width), dtype=complex)
    for (x_m, y_m, z_m), w, p in zip(sites, weights.values, phi):
        if w == 0:
            continue
        # the elementary field factorises into row and column terms
        q = _quadratic_coeff(z_m, optics)
        fx = np.exp(1j * (k * x_m * UM * xs + q * xs ** 2))
        fy = np.exp(1j * (k * y_m * UM * ys + q * ys ** 2 + p))
        total += w * np.outer(fy, fx)
    return grid.with_phases(np.angle(total))


@dataclass(frozen=True)
class FocalPlane:
    """Intensity (unit total power) sampled at ``pixel_um`` about the optical axis."""

    intensity: np.ndarray
    pixel_um: tuple
    z_um: float = 0.0

    def coords(self):
        h, w = self.intensity.shape
        x = (np.arange(w) - w // 2) * self.pixel_um[0]
        y = (np.arange(h) - h // 2) * self.pixel_um[1]
        return x, y

    def index_of(self, x_um, y_um):
        h, w = self.intensity.shape
        return int(round(y_um / self.pixel_um[1])) + h // 2, int(round(x_um / self.pixel_um[0])) + w // 2


def propagate(mask: SlmGrid, z_um: float, optics: OpticsParams) -> FocalPlane:
    """Focal-region intensity at axial position ``z_um`` for uniform illumination."""
    if mask.phases is None:
        raise DomainError("mask has no phases")
    phase = mask.phases
    if z_um != 0:
        xs, ys = mask.coords()
        phase = phase - _quadratic_coeff(z_um, optics) * (ys[:, None] ** 2 + xs[None, :] ** 2)
    aperture = np.exp(1j * phase)
    field = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(aperture), norm="ortho"))
    intensity = np.abs(field) ** 2 / aperture.size  # unit-modulus aperture has power N
    return FocalPlane(intensity, mask.focal_pixel_um(optics), float(z_um))


@dataclass(frozen=True)
class SpotReport:
    found: np.ndarray  # bool per expected site
    positions: np.ndarray  # matched (x, y) um, nan when missing
    peaks: np.ndarray  # matched peak intensity, nan when missing
    uniformity: float

    @property
    def n_found(self) -> int:
        return int(self.found.sum())

    @property
    def missing(self) -> np.ndarray:
        return np.flatnonzero(~self.found)

    def offsets(self, expected) -> np.ndarray:
        e = np.atleast_2d(np.asarray(expected, dtype=float))[:, :2]
        return np.hypot(*(self.positions - e).T)


def verify_spots(plane: FocalPlane, expected, tolerance_um: float, rel_threshold: float = 0.1) -> SpotReport:
    """Match expected lateral positions to local maxima of the intensity.

    A site is found when a local maximum brighter than ``rel_threshold`` times
    the global maximum lies within ``tolerance_um``. Uniformity is
    ``(max - min) / (max + min)`` of matched peaks.
    """
    if tolerance_um < max(plane.pixel_um):
        raise DomainError("tolerance must be at least one focal pixel")
    expected = np.atleast_2d(np.asarray(expected, dtype=float))
    I = plane.intensity
    is_max = (I == maximum_filter(I, size=3, mode="constant")) & (I >= rel_threshold * I.max())
    my, mx = np.nonzero(is_max)
    x, y = plane.coords()
    px, py = x[mx], y[my]
    vals = I[my, mx]
    found = np.zeros(len(expected), dtype=bool)
    pos = np.full((len(expected), 2), np.nan)
    peaks = np.full(len(expected), np.nan)
    for i, (ex, ey) in enumerate(expected[:, :2]):
        d = np.hypot(px - ex, py - ey)
        near = np.flatnonzero(d <= tolerance_um)
        if near.size:
            j = near[np.argmax(vals[near])]
            found[i] = True
            pos[i] = px[j], py[j]
            peaks[i] = vals[j]
    if found.any():
        hi, lo = np.nanmax(peaks), np.nanmin(peaks)
        uni = float((hi - lo) / (hi + lo))
    else:
        uni = float("nan")
    return SpotReport(found, pos, peaks, uni)


def homogenize(weights: SiteWeights, intensities, gamma: float = 0.5) -> SiteWeights:
    """Weight update ``w * (<I> / I)**gamma`` renormalised to unit total power."""
    I = np.asarray(intensities, dtype=float).reshape(-1)
    if I.size != weights.values.size:
        raise DomainError("one intensity per site required")
    if np.any(~(I > 0)):
        raise DomainError("measured intensities must be positive")
    w = weights.values * (I.mean() / I) ** gamma
    return SiteWeights(w / np.sqrt(np.sum(np.abs(w) ** 2)))


def site_intensities(mask: SlmGrid, sites, optics: OpticsParams) -> np.ndarray:
    """Intensity at each site's nominal pixel, propagating once per distinct plane."""
    sites = _sites(sites)
    out = np.empty(len(sites))
    for z in np.unique(sites[:, 2]):
        plane = propagate(mask, z, optics)
        for i in np.flatnonzero(sites[:, 2] == z):
            out[i] = plane.intensity[plane.index_of(sites[i, 0], sites[i, 1])]
    return out


def homogenize_loop(sites, grid: SlmGrid, optics: OpticsParams, iterations: int = 5, gamma: float = 0.5, seed: int = 0, weights=None):
    """Closed-loop weighting with the propagation model; returns mask, weights, uniformity history."""
    sites = _sites(sites)
    weights = SiteWeights.uniform(len(sites)) if weights is None else weights
    history = []
    mask = superpose(sites, weights, grid, optics, seed)
    for _ in range(iterations + 1):
        I = site_intensities(mask, sites, optics)
        history.append(float((I.max() - I.min()) / (I.max() + I.min())))
        if len(history) > iterations:
            break
        weights = homogenize(weights, I, gamma)
        mask = superpose(sites, weights, grid, optics, seed)
    return mask, weights, history


def phase_to_uint16(phases) -> np.ndarray:
    return np.minimum(np.round(np.asarray(phases) / TWO_PI * 65536.0), 65535).astype(np.uint16)


def write_pgm(path, values_uint16):
    """Binary 16-bit PGM (P5, maxval 65535, big-endian, row-major)."""
    a = np.asarray(values_uint16)
    if a.ndim != 2:
        raise DomainError("PGM data must be 2-D")
    h, w = a.shape
    with Path(path).open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(a.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = []
    pos = 0
    while len(parts) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        parts.append(data[pos:end])
        pos = end
    if parts[0] != b"P5":
        raise DomainError("not a binary PGM file")
    w, h, maxval = (int(p) for p in parts[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data[pos + 1:], dtype=dtype, count=w * h).reshape(h, w)


def write_mask_pgm(mask: SlmGrid, path):
    write_pgm(path, phase_to_uint16(mask.phases))


def write_intensity_pgm(plane: FocalPlane, path):
    I = plane.intensity
    scaled = np.round(I / I.max() * 65535.0) if I.max() > 0 else np.zeros_like(I)
    write_pgm(path, scaled.astype(np.uint16))


def write_mask_csv(mask: SlmGrid, path):
    np.savetxt(path, mask.phases, delimiter=",", fmt="%.9f",
               header=",".join(f"col{j}" for j in range(mask.width)), comments="")


def write_spot_csv(report: SpotReport, expected, path):
    expected = np.atleast_2d(np.asarray(expected, dtype=float))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "x_um", "y_um", "z_um", "found", "found_x_um", "found_y_um", "peak_intensity"])
        for i, (e, f, p, pk) in enumerate(zip(expected, report.found, report.positions, report.peaks)):
            w.writerow([i, *(repr(float(v)) for v in e), int(f), repr(float(p[0])), repr(float(p[1])), repr(float(pk))])
