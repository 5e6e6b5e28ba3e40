"""Steady-state sideband spectra, width extraction and Gaussian smoothing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve1d
from scipy.special import voigt_profile

from .core import ConfigurationError, DomainError, PlaneAddrError, TrapParams, fwhm_to_sigma, thermal_weights
from .fockdyn import sideband_rabi_matrix

DEFAULT_SPAN = 250e3
DEFAULT_PITCH = 100.0


class AmbiguousWidthError(PlaneAddrError, ValueError):
    """The half-maximum crossings do not define a single width."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


@dataclass(frozen=True)
class SpectrumTrace:
    detunings: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.detunings, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise DomainError("detunings and values must be 1-D arrays of equal length")
        if x.size < 3 or np.any(np.diff(x) <= 0):
            raise DomainError("detuning grid must be strictly increasing with >= 3 points")
        if np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
            raise DomainError("spectrum values must lie in [0, 1]")
        object.__setattr__(self, "detunings", x)
        object.__setattr__(self, "values", np.clip(y, 0.0, 1.0))

    @property
    def pitch(self) -> float:
        return float(self.detunings[1] - self.detunings[0])

    def is_uniform(self, rtol=1e-6) -> bool:
        steps = np.diff(self.detunings)
        return bool(np.all(np.abs(steps - steps.mean()) <= rtol * abs(steps.mean())))

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.detunings))

    def to_csv(self, path):
        write_trace_csv(self, path)


@dataclass(frozen=True)
class LineModel:
    """Saturated line parameters; ``gamma`` and ``rabi`` are in Hz."""

    gamma: float
    rabi: float
    trap: TrapParams = field(default_factory=TrapParams)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("linewidth gamma must be positive")
        if self.rabi < 0:
            raise DomainError("Rabi frequency must be non-negative")


@dataclass(frozen=True)
class LineComponents:
    """Flattened list of saturated Lorentzians making up a spectrum.

    Line ``k`` is centred at ``centers[k]``, has peak value ``heights[k]``
    (thermal weight included) and half width at half maximum ``hwhm[k]``.
    """

    centers: np.ndarray
    heights: np.ndarray
    hwhm: np.ndarray
    order: np.ndarray

    def select(self, delta_n=None) -> "LineComponents":
        if delta_n is None:
            return self
        keep = np.isin(self.order, np.atleast_1d(delta_n))
        return LineComponents(self.centers[keep], self.heights[keep], self.hwhm[keep], self.order[keep])

    def evaluate(self, detunings, noise_fwhm: float = 0.0) -> np.ndarray:
        """Sum of the lines at ``detunings``, optionally Gaussian-smoothed (exact Voigt)."""
        x = np.asarray(detunings, dtype=float)
        out = np.zeros(x.shape)
        sigma = fwhm_to_sigma(noise_fwhm)
        flat = x.reshape(-1)
        acc = out.reshape(-1)
        for c, h, g in zip(self.centers, self.heights, self.hwhm):
            if h == 0:
                continue
            u = flat - c
            if sigma > 0:
                # peak-height Lorentzian = h * pi * g * (normalised Lorentzian)
                acc += h * math.pi * g * voigt_profile(u, sigma, g)
            else:
                acc += h / (1.0 + (u / g) ** 2)
        return out


def line_components(model: LineModel) -> LineComponents:
    """Saturated Lorentzians for every (n_g, n_e) pair, thermally weighted.

    Each pair contributes ``p(n_g) s / (1 + (2(x - c)/gamma)**2 + 2 s)`` with
    ``s = (Omega_{n_g,n_e}/gamma)**2`` and ``c = (n_e - n_g) * trap_frequency``.
    The weights ``p`` are normalised over the kept ground levels.
    """
    trap = model.trap
    weights = thermal_weights(trap.mean_phonon, trap.fock_dim)
    rabis = sideband_rabi_matrix(model.rabi, trap.lamb_dicke, trap.fock_dim)
    d = trap.n_motional
    ng, ne = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    s = (rabis / model.gamma) ** 2
    heights = weights[:, None] * s / (1.0 + 2.0 * s)
    hwhm = 0.5 * model.gamma * np.sqrt(1.0 + 2.0 * s)
    order = ne - ng
    centers = order * trap.trap_frequency
    return LineComponents(centers.ravel().astype(float), heights.ravel(), hwhm.ravel(), order.ravel())


def default_grid(span: float = DEFAULT_SPAN, pitch: float = DEFAULT_PITCH) -> np.ndarray:
    n = int(round(span / pitch))
    return np.arange(-n, n + 1) * pitch


def steady_state_spectrum(model: LineModel, grid=None, delta_n=None, noise_fwhm: float = 0.0) -> SpectrumTrace:
    """Thermally averaged steady-state excitation spectrum on ``grid`` (Hz).

    ``delta_n`` restricts the sum to the given motional order(s) (0 carrier,
    +1 blue sideband, ...). ``noise_fwhm`` applies an exact Gaussian smoothing.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    comps = line_components(model).select(delta_n)
    return SpectrumTrace(grid, comps.evaluate(grid, noise_fwhm))


def _crossing(x0, x1, y0, y1, level):
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def fwhm(trace: SpectrumTrace) -> float:
    """Full width at half maximum from linearly interpolated crossings.

    Raises :class:`AmbiguousWidthError` for a flat trace, a maximum on the
    grid edge, or several disjoint regions above half maximum (the error
    carries the central-region and outer-envelope widths).
    """
    x, y = trace.detunings, trace.values
    peak = y.max()
    if not peak > 0:
        raise AmbiguousWidthError("trace has no maximum (all values zero)")
    i = int(np.argmax(y))
    half = peak / 2.0
    above = y >= half
    if above[0] or above[-1]:
        raise AmbiguousWidthError("half-maximum region reaches the grid edge")
    edges = np.flatnonzero(np.diff(above.astype(int)))
    starts, stops = edges[::2], edges[1::2]  # region = starts+1 .. stops

    def width(a, b):
        left = _crossing(x[a], x[a + 1], y[a], y[a + 1], half)
        right = _crossing(x[b], x[b + 1], y[b], y[b + 1], half)
        return right - left

    if len(starts) > 1:
        k = int(np.searchsorted(stops, i))
        central = width(starts[k], stops[k])
        outer = width(starts[0], stops[-1])
        raise AmbiguousWidthError(
            f"{len(starts)} disjoint half-maximum regions; central {central:.6g}, outer {outer:.6g}",
            candidates=(central, outer),
        )
    return float(width(starts[0], stops[0]))


def convolve_gaussian(trace: SpectrumTrace, fwhm_hz: float) -> SpectrumTrace:
    """Discrete convolution with a normalised Gaussian truncated at 5 sigma.

    Edges are handled by mirror reflection, which keeps the total integral.
    """
    if fwhm_hz < 0:
        raise DomainError("kernel FWHM must be non-negative")
    if not trace.is_uniform():
        raise ConfigurationError("Gaussian convolution needs a uniform detuning grid")
    if fwhm_hz == 0:
        return trace
    sigma_pts = fwhm_to_sigma(fwhm_hz) / trace.pitch
    half = max(1, int(math.ceil(5.0 * sigma_pts)))
    if 2 * half + 1 > trace.values.size:
        raise ConfigurationError("Gaussian kernel is wider than the detuning grid")
    k = np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (k / sigma_pts) ** 2) if sigma_pts > 0 else (k == 0).astype(float)
    kernel /= kernel.sum()
    smoothed = convolve1d(trace.values, kernel, mode="reflect")
    return SpectrumTrace(trace.detunings, smoothed)


def lorentzian(x, center, fwhm_hz, height=1.0):
    return height / (1.0 + (2.0 * (np.asarray(x, dtype=float) - center) / fwhm_hz) ** 2)


def default_sideband_height(trap: TrapParams) -> float:
    """Thermal average of ``(Omega_{n,n+/-1} / Omega_{n,n})**2`` over both sidebands."""
    weights = thermal_weights(trap.mean_phonon, trap.fock_dim)
    rabis = sideband_rabi_matrix(1.0, trap.lamb_dicke, trap.fock_dim)
    total = 0.0
    for n, w in enumerate(weights):
        carrier = rabis[n, n]
        if carrier == 0:
            continue
        blue = rabis[n, n + 1] ** 2 if n + 1 < weights.size else 0.0
        red = rabis[n, n - 1] ** 2 if n >= 1 else 0.0
        total += w * 0.5 * (blue + red) / carrier ** 2
    return float(total)


def synth_triple_lorentzian(
    carrier_fwhm: float,
    sideband_fwhm: float,
    trap_frequency: float,
    sideband_height: float | None = None,
    peak_norm: float = 1.0,
    grid=None,
    trap: TrapParams | None = None,
) -> SpectrumTrace:
    """Carrier Lorentzian plus red and blue sidebands at ``-/+ trap_frequency``.

    The sideband height is relative to the carrier; by default it is
    :func:`default_sideband_height` of ``trap``. The summed trace is scaled
    so its maximum equals ``peak_norm``.
    """
    if not carrier_fwhm > 0 or not sideband_fwhm > 0:
        raise DomainError("widths must be positive")
    if not 0 < peak_norm <= 1:
        raise DomainError("peak normalisation must be in (0, 1]")
    if sideband_height is None:
        sideband_height = default_sideband_height(trap or TrapParams(trap_frequency=trap_frequency))
    if sideband_height < 0:
        raise DomainError("sideband height must be non-negative")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    y = lorentzian(grid, 0.0, carrier_fwhm)
    y = y + lorentzian(grid, -trap_frequency, sideband_fwhm, sideband_height)
    y = y + lorentzian(grid, trap_frequency, sideband_fwhm, sideband_height)
    return SpectrumTrace(grid, peak_norm * y / y.max())


def write_trace_csv(trace: SpectrumTrace, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning_Hz", "excitation_probability"])
        for x, y in zip(trace.detunings, trace.values):
            w.writerow([repr(float(x)), repr(float(y))])


def read_trace_csv(path) -> SpectrumTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SpectrumTrace(data[:, 0], data[:, 1])
