"""Shared units, exception types, trap parameters and thermal statistics.

Unit conventions used across the package:

- frequencies are ordinary frequencies in Hz unless a name says ``angular``
- magnetic field in gauss, gradients in G/cm
- lengths in micrometres, trap depths in microkelvin (mK where noted)
- times in seconds

The factor of 2*pi is applied in exactly one place, :func:`to_angular`,
which the Hamiltonian assembly calls.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class PlaneAddrError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PlaneAddrError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(PlaneAddrError, ValueError):
    """Inconsistent numerical or run configuration."""


class DegenerateInputError(PlaneAddrError, ValueError):
    """The input makes the requested estimator undefined."""


class NumericalFailure(PlaneAddrError, RuntimeError):
    """A numerical invariant (norm, convergence) was violated."""


class TruncationWarning(UserWarning):
    """The Fock-space truncation discards non-negligible thermal weight."""


TRUNCATION_THRESHOLD = 1e-3


def to_angular(freq_hz):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * freq_hz


@dataclass(frozen=True)
class TrapParams:
    """One-dimensional harmonic trap seen by the excitation laser.

    Attributes
    ----------
    trap_frequency : float
        Trap frequency in Hz (not angular).
    lamb_dicke : float
        Lamb-Dicke parameter.
    mean_phonon : float
        Mean thermal occupation of the initial state.
    fock_dim : int
        Highest Fock level kept; the motional space has ``fock_dim + 1`` states.
    depth_uK : float
        Trap depth, informational.
    """

    trap_frequency: float = 28e3
    lamb_dicke: float = 0.4
    mean_phonon: float = 0.59
    fock_dim: int = 10
    depth_uK: float = 50.0

    def __post_init__(self):
        if self.lamb_dicke < 0:
            raise DomainError(f"lamb_dicke must be >= 0, got {self.lamb_dicke}")
        if self.mean_phonon < 0:
            raise DomainError(f"mean_phonon must be >= 0, got {self.mean_phonon}")
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 1:
            raise DomainError(f"fock_dim must be an integer >= 1, got {self.fock_dim}")
        if self.trap_frequency < 0:
            raise DomainError("trap_frequency must be >= 0")

    @property
    def n_motional(self) -> int:
        return int(self.fock_dim) + 1

    def replace(self, **changes) -> "TrapParams":
        from dataclasses import replace

        return replace(self, **changes)


def thermal_weights(mean_phonon: float, fock_dim: int, warn: bool = True) -> np.ndarray:
    """Truncated, renormalised thermal occupation of Fock levels ``0..fock_dim``.

    Weights follow the geometric law ``(n/(n+1))**k`` and are renormalised
    over the kept levels. A :class:`TruncationWarning` is emitted when the
    top level still carries at least ``TRUNCATION_THRESHOLD`` of the weight.
    """
    if mean_phonon < 0 or not np.isfinite(mean_phonon):
        raise DomainError(f"mean phonon number must be >= 0, got {mean_phonon}")
    if int(fock_dim) != fock_dim or fock_dim < 1:
        raise DomainError(f"fock_dim must be an integer >= 1, got {fock_dim}")
    n = np.arange(int(fock_dim) + 1)
    if mean_phonon == 0:
        w = (n == 0).astype(float)
    else:
        ratio = mean_phonon / (mean_phonon + 1.0)
        w = ratio ** n
        w /= w.sum()
    if warn and w[-1] >= TRUNCATION_THRESHOLD:
        warnings.warn(
            f"thermal weight {w[-1]:.2e} at the top Fock level {fock_dim} "
            f"(mean phonon {mean_phonon}); increase fock_dim",
            TruncationWarning,
            stacklevel=2,
        )
    return w


def fwhm_to_sigma(fwhm):
    """Gaussian standard deviation for a given full width at half maximum."""
    arr = np.asarray(fwhm, dtype=float)
    if np.any(arr < 0):
        raise DomainError("FWHM must be non-negative")
    out = arr / FWHM_PER_SIGMA
    return float(out) if out.ndim == 0 else out


def sigma_to_fwhm(sigma):
    arr = np.asarray(sigma, dtype=float)
    if np.any(arr < 0):
        raise DomainError("sigma must be non-negative")
    out = arr * FWHM_PER_SIGMA
    return float(out) if out.ndim == 0 else out
