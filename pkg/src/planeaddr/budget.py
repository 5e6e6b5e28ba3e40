"""Broadening budget: quadrature totals, per-source pi-pulse infidelity, ionization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .core import DomainError, TrapParams
from .fockdyn import DetuningNoise, MonteCarloFidelity, pi_pulse_fidelity_mc

KINDS = ("carrier", "sideband", "both")
IONIZATION_BETA = 21.5  # Hz / mK^2


@dataclass(frozen=True)
class BudgetComponent:
    label: str
    carrier_fwhm: float
    sideband_fwhm: float
    detuning_error: bool = True  # False for saturation broadening

    def fwhm(self, kind: str) -> float:
        return self.carrier_fwhm if kind == "carrier" else self.sideband_fwhm


@dataclass(frozen=True)
class NoiseBudget:
    """Named FWHM broadenings (Hz) on the carrier and first-sideband lines."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        labels = [c.label for c in comps]
        if len(set(labels)) != len(labels):
            raise DomainError("budget labels must be unique")
        for c in comps:
            if c.carrier_fwhm < 0 or c.sideband_fwhm < 0:
                raise DomainError(f"negative FWHM in component {c.label!r}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_pairs(cls, pairs, kind: str = "both") -> "NoiseBudget":
        """Build from ``(label, fwhm)`` pairs applying to ``kind``."""
        _check_kind(kind)
        comps = []
        for label, w in pairs:
            car = w if kind in ("carrier", "both") else 0.0
            side = w if kind in ("sideband", "both") else 0.0
            comps.append(BudgetComponent(label, car, side))
        return cls(tuple(comps))

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def _check_kind(kind):
    if kind not in KINDS:
        raise DomainError(f"kind must be one of {KINDS}, got {kind!r}")


def quadrature_total(budget: NoiseBudget, kind: str = "carrier") -> float:
    """Root-sum-square of the component widths for ``kind`` ('carrier' or 'sideband')."""
    if kind not in ("carrier", "sideband"):
        raise DomainError("quadrature_total kind must be 'carrier' or 'sideband'")
    widths = [c.fwhm(kind) for c in budget.components]
    if not widths:
        raise DomainError("budget has no components")
    return math.sqrt(math.fsum(w * w for w in widths))


def per_source_infidelity(
    source_fwhm: float,
    trap: TrapParams,
    rabi: float,
    samples: int = 1000,
    seed: int = 0,
    *,
    excess: bool = True,
    workers: int = 1,
) -> MonteCarloFidelity:
    """Pi-pulse infidelity with only one Gaussian detuning source active.

    Thermal motion is always present. For a nonzero source the default
    (``excess=True``) reports the infidelity in excess of the motional
    dephasing floor; a zero-width source returns the floor itself. Returns
    ``(infidelity, std_error)``.
    """
    if source_fwhm < 0:
        raise DomainError("source FWHM must be >= 0")
    noise = DetuningNoise(fwhm=source_fwhm, seed=seed, samples=samples if source_fwhm > 0 else 1)
    res = pi_pulse_fidelity_mc(trap, rabi, noise, workers=workers)
    inf = 1.0 - res.fidelity
    if excess and source_fwhm > 0:
        floor = pi_pulse_fidelity_mc(trap, rabi, DetuningNoise(0.0, seed, 1), workers=workers)
        inf -= 1.0 - floor.fidelity
    return MonteCarloFidelity(inf, res.std_error)


def ionization_rate(depth_mK: float, beta: float = IONIZATION_BETA) -> float:
    """Two-photon ionization loss rate ``beta * U0**2`` (Hz) for a depth in mK."""
    if depth_mK < 0:
        raise DomainError("trap depth must be >= 0")
    return beta * depth_mK * depth_mK


def reference_budget() -> NoiseBudget:
    """Broadening sources of the 1S0-3P2 pi pulse (Hz)."""
    rows = [
        ("Power broadening", 13.1e3, 4.7e3, False),
        ("Inhomogeneity of magnetic field", 0.3e3, 0.3e3, True),
        ("Magnetic fluctuation by gradient coil", 51.4e3, 51.4e3, True),
        ("Stray magnetic field", 2.5e3, 2.5e3, True),
        ("Laser linewidth", 0.2e3, 0.2e3, True),
        ("Differential light shift", 0.3e3, 0.3e3, True),
    ]
    return NoiseBudget(tuple(BudgetComponent(*r) for r in rows))


@dataclass(frozen=True)
class BudgetRow:
    label: str
    broadening: float
    infidelity: float | None
    std_error: float | None


def budget_table(budget: NoiseBudget, trap: TrapParams, rabi: float, samples: int = 1000, seed: int = 0, workers: int = 1):
    """Per-source rows, the motional floor, and the combined total (Monte-Carlo)."""
    rows = []
    for c in budget:
        if c.detuning_error and c.carrier_fwhm > 0:
            r = per_source_infidelity(c.carrier_fwhm, trap, rabi, samples, seed, workers=workers)
            rows.append(BudgetRow(c.label, c.carrier_fwhm, r.fidelity, r.std_error))
        else:
            rows.append(BudgetRow(c.label, c.carrier_fwhm, None, None))
    floor = per_source_infidelity(0.0, trap, rabi, 1, seed, workers=workers)
    rows.append(BudgetRow("Motional dephasing", 0.0, floor.fidelity, floor.std_error))
    # the total row uses every broadening, saturation included, as one Gaussian width
    total_w = quadrature_total(budget, "carrier")
    tot = per_source_infidelity(total_w, trap, rabi, samples, seed, excess=False, workers=workers)
    rows.append(BudgetRow("Total estimate", total_w, tot.fidelity, tot.std_error))
    return rows


def write_budget_csv(rows, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "broadening_kHz", "infidelity_pct", "stderr_pct"])
        for r in rows:
            inf = "" if r.infidelity is None else f"{100 * r.infidelity:.4f}"
            err = "" if r.std_error is None else f"{100 * r.std_error:.4f}"
            w.writerow([r.label, f"{r.broadening / 1e3:.4f}", inf, err])
