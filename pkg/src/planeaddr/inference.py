"""Measurement corrections and fit models for shelving experiments.

Raw fractions from the imaging sequences are corrected for imaging survival
``P_s``:

- excitation: ``B = P_s (1 - P_exc) + A``, hence ``P_exc = 1 - (B - A) / P_s``
- leakage: ``C = P_s P_exc f`` and ``A = P_s P_exc (P_r + (1 - P_r) f)``, hence
  ``P_r = (A - C) / (P_s P_exc - C)``
- initialization: ``P_1 = E / D`` with ``D = P_s (1 - P_loss)``

Errors are first-order (delta-method) propagations of independent inputs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lombscargle
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import DegenerateInputError, DomainError, NumericalFailure, PlaneAddrError, to_angular


class FitFailure(PlaneAddrError, RuntimeError):
    """No start point converged; ``residuals`` holds the best attempt."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class Estimate(NamedTuple):
    value: float
    error: float
    out_of_range: bool


def _estimate(value, grads, errs, hi=1.0):
    var = math.fsum((g * e) ** 2 for g, e in zip(grads, errs))
    return Estimate(float(value), math.sqrt(var), not (0.0 <= value <= hi))


def _check_fraction(name, v):
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {v}")


def excitation_fidelity(A, B, P_s, sA=0.0, sB=0.0, sP_s=0.0) -> Estimate:
    """Survival-corrected excitation fraction ``1 - (B - A) / P_s``."""
    _check_fraction("A", A)
    _check_fraction("B", B)
    if not P_s > 0:
        raise DomainError("survival probability must be positive")
    val = 1.0 - (B - A) / P_s
    grads = (1.0 / P_s, -1.0 / P_s, (B - A) / P_s ** 2)
    return _estimate(val, grads, (sA, sB, sP_s))


def survival_fraction(A, P_s, P_exc):
    """Forward model for ``B`` given the excitation fraction."""
    return P_s * (1.0 - P_exc) + A


def repump_fidelity(A, C, P_s, P_exc, sA=0.0, sC=0.0, sP_s=0.0, sP_exc=0.0, atol=1e-12) -> Estimate:
    """Repumping fidelity ``(A - C) / (P_s P_exc - C)``."""
    _check_fraction("A", A)
    _check_fraction("C", C)
    den = P_s * P_exc - C
    if abs(den) <= atol:
        raise DegenerateInputError("P_s * P_exc equals C; repump fidelity undefined")
    num = A - C
    val = num / den
    grads = (
        1.0 / den,
        (num - den) / den ** 2,
        -num * P_exc / den ** 2,
        -num * P_s / den ** 2,
    )
    return _estimate(val, grads, (sA, sC, sP_s, sP_exc))


def repump_forward(P_s, P_exc, P_r, leak):
    """Forward model ``(A, C)`` for repump fidelity ``P_r`` and leakage fraction ``leak``."""
    C = P_s * P_exc * leak
    A = P_s * P_exc * (P_r + (1.0 - P_r) * leak)
    return A, C


def init_population(E, D, sE=0.0, sD=0.0) -> Estimate:
    """Loss-corrected population ``E / D``."""
    _check_fraction("E", E)
    if not D > 0:
        raise DomainError("D must be positive")
    return _estimate(E / D, (1.0 / D, -E / D ** 2), (sE, sD))


def bootstrap(estimator, values, errors, n_boot: int = 2000, seed: int = 0) -> Estimate:
    """Parametric bootstrap of a correction formula for small samples.

    Each input is redrawn from a normal distribution with its standard error,
    clipped to [0, 1]; ``estimator`` is one of the functions above called
    positionally with the drawn values. The error is the spread of the draws.
    """
    values = np.asarray(values, dtype=float)
    errors = np.broadcast_to(np.asarray(errors, dtype=float), values.shape)
    if n_boot < 2:
        raise DomainError("need at least two bootstrap draws")
    rng = np.random.default_rng(seed)
    draws = np.clip(values + errors * rng.standard_normal((n_boot, values.size)), 0.0, 1.0)
    out = []
    for row in draws:
        try:
            out.append(estimator(*row).value)
        except (DomainError, DegenerateInputError):
            continue
    if len(out) < 2:
        raise DegenerateInputError("too few valid bootstrap draws")
    central = estimator(*values).value
    return Estimate(central, float(np.std(out, ddof=1)), not 0.0 <= central <= 1.0)


# -- shelved Rabi oscillation -------------------------------------------------


@dataclass(frozen=True)
class ShelvedRabiParams:
    P_s: float
    P_exc: float
    P_r: float
    rabi: float  # Hz
    phase: float = 0.0

    def __post_init__(self):
        for name in ("P_s", "P_exc", "P_r"):
            _check_fraction(name, getattr(self, name))
        if not self.rabi > 0:
            raise DomainError("Rabi frequency must be positive")


def shelved_rabi_model(t, p: ShelvedRabiParams):
    """Ground-state signal ``P_s P_exc P_r + P_s (1 - P_exc)(1 + sin(2 pi rabi t + phase)) / 2``."""
    t = np.asarray(t, dtype=float)
    return _model(t, p.P_s, p.P_r, p.P_exc, p.rabi, p.phase)


def _model(t, P_s, P_r, P_exc, rabi, phase):
    return P_s * P_exc * P_r + 0.5 * P_s * (1.0 - P_exc) * (1.0 + np.sin(to_angular(rabi) * t + phase))


@dataclass(frozen=True)
class ShelvedRabiFit:
    params: ShelvedRabiParams
    errors: dict
    covariance: np.ndarray  # order (P_exc, rabi, phase)
    chi2: float
    dof: int
    rabi_unconstrained: bool

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")


def _rabi_guess(t, y, w):
    span = t.max() - t.min()
    if span <= 0:
        raise DegenerateInputError("time points must span a nonzero interval")
    n = t.size
    freqs = np.linspace(0.5 / span, 0.5 * n / span, 4 * n)
    yc = y - np.average(y, weights=w)
    if not np.any(np.abs(yc) > 0):
        return freqs[:1]
    power = lombscargle(t, yc, to_angular(freqs))
    order = np.argsort(power)[::-1]
    return freqs[order[:2]]


def fit_shelved_rabi(t, y, sigma=None, *, P_s, P_r, rabi_guess=None, tol=1e-12) -> ShelvedRabiFit:
    """Weighted least squares for ``(P_exc, rabi, phase)`` with ``P_s``, ``P_r`` fixed.

    Starts from phases ``0, pi/2, pi, 3 pi/2`` and the strongest periodogram
    frequencies (or ``rabi_guess``); the lowest chi-square wins.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if t.shape != y.shape or t.ndim != 1:
        raise DomainError("t and y must be 1-D arrays of equal length")
    if t.size < 5:
        raise DegenerateInputError("need at least 5 points")
    if np.any(~(sigma > 0)):
        raise DomainError("sigma must be positive")
    _check_fraction("P_s", P_s)
    _check_fraction("P_r", P_r)
    w = 1.0 / sigma ** 2
    rabis = np.atleast_1d(rabi_guess) if rabi_guess is not None else _rabi_guess(t, y, w)

    def resid(x):
        return (_model(t, P_s, P_r, x[0], x[1], x[2]) - y) / sigma

    amp = np.ptp(y)
    p0 = float(np.clip(1.0 - amp / max(P_s, 1e-12), 0.0, 1.0))
    best = None
    for rabi0 in rabis:
        for ph0 in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
            try:
                r = least_squares(
                    resid, [p0, rabi0, ph0],
                    bounds=([0.0, 1e-12 * rabi0, -np.inf], [1.0, np.inf, np.inf]),
                    xtol=tol, ftol=tol, gtol=tol, max_nfev=2000, x_scale="jac",
                )
            except (ValueError, np.linalg.LinAlgError):
                continue
            if not np.all(np.isfinite(r.x)):
                continue
            if best is None or r.cost < best.cost:
                best = r
    if best is None or best.status <= 0:
        raise FitFailure("shelved-Rabi fit did not converge from any start", None if best is None else best.fun)
    P_exc, rabi, phase = best.x
    phase = float(np.mod(phase, 2 * np.pi))
    J = best.jac
    JTJ = J.T @ J
    unconstrained = False
    try:
        cond = np.linalg.cond(JTJ)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        cov = np.linalg.pinv(JTJ)
        cov[1, :] = cov[:, 1] = np.nan
        cov[1, 1] = np.inf
        unconstrained = True
    else:
        cov = np.linalg.inv(JTJ)
    errs = {k: float(np.sqrt(cov[i, i])) if np.isfinite(cov[i, i]) else float("inf")
            for i, k in enumerate(("P_exc", "rabi", "phase"))}
    if errs["rabi"] > rabi:
        unconstrained = True
    params = ShelvedRabiParams(P_s, float(np.clip(P_exc, 0, 1)), P_r, float(rabi), phase)
    return ShelvedRabiFit(params, errs, cov, float(2 * best.cost), t.size - 3, unconstrained)


# -- randomized benchmarking -------------------------------------------------


class RBFit(NamedTuple):
    p: float
    A0: float
    fidelity: float
    p_error: float
    A0_error: float
    fidelity_error: float


def rb_model(depths, A0, p):
    return A0 * (np.power(p, np.asarray(depths, dtype=float)) + 0.5)


def rb_decay_fit(depths, survivals, sigma=None) -> RBFit:
    """Fit ``A0 (p**m + 0.5)`` with ``0 <= p <= 1``; average fidelity ``(p + 1) / 2``."""
    m = np.asarray(depths, dtype=float)
    y = np.asarray(survivals, dtype=float)
    if m.shape != y.shape or m.ndim != 1:
        raise DomainError("depths and survivals must be 1-D arrays of equal length")
    if np.unique(m).size < 3:
        raise DegenerateInputError("need at least 3 distinct sequence depths")
    if np.any(m < 0):
        raise DomainError("depths must be >= 0")
    unknown_sigma = sigma is None
    sigma = np.ones_like(y) if unknown_sigma else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)

    def resid(x):
        return (rb_model(m, x[0], x[1]) - y) / sigma

    A0_guess = max(y[np.argmin(m)] / 1.5, 1e-6)
    r = least_squares(resid, [A0_guess, 0.99], bounds=([0.0, 0.0], [np.inf, 1.0]), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if r.status <= 0:
        raise FitFailure("RB fit did not converge", r.fun)
    A0, p = r.x
    J = r.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular RB Jacobian") from exc
    if unknown_sigma:
        dof = max(m.size - 2, 1)
        cov = cov * (2 * r.cost / dof)  # scale by residual variance when sigma is unknown
    sA, sp = np.sqrt(np.diag(cov))
    return RBFit(float(p), float(A0), float((p + 1) / 2), float(sp), float(sA), float(sp / 2))


# -- optical pumping ----------------------------------------------------------


def pumping_markov(p_exc: float, branch_to_1: float = 0.5, p_loss_per_cycle: float = 0.0, n_cycles: int = 20):
    """Population of the dark state and survival after ``n_cycles`` pump cycles."""
    for name, v in (("p_exc", p_exc), ("branch_to_1", branch_to_1), ("p_loss_per_cycle", p_loss_per_cycle)):
        _check_fraction(name, v)
    if int(n_cycles) != n_cycles or n_cycles < 0:
        raise DomainError("number of cycles must be a non-negative integer")
    P1 = 1.0 - (1.0 - p_exc * branch_to_1) ** n_cycles
    survival = (1.0 - p_loss_per_cycle) ** n_cycles
    return float(P1), float(survival)


# -- scikit-learn estimators ----------------------------------------------------


class ShelvedRabiRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_shelved_rabi`; ``X`` is a single time column (s).

    ``sample_weight`` is interpreted as ``1 / sigma**2``.
    """

    def __init__(self, P_s=1.0, P_r=1.0, rabi_guess=None):
        self.P_s = P_s
        self.P_r = P_r
        self.rabi_guess = rabi_guess

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise DomainError("X must have exactly one column (time)")
        sigma = None if sample_weight is None else 1.0 / np.sqrt(np.asarray(sample_weight, dtype=float))
        self.result_ = fit_shelved_rabi(X[:, 0], y, sigma, P_s=self.P_s, P_r=self.P_r, rabi_guess=self.rabi_guess)
        self.params_ = self.result_.params
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        return shelved_rabi_model(X[:, 0], self.params_)


class RBDecayRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`rb_decay_fit`; ``X`` is a single depth column."""

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise DomainError("X must have exactly one column (depth)")
        sigma = None if sample_weight is None else 1.0 / np.sqrt(np.asarray(sample_weight, dtype=float))
        self.result_ = rb_decay_fit(X[:, 0], y, sigma)
        self.p_, self.A0_, self.fidelity_ = self.result_.p, self.result_.A0, self.result_.fidelity
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "p_")
        X = check_array(X)
        return rb_model(X[:, 0], self.A0_, self.p_)


# -- I/O --------------------------------------------------------------------------


def read_xy_csv(path):
    """Read ``t_or_depth, value, sigma`` columns (header row required)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise DomainError("data CSV needs at least two columns")
    sigma = data[:, 2] if data.shape[1] > 2 else None
    return data[:, 0], data[:, 1], sigma


def write_fit_csv(rows, path):
    """Write ``(parameter, value, error)`` rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "value", "error"])
        for name, val, err in rows:
            w.writerow([name, repr(float(val)), repr(float(err))])
