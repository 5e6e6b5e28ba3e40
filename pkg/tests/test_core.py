import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planeaddr.core import (
    DomainError,
    TrapParams,
    TruncationWarning,
    fwhm_to_sigma,
    sigma_to_fwhm,
    thermal_weights,
    to_angular,
)


def test_ground_state_only_at_zero_temperature():
    w = thermal_weights(0.0, 10)
    assert w[0] == 1.0 and np.all(w[1:] == 0.0)


def test_two_level_geometric_weights():
    # ratio n/(n+1) = 1/2, renormalised over two levels by hand
    np.testing.assert_allclose(thermal_weights(1.0, 1, warn=False), [2 / 3, 1 / 3], rtol=0, atol=1e-15)


def test_mean_phonon_of_truncated_ensemble():
    w = thermal_weights(0.59, 10, warn=False)
    assert abs(np.dot(np.arange(11), w) - 0.59) <= 0.01


def test_truncation_warning_emitted():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        thermal_weights(3.0, 10)
    assert any(issubclass(w.category, TruncationWarning) for w in caught)
    # top-level weight at n = 0.59, N' = 10 is about 3e-5, below the threshold
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        thermal_weights(0.59, 10)


def test_negative_mean_phonon_rejected():
    with pytest.raises(DomainError):
        thermal_weights(-0.1, 10)
    with pytest.raises(DomainError):
        TrapParams(mean_phonon=-1)
    with pytest.raises(DomainError):
        TrapParams(fock_dim=0)


def test_mean_converges_monotonically_with_cutoff():
    errs = [abs(np.dot(np.arange(n + 1), thermal_weights(0.59, n, warn=False)) - 0.59) for n in (10, 50, 200)]
    assert errs[0] > errs[1] >= errs[2]
    assert errs[2] < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 20.0), st.integers(1, 80))
def test_thermal_weights_invariants(nbar, n):
    w = thermal_weights(nbar, n, warn=False)
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all((w >= 0) & (w <= 1))
    assert np.all(np.diff(w) <= 1e-15)
    np.testing.assert_array_equal(w, thermal_weights(nbar, n, warn=False))


def test_fwhm_to_sigma_values():
    assert fwhm_to_sigma(0.0) == 0.0
    assert abs(fwhm_to_sigma(2.3548) - 1.0) < 1e-4
    assert abs(fwhm_to_sigma(53.1e3) - 22.55e3) < 5.0
    with pytest.raises(DomainError):
        fwhm_to_sigma(-1.0)


@given(st.floats(1e-9, 1e9))
def test_fwhm_sigma_round_trip(x):
    assert math.isclose(sigma_to_fwhm(fwhm_to_sigma(x)), x, rel_tol=1e-12)


def test_angular_conversion():
    assert to_angular(1.0) == 2 * math.pi


def test_trap_replace_is_new_instance():
    t = TrapParams()
    u = t.replace(mean_phonon=0.2)
    assert t.mean_phonon == 0.59 and u.mean_phonon == 0.2 and u.n_motional == 11
