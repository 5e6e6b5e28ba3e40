import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planeaddr.core import DomainError, TrapParams
from planeaddr.crosstalk import (
    AddressingScenario,
    crosstalk_error,
    distance_sweep,
    reference_scenario,
    plane_spectra,
    plane_spectrum,
    target_frequency,
    threshold_crossing,
    write_sweep_csv,
)
from planeaddr.fields import ArrayGeometry, FieldConfig

BARE = TrapParams(lamb_dicke=0.0, mean_phonon=0.0, fock_dim=1)
STRONG = FieldConfig(bias_z=500.0, gradient=300.0, array_offset_um=(0.0, 0.0, 0.0))


def _column(dz, **kw):
    return AddressingScenario(ArrayGeometry.cuboid(1, 1, 3, 0.0, dz), STRONG, **kw)


def test_two_level_crosstalk_oracle():
    # noiseless two-level atoms: P = s / (1 + 2 s + (2 delta / gamma)^2)
    sc = _column(0.5, noise_G=0.0, rabi=2e3, gamma=1e3, trap=BARE)
    res = crosstalk_error(sc)
    delta = 0.5 * 2.5e6 * 1.5 * 300e-4
    s = (2e3 / 1e3) ** 2
    p = s / (1 + 2 * s + (2 * delta / 1e3) ** 2)
    np.testing.assert_allclose(res.per_plane, [p, 0.0, p], rtol=1e-9)
    assert math.isclose(res.total, 2 * p, rel_tol=1e-9)


def test_pulse_method_oracle():
    sc = _column(0.1, noise_G=0.0, rabi=5e3, trap=BARE)
    res = crosstalk_error(sc, method="pulse")
    delta = 0.1 * 2.5e6 * 1.5 * 300e-4
    g = math.hypot(5e3, delta)
    p = (5e3 / g) ** 2 * math.sin(math.pi * g / (2 * 5e3)) ** 2
    assert math.isclose(res.per_plane[0], p, rel_tol=1e-8)
    assert res.per_plane[1] == 0.0


def test_single_plane_has_no_crosstalk():
    sc = AddressingScenario(ArrayGeometry.cuboid(3, 3, 1, 4.0, 3.0), STRONG)
    assert crosstalk_error(sc).total == 0.0


def test_plane_peaks_separated_by_sensitivity_times_spacing():
    sc = reference_scenario(dz=3.0, nxy=2, nplanes=3)
    grid = np.arange(-500e3, 500e3, 100.0)
    peaks = [grid[np.argmax(tr.values)] for tr in plane_spectra(sc, grid)]
    assert np.allclose(np.diff(peaks), 337.5e3, atol=200.0)
    assert abs(peaks[1] - target_frequency(sc)) < 200.0


def test_interpolated_spectrum_matches_exact():
    sc = reference_scenario(dz=3.0, nxy=40, nplanes=3)
    fine = np.arange(-30e3, 30e3, 20.0)
    exact = plane_spectrum(sc, 1, fine)  # small enough to evaluate directly
    coarse = np.arange(-400e3, 400e3, 10.0)
    interp = plane_spectrum(sc, 1, coarse)
    assert interp.values.size * 40 * 40 > 4e6
    np.testing.assert_allclose(np.interp(fine, coarse, interp.values), exact.values, atol=2e-3 * exact.values.max())


def test_reference_scenario_below_threshold_at_3um():
    res = crosstalk_error(reference_scenario(3.0))
    assert res.total < 1e-3
    assert res.total_for("worst") >= res.total
    n = 40 * 40
    assert math.isclose(res.total_for("sum"), n * res.total, rel_tol=1e-9)
    with pytest.raises(DomainError):
        res.total_for("median")


def test_crosstalk_deterministic_across_workers():
    sc = reference_scenario(2.0, nxy=10)
    a, b = crosstalk_error(sc), crosstalk_error(sc, workers=4)
    np.testing.assert_array_equal(a.per_plane, b.per_plane)


@settings(max_examples=15, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(0.1, 3.0))
def test_carrier_crosstalk_decreases_with_plane_distance(dz, extra):
    # without sidebands the overlap can only fall as planes move apart
    near = crosstalk_error(_column(dz, trap=BARE)).total
    far = crosstalk_error(_column(dz + extra, trap=BARE)).total
    assert far < near


def test_crosstalk_bounds():
    res = crosstalk_error(reference_scenario(1.0, nxy=8))
    assert np.all(res.per_plane >= 0) and np.all(res.per_plane <= 1)
    assert res.per_plane[res.per_plane.size // 2] == 0.0


def test_threshold_crossing_log_linear():
    dz = np.array([1.0, 2.0, 3.0])
    assert math.isclose(threshold_crossing(dz, [1e-1, 1e-2, 1e-4], 1e-3), 2.5)
    assert threshold_crossing(dz, [1e-4, 1e-5, 1e-6]) == 1.0
    assert threshold_crossing(dz, [1e-1, 1e-2, 1e-2]) is None


def test_distance_sweep_rows(tmp_path):
    base = reference_scenario(3.0, nxy=4, nplanes=5)
    rows = distance_sweep(base, [2.0, 3.0, 4.0], noise_levels=[1e-4, 1e-3], sizes=[(2, 2), (4, 4)])
    assert len(rows) == 12
    assert {r.nx for r in rows} == {2, 4} and {r.nplanes for r in rows} == {5}
    write_sweep_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "dz_um,noise_G,nx,ny,nplanes,crosstalk_total"
    with pytest.raises(DomainError):
        distance_sweep(base, [3.0, 2.0])


def test_scenario_validation():
    g = ArrayGeometry.cuboid(1, 1, 3, 0.0, 3.0)
    with pytest.raises(DomainError):
        AddressingScenario(g, STRONG, rabi=0.0)
    with pytest.raises(DomainError):
        AddressingScenario(g, STRONG, target_plane=3)
    with pytest.raises(DomainError):
        crosstalk_error(AddressingScenario(g, STRONG), method="guess")
