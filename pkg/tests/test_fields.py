import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planeaddr.core import DomainError
from planeaddr.fields import (
    ArrayGeometry,
    FieldConfig,
    field_magnitude,
    gauss_to_hz_fwhm,
    inhomogeneity_fwhm,
    plane_inhomogeneity,
    plane_sensitivity,
    ripple_broadening,
    site_detuning_map,
    zeeman_shift,
)


def test_plane_sensitivity_value():
    assert abs(plane_sensitivity(20.5, 1.5) - 7687.5) <= 0.5
    assert plane_sensitivity(0.0, 1.5) == 0.0
    with pytest.raises(DomainError):
        plane_sensitivity(-1.0, 1.5)


def test_field_at_quadrupole_zero_is_bias():
    cfg = FieldConfig(bias_z=0.9, gradient=20.5, array_offset_um=(10.0, -5.0, 1200.0))
    assert math.isclose(field_magnitude(-np.array(cfg.array_offset_um), cfg), 0.9, rel_tol=1e-14)


def test_field_components_by_hand():
    cfg = FieldConfig(bias_z=1.0, gradient=100.0, array_offset_um=(0.0, 0.0, 0.0))
    b = 100.0 * 1e-4
    p = np.array([30.0, -40.0, 50.0])
    expected = math.sqrt((b * 15) ** 2 + (b * 20) ** 2 + (b * 50 + 1) ** 2)
    assert math.isclose(field_magnitude(p, cfg), expected, rel_tol=1e-14)


def test_default_field_at_array_centre():
    assert abs(field_magnitude(np.zeros(3), FieldConfig()) - 3.36) < 1e-9


def test_plane_separation_matches_sensitivity():
    # with a large bias the axial field is linear, so plane shifts step by S * dz
    geom = ArrayGeometry.cuboid(1, 1, 5, 0.0, 3.0)
    cfg = FieldConfig(bias_z=500.0, gradient=300.0, array_offset_um=(0.0, 0.0, 0.0))
    shifts = site_detuning_map(geom, cfg, 1.5)
    np.testing.assert_allclose(np.diff(shifts), 3.0 * plane_sensitivity(300.0, 1.5), rtol=1e-12)


def test_zeeman_shift_linear():
    cfg = FieldConfig()
    assert zeeman_shift(2.0, 1.5, cfg) == 2 * zeeman_shift(1.0, 1.5, cfg) == 7.5e6
    with pytest.raises(DomainError):
        zeeman_shift(-1.0, 1.5, cfg)


def _transverse_oracle(geom, cfg, m_F):
    # |B| ~ Bz + (b/2)^2 r^2 / (2 Bz) for a strong axial component
    b = cfg.gradient * 1e-4
    p = geom.sites + np.array(cfg.array_offset_um)
    bz = b * p[:, 2] + cfg.bias_z
    approx = bz + (0.5 * b) ** 2 * (p[:, 0] ** 2 + p[:, 1] ** 2) / (2 * bz)
    return m_F * cfg.zeeman_per_mF * approx


def test_inhomogeneity_against_paraxial_oracle():
    geom = ArrayGeometry.cuboid(4, 4, 3, 10.0, 30.0)
    cfg = FieldConfig()
    mid = geom.plane_indices(1)
    oracle = inhomogeneity_fwhm(_transverse_oracle(geom, cfg, 1.5)[mid])
    assert abs(plane_inhomogeneity(geom, cfg, 1.5) / oracle - 1) < 1e-3
    assert 150 < oracle < 250


def test_inhomogeneity_zero_without_transverse_extent():
    geom = ArrayGeometry.cuboid(1, 1, 3, 5.0, 10.0).translated((0, 0, 0))
    with pytest.raises(DomainError):
        plane_inhomogeneity(geom, FieldConfig(), 1.5)
    line = ArrayGeometry(np.array([[0, 0, 0.0], [0, 0, 0.0]]), np.array([0, 0]))
    assert plane_inhomogeneity(line, FieldConfig(), 1.5) == 0.0


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-1e3, 1e3),
    st.floats(-1e3, 1e3),
    st.floats(-1e3, 1e3),
    st.floats(0.0, 500.0),
    st.floats(0.0, 300.0),
)
def test_field_magnitude_properties(x, y, z, bias, grad):
    cfg = FieldConfig(bias_z=bias, gradient=grad, array_offset_um=(0.0, 0.0, 0.0))
    B = field_magnitude(np.array([x, y, z]), cfg)
    assert B >= 0
    # axial symmetry of the quadrupole
    assert math.isclose(B, field_magnitude(np.array([-x, y, z]), cfg), rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(B, field_magnitude(np.array([y, x, z]), cfg), rel_tol=1e-12, abs_tol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3).filter(lambda m: abs(m) > 1e-3))
def test_detuning_map_scales_with_mF(m):
    geom = ArrayGeometry.cuboid(3, 3, 2, 5.0, 10.0)
    cfg = FieldConfig()
    np.testing.assert_allclose(site_detuning_map(geom, cfg, m), m * site_detuning_map(geom, cfg, 1.0), rtol=1e-9, atol=1e-9)


def test_noise_conversions():
    assert math.isclose(gauss_to_hz_fwhm(1e-4, 1.5), 375.0)
    assert math.isclose(ripple_broadening(1e-5, 2.0, 1.5), 2 * math.sqrt(2 * math.log(2)) * 1e-5 * 2.0 * 1.5 * 2.5e6)
    with pytest.raises(DomainError):
        gauss_to_hz_fwhm(-1.0, 1.5)


def test_cuboid_layout():
    g = ArrayGeometry.cuboid(4, 3, 2, 5.0, 10.0)
    assert g.n_sites == 24 and g.n_planes == 2
    np.testing.assert_allclose(g.center, 0.0, atol=1e-12)
    assert np.all(g.sites[g.plane_indices(1), 2] == 5.0)


def test_planes_ranked_by_height():
    sites = np.array([[0, 0, 10.0], [0, 0, -10.0], [1, 0, 0.0]])
    g = ArrayGeometry(sites, np.array([7, 2, 5]))
    np.testing.assert_array_equal(g.plane_of, [2, 0, 1])


def test_geometry_csv_round_trip(tmp_path):
    g = ArrayGeometry.cuboid(2, 2, 3, 4.0, 3.0)
    g.to_csv(tmp_path / "g.csv")
    back = ArrayGeometry.from_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(back.sites, g.sites)
    np.testing.assert_array_equal(back.plane_of, g.plane_of)


def test_geometry_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("site_id,x_um,y_um,z_um,plane\n0,0,0,0,0\n0,1,0,0,0\n")
    with pytest.raises(DomainError):
        ArrayGeometry.from_csv(p)
    p.write_text("id,x,y,z\n0,0,0,0\n")
    with pytest.raises(DomainError):
        ArrayGeometry.from_csv(p)


def test_invalid_config():
    with pytest.raises(DomainError):
        FieldConfig(gradient=-1.0)
    with pytest.raises(DomainError):
        FieldConfig(array_offset_um=(0.0, 1.0))
    with pytest.raises(DomainError):
        ArrayGeometry.cuboid(0, 1, 1, 1.0, 1.0)


def test_ripple_for_both_candidate_fields():
    # the gradient field at the 1.2 mm offset gives about 65 kHz for a 0.3 % ripple
    at_offset = ripple_broadening(3e-3, 20.5 * 0.12, 1.5)
    assert abs(at_offset - 65.2e3) < 0.2e3
    # the coil-fluctuation row of the budget corresponds to about 1.94 G
    effective = 51.4e3 / ripple_broadening(3e-3, 1.0, 1.5)
    assert abs(effective - 1.94) < 0.01
    assert math.isclose(ripple_broadening(3e-3, effective, 1.5), 51.4e3)
