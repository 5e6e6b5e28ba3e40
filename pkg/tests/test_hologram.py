import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planeaddr.core import DomainError
from planeaddr.fields import ArrayGeometry
from planeaddr.hologram import (
    OpticsParams,
    SiteWeights,
    SlmGrid,
    elementary_phase,
    homogenize,
    homogenize_loop,
    phase_to_uint16,
    propagate,
    read_pgm,
    site_intensities,
    superpose,
    verify_spots,
    write_mask_csv,
    write_mask_pgm,
    write_spot_csv,
)

OPT = OpticsParams()
SMALL = SlmGrid(width=256, height=256)


def test_focal_pixel():
    px, py = SlmGrid().focal_pixel_um(OPT)
    # lambda f / (M N pitch) = 532e-9 * 0.02 / (5/3 * 1024 * 12.5e-6)
    assert math.isclose(px, 0.49875, rel_tol=1e-12) and px == py


def test_origin_site_gives_flat_mask():
    assert np.all(elementary_phase((0, 0, 0), SMALL, OPT) == 0.0)


def test_fresnel_term_by_hand():
    xs, ys = SMALL.coords()
    ph = elementary_phase((0, 0, 12.0), SMALL, OPT)
    q = math.pi * OPT.magnification ** 2 * 12e-6 / (532e-9 * 0.02 * 0.02)
    assert math.isclose(ph[0, 5], q * (ys[0] ** 2 + xs[5] ** 2), rel_tol=1e-12)


def test_flat_mask_focuses_on_axis():
    plane = propagate(SMALL.with_phases(np.zeros((256, 256))), 0.0, OPT)
    assert np.unravel_index(np.argmax(plane.intensity), plane.intensity.shape) == (128, 128)
    assert math.isclose(plane.intensity[128, 128], 1.0, rel_tol=1e-12)
    rep = verify_spots(plane, [(0.0, 0.0, 0.0)], 2.5)
    assert rep.n_found == 1 and rep.offsets([(0.0, 0.0)])[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(-60, 60), st.integers(-60, 60))
def test_lateral_shift_places_spot(ix, iy):
    # Fourier shift theorem: a grating to an integer pixel puts all power there
    px, py = SMALL.focal_pixel_um(OPT)
    site = (ix * px, iy * py, 0.0)
    plane = propagate(SMALL.with_phases(elementary_phase(site, SMALL, OPT)), 0.0, OPT)
    r, c = np.unravel_index(np.argmax(plane.intensity), plane.intensity.shape)
    assert (r - 128, c - 128) == (iy, ix)
    assert plane.intensity[r, c] > 0.99


@settings(max_examples=10, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_rigid_translation_moves_every_spot(dx, dy):
    sites = np.array([[-8.0, 0, 0], [8.0, 4.0, 0], [0.0, -10.0, 0]])
    px = SMALL.focal_pixel_um(OPT)[0]
    shift = np.array([dx, dy, 0.0])
    for s in (sites, sites + shift):
        rep = verify_spots(propagate(superpose(s, None, SMALL, OPT, seed=2), 0.0, OPT), s, 1.5 * px)
        assert rep.n_found == 3
        assert np.all(rep.offsets(s) <= 1.0 * math.sqrt(2) * px)


def test_defocus_term_refocuses_axial_site():
    mask = SMALL.with_phases(elementary_phase((0, 0, 20.0), SMALL, OPT))
    at = propagate(mask, 20.0, OPT).intensity.max()
    off = propagate(mask, 0.0, OPT).intensity.max()
    assert at > 0.99 and off < 0.5 * at


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_propagation_conserves_power(seed):
    rng = np.random.default_rng(seed)
    mask = SlmGrid(width=64, height=48).with_phases(rng.uniform(0, 7, (48, 64)))
    assert math.isclose(propagate(mask, 3.0, OPT).intensity.sum(), 1.0, rel_tol=1e-10)


def test_reference_geometry_all_spots_found():
    grid, sites = SlmGrid(), ArrayGeometry.cuboid(4, 4, 3, 10.0, 30.0).sites
    mask = superpose(sites, None, grid, OPT, seed=1)
    found = 0
    for z in (-30.0, 0.0, 30.0):
        s = sites[sites[:, 2] == z]
        rep = verify_spots(propagate(mask, z, OPT), s, 1.0)
        found += rep.n_found
        assert np.nanmax(rep.offsets(s)) < 0.5
    assert found == 48


def test_two_spots_uniform_before_feedback():
    two = np.array([[-10.0, 0, 0], [10.0, 0, 0]])
    rep = verify_spots(propagate(superpose(two, None, SlmGrid(), OPT), 0.0, OPT), two, 1.0)
    assert rep.n_found == 2 and rep.uniformity < 0.25


def test_homogenize_fixed_point_and_norm():
    w = SiteWeights.uniform(4)
    same = homogenize(w, np.full(4, 0.2))
    np.testing.assert_allclose(same.values, w.values)
    upd = homogenize(SiteWeights(np.array([1.0, 1.0])), np.array([1.0, 4.0]), gamma=0.5)
    assert math.isclose(np.sum(np.abs(upd.values) ** 2), 1.0)
    # dimmer site gains amplitude: ratio (4/1) ** 0.5
    assert math.isclose(upd.amplitudes[0] / upd.amplitudes[1], 2.0)
    with pytest.raises(DomainError):
        homogenize(w, np.array([1.0, 0.0, 1.0, 1.0]))


def test_homogenize_loop_improves_uniformity():
    sq = np.array([[-5.0, -5, 0], [5, -5, 0], [-5, 5, 0], [5, 5, 0]])
    w0 = SiteWeights(np.array([1.0, 0.5, 0.8, 0.6]))
    mask, w, hist = homogenize_loop(sq, SMALL, OPT, iterations=4, weights=w0)
    assert len(hist) == 5
    assert np.all(np.diff(hist) < 0) and hist[-1] < 0.05
    I = site_intensities(mask, sq, OPT)
    assert math.isclose((I.max() - I.min()) / (I.max() + I.min()), hist[-1])


def test_tolerance_below_pixel_rejected():
    plane = propagate(SMALL.with_phases(np.zeros((256, 256))), 0.0, OPT)
    with pytest.raises(DomainError):
        verify_spots(plane, [(0, 0, 0)], 0.1)


def test_invalid_inputs():
    with pytest.raises(DomainError):
        SlmGrid(width=4, height=4, phases=np.zeros((3, 4)))
    with pytest.raises(DomainError):
        SiteWeights(np.zeros(3))
    with pytest.raises(DomainError):
        superpose([(0, 0, 0)], SiteWeights.uniform(2), SMALL, OPT)
    with pytest.raises(DomainError):
        OpticsParams(wavelength_nm=0.0)


def test_phase_wrapping():
    g = SlmGrid(width=3, height=1, phases=np.array([[-0.5, 2 * np.pi, 7.0]]))
    assert np.all((g.phases >= 0) & (g.phases < 2 * np.pi))
    np.testing.assert_allclose(g.phases, [[2 * np.pi - 0.5, 0.0, 7.0 - 2 * np.pi]])


def test_uint16_quantisation():
    q = phase_to_uint16(np.array([0.0, np.pi, 2 * np.pi - 1e-12]))
    np.testing.assert_array_equal(q, [0, 32768, 65535])


def test_mask_files(tmp_path):
    mask = superpose([(3.0, 1.0, 0.0)], None, SlmGrid(width=40, height=30), OPT)
    write_mask_pgm(mask, tmp_path / "m.pgm")
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n40 30\n65535\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "m.pgm"), phase_to_uint16(mask.phases))
    write_mask_csv(mask, tmp_path / "m.csv")
    back = np.loadtxt(tmp_path / "m.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(back, mask.phases, atol=1e-9)


def test_spot_csv(tmp_path):
    plane = propagate(SMALL.with_phases(np.zeros((256, 256))), 0.0, OPT)
    exp = [(0.0, 0.0, 0.0), (20.0, 0.0, 0.0)]
    rep = verify_spots(plane, exp, 2.5)
    write_spot_csv(rep, exp, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("site,x_um")
    assert lines[1].split(",")[4] == "1" and lines[2].split(",")[4] == "0"
