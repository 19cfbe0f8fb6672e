import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cspat.phantom import (
    DetectorGeometry,
    Disc,
    ImageGrid,
    Phantom,
    Sinogram,
    circle_quadrature_oracle,
    disc_phantom,
    forward_sinogram,
    random_phantom,
    rasterize,
    spherical_mean_disc,
)

from _oracles import midpoint_circle_mean

UNIT = Disc((0.0, 0.0), 0.5, 1.0)


@pytest.mark.parametrize("r, expected", [(0.3, 0.0), (1.5, 0.0), (0.0, 0.0)])
def test_spherical_mean_outside_regimes(r, expected):
    assert spherical_mean_disc(UNIT, (1.0, 0.0), r) == expected


def test_spherical_mean_partial_arc_matches_midpoint_rule():
    closed = spherical_mean_disc(UNIT, (1.0, 0.0), 1.0)
    assert closed == pytest.approx(np.arccos(0.875) / np.pi, abs=1e-15)
    assert closed == pytest.approx(0.16086, abs=5e-6)
    oracle = midpoint_circle_mean(UNIT.contains, np.array([1.0, 0.0]), 1.0)
    assert abs(closed - oracle) < 1e-5


def test_spherical_mean_circle_inside_disc():
    disc = Disc((0.1, 0.0), 0.6, 2.5)
    assert spherical_mean_disc(disc, (0.0, 0.0), 0.3) == 2.5


def test_spherical_mean_centre_guard():
    disc = Disc((0.0, 0.0), 0.4)
    np.testing.assert_array_equal(spherical_mean_disc(disc, (0.0, 0.0), [0.2, 0.4, 0.6]),
                                  [1.0, 0.0, 0.0])


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        spherical_mean_disc(UNIT, (1.0, 0.0), -0.1)


def _boundary_jump(disc, z, b, delta):
    lo, hi = spherical_mean_disc(disc, z, [max(b - delta, 0.0), b + delta])
    return abs(lo - hi)


@settings(max_examples=200, deadline=None)
@given(
    cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5), a=st.floats(0.05, 0.4),
    phi=st.floats(0, 2 * np.pi),
)
def test_continuity_across_regime_boundaries(cx, cy, a, phi):
    # the arc fraction leaves 0 like sqrt(2 c delta) / pi at tangency, with
    # c = a / (d (d -+ a)); continuity means the jump obeys that modulus
    disc = Disc((cx, cy), a)
    z = (np.cos(phi), np.sin(phi))
    d = np.hypot(z[0] - cx, z[1] - cy)
    for b, c in ((d - a, a / (d * (d - a))), (d + a, a / (d * (d + a)))):
        for delta in (1e-9, 1e-12):
            bound = 1.5 * np.sqrt(2 * c * 2 * delta) / np.pi + 1e-12
            assert _boundary_jump(disc, z, b, delta) <= bound


@pytest.mark.xfail(strict=True, reason="square-root onset at tangency: the jump at "
                   "+-1e-9 is ~1e-5 for the exact closed form")
def test_continuity_literal_tolerance():
    disc = Disc((0.0, 0.0), 0.25)
    assert _boundary_jump(disc, (1.0, 0.0), 0.75, 1e-9) < 1e-6


@settings(max_examples=200, deadline=None)
@given(
    cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5), a=st.floats(0.01, 0.4),
    phi=st.floats(0, 2 * np.pi), r=st.floats(0, 2),
)
def test_mean_is_a_fraction_of_the_amplitude(cx, cy, a, phi, r):
    v = spherical_mean_disc(Disc((cx, cy), a, 3.0), (np.cos(phi), np.sin(phi)), r)
    assert 0.0 <= v <= 3.0


def test_disc_must_be_interior():
    with pytest.raises(ValueError):
        Phantom((Disc((0.8, 0.0), 0.3),), 1.0)
    with pytest.raises(ValueError):
        Disc((0.0, 0.0), 0.0)


def test_geometry_positions_and_grid():
    g = DetectorGeometry(4, 5, 2.0)
    np.testing.assert_allclose(g.positions, [[2, 0], [0, 2], [-2, 0], [0, -2]], atol=1e-15)
    np.testing.assert_allclose(g.radii, [0, 1, 2, 3, 4])
    assert g.spacing == 1.0
    np.testing.assert_allclose(g.angular_weights.sum(), 1.0)


def test_arc_geometry_weights():
    g = DetectorGeometry(5, 8, 1.0, arc=(0.0, np.pi / 2))
    np.testing.assert_allclose(g.angles, np.linspace(0, np.pi / 2, 5))
    np.testing.assert_allclose(g.angular_weights, (np.pi / 8) / (2 * np.pi))


def test_subsample_full_circle():
    g = DetectorGeometry(200, 16)
    sub, idx = g.subsample(100)
    np.testing.assert_array_equal(idx, np.arange(0, 200, 2))
    np.testing.assert_allclose(sub.positions, g.positions[idx], atol=1e-15)
    with pytest.raises(ValueError):
        g.subsample(30)


def test_empty_phantom_gives_zero_sinogram_and_image():
    ph = Phantom((), 1.0)
    s = forward_sinogram(ph, DetectorGeometry(8, 32))
    assert not s.values.any()
    assert not rasterize(ph, 16).values.any()


def test_forward_is_linear_in_amplitude():
    g = DetectorGeometry(16, 64)
    ph = disc_phantom()
    np.testing.assert_array_equal(forward_sinogram(ph.scaled(2.0), g).values,
                                  2.0 * forward_sinogram(ph, g).values)


def test_forward_vanishes_at_zero_and_beyond_support():
    g = DetectorGeometry(32, 256)
    rng = np.random.default_rng(3)
    ph = random_phantom(rng, 4)
    s = forward_sinogram(ph, g)
    np.testing.assert_array_equal(s.values[:, 0], 0.0)
    for j, z in enumerate(g.positions):
        reach = max(np.hypot(*(z - np.array(d.center))) + d.radius for d in ph.discs)
        assert not s.values[j, g.radii >= reach].any()


def test_forward_matches_quadrature_oracle_disc_configuration():
    g = DetectorGeometry(200, 512)
    ph = disc_phantom()
    s = forward_sinogram(ph, g)
    rows = np.arange(0, 200, 10)
    oracle = np.stack([circle_quadrature_oracle(ph, g.positions[j], g.radii) for j in rows])
    err = np.linalg.norm(s.values[rows] - oracle) / np.linalg.norm(oracle)
    assert err < 1e-6


def test_rasterize_pixels():
    ph = Phantom((Disc((0.0, 0.0), 0.3), Disc((0.1, 0.0), 0.3)), 1.0)
    img = rasterize(ph, 20)
    x, y = img.mesh()
    k = np.unravel_index(np.argmin((x - 0.05) ** 2 + y**2), x.shape)
    assert img.values[k] == 2.0
    assert rasterize(disc_phantom(), 2).values.shape == (2, 2)
    centers = ImageGrid.pixel_centers(4, 1.0)
    np.testing.assert_allclose(centers, [-0.75, -0.25, 0.25, 0.75])


def test_rasterize_disc_centre_is_one():
    ph = Phantom((Disc((0.0, 0.0), 0.25),), 1.0)
    img = rasterize(ph, 257)  # odd n puts a pixel centre at the origin
    assert img.values[128, 128] == 1.0


def test_sinogram_validation():
    g = DetectorGeometry(4, 8)
    with pytest.raises(ValueError):
        Sinogram(g, np.zeros((4, 7)))
    with pytest.raises(ValueError):
        Sinogram(g, np.full((4, 8), np.nan))
    with pytest.raises(ValueError):
        Sinogram(g, np.zeros((4, 8)), kind="bogus")
