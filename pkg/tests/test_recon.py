import numpy as np
import pytest

from cspat.phantom import (
    DetectorGeometry,
    ImageGrid,
    Sinogram,
    disc_phantom,
    forward_sinogram,
    random_phantom,
    rasterize,
)
from cspat.recon import backproject, compare, streak_energy
from cspat.transforms import apply_filter


def _full_data(phantom, N=200, N_r=512, n=256):
    geo = DetectorGeometry(N, N_r, phantom.detector_radius)
    filt = apply_filter("fbp_filter", forward_sinogram(phantom, geo))
    return backproject(filt, n), filt


@pytest.fixture(scope="module")
def disc_recon():
    return _full_data(disc_phantom())


def test_zero_sinogram_gives_zero_image():
    g = DetectorGeometry(16, 64)
    assert not backproject(Sinogram(g, np.zeros((16, 64)), "filtered"), 32).values.any()


def test_backproject_needs_filtered_data():
    g = DetectorGeometry(4, 16)
    with pytest.raises(ValueError):
        backproject(Sinogram(g, np.zeros((4, 16))), 8)


def test_backproject_is_linear():
    rng = np.random.default_rng(0)
    g = DetectorGeometry(24, 64)
    s1, s2 = rng.standard_normal((2, 24, 64))
    img = lambda v: backproject(Sinogram(g, v, "filtered"), 40).values  # noqa: E731
    np.testing.assert_allclose(img(s1 + s2), img(s1) + img(s2), atol=1e-12)


def test_pixels_outside_detector_disc_are_zero():
    g = DetectorGeometry(12, 64)
    img = backproject(Sinogram(g, np.ones((12, 64)), "filtered"), 32)
    x, y = img.mesh()
    assert not img.values[x * x + y * y >= 1].any()


def test_disc_phantom_full_data(disc_recon):
    img, _ = disc_recon
    x, y = img.mesh()
    k = np.argmin((x - 0.2) ** 2 + y**2)
    assert abs(img.values.flat[k] - 1.0) < 0.05
    m = compare(img, rasterize(disc_phantom(), 256))
    assert m.rmse < 0.05
    assert m.rel_l2 < 0.1


def _three_disc_error(seed, N=200, N_r=512):
    ph = random_phantom(np.random.default_rng(seed), 3)
    return compare(_full_data(ph, N, N_r)[0], rasterize(ph, 256)).rel_l2


def test_random_three_disc_phantom_full_data():
    assert _three_disc_error(0) < 0.1


def test_random_three_disc_error_is_discretisation_limited():
    # the worst of seeds 0..9: the error is angular streaking from sharp edges
    # and shrinks when detectors and radii are refined together
    errs = [_three_disc_error(8, N, 2 * N + 112) for N in (200, 400)]
    assert errs[1] < 0.8 * errs[0]
    assert errs[1] < 0.1


@pytest.mark.xfail(strict=True, reason="small discs with mixed signs leave angular streaks "
                   "above 0.1 relative error at N=200")
def test_every_random_three_disc_phantom_below_tolerance():
    assert max(_three_disc_error(seed) for seed in range(10)) < 0.1


def test_rotation_by_detector_step(disc_recon):
    N = 200
    ph = disc_phantom()
    _, filt = disc_recon
    geo = filt.geometry
    rot = forward_sinogram(ph.rotated(2 * np.pi / N), geo)
    base = forward_sinogram(ph, geo)
    np.testing.assert_allclose(rot.values, np.roll(base.values, 1, axis=0), atol=1e-12)
    # a quarter turn maps the pixel grid onto itself
    quarter = Sinogram(geo, np.roll(filt.values, N // 4, axis=0), "filtered")
    a = backproject(filt, 128).values
    b = backproject(quarter, 128).values
    assert min(np.abs(np.rot90(a, k) - b).max() for k in (1, -1)) < 1e-6
    # rotation-invariant comparison: the sorted pixel values (the histogram)
    np.testing.assert_allclose(np.sort(a, axis=None), np.sort(b, axis=None), atol=1e-6)


def test_full_data_error_does_not_grow_with_N():
    ph = disc_phantom()
    ref = rasterize(ph, 256)
    errs = [compare(_full_data(ph, N)[0], ref).rel_l2 for N in (50, 100, 200, 400)]
    for a, b in zip(errs, errs[1:]):
        assert b <= 1.05 * a


def test_compare_examples():
    rng = np.random.default_rng(1)
    ref = ImageGrid(rng.standard_normal((8, 8)))
    same = compare(ref, ref)
    assert same.to_dict() == {"rmse": 0.0, "rel_l2": 0.0, "rel_l1": 0.0, "max_abs": 0.0}
    assert compare(ImageGrid(2 * ref.values), ref).rel_l2 == pytest.approx(1.0)
    assert compare(ImageGrid(2 * ref.values), ref).rel_l1 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        compare(ref, ImageGrid(np.zeros((8, 8))))
    with pytest.raises(ValueError):
        compare(ref, ImageGrid(np.ones((4, 4))))


def test_streak_energy():
    n = 64
    assert streak_energy(ImageGrid(np.zeros((n, n))), 10) == 0.0
    img = ImageGrid(np.ones((n, n)))
    assert streak_energy(img, 10) < 1e-12
    x, y = img.mesh()
    phi = np.arctan2(y, x)
    striped = ImageGrid(np.cos(20 * phi))
    assert streak_energy(striped, 10) > 0.9
    assert streak_energy(striped, 60) < 0.1
