import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamfuse import preproc


# ---------------------------------------------------------------- min-max

def test_minmax_basic():
    assert np.allclose(preproc.minmax_normalize(np.array([0.0, 5.0, 10.0])),
                       [0.0, 0.5, 1.0])


def test_minmax_constant_is_zero():
    assert np.array_equal(preproc.minmax_normalize(np.full((3, 3), 7.0)),
                          np.zeros((3, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_minmax_range_and_idempotence(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 5)) * rng.uniform(0.1, 100)
    y = preproc.minmax_normalize(x)
    if np.ptp(x) > 0:
        assert np.isclose(y.min(), 0.0) and np.isclose(y.max(), 1.0)
        assert np.allclose(preproc.minmax_normalize(y), y, atol=1e-12)


# ---------------------------------------------------------------- radar

def _dft_peak_pos(freq: float, bins: int) -> int:
    return (int(round(freq * bins)) + bins // 2) % bins


def test_radar_maps_zero_cube():
    maps = preproc.radar_maps(np.zeros((4, 16, 8),
                                       dtype=np.complex64), 16, 16)
    assert maps.shape == (2, 16, 16)
    assert np.array_equal(maps, np.zeros_like(maps))


def test_radar_maps_point_target_peaks():
    m_r, s_r, a_r, g = 4, 32, 8, 32
    r_bin = 9
    m = np.arange(m_r)[:, None, None]
    s = np.arange(s_r)[None, :, None]
    cube = np.exp(2j * np.pi * (r_bin / s_r) * s) * np.ones((m_r, 1, a_r))
    _ = m  # zero inter-antenna and inter-chirp phase
    maps = preproc.radar_maps(cube, g, g)
    ra, rv = maps
    angle_peak, range_peak = np.unravel_index(ra.argmax(), ra.shape)
    assert angle_peak == g // 2        # boresight lands mid-axis
    assert range_peak == r_bin
    range_peak2, vel_peak = np.unravel_index(rv.argmax(), rv.shape)
    assert vel_peak == g // 2
    assert range_peak2 == r_bin


def test_radar_maps_oblique_target_matches_brute_force_dft():
    # independent oracle: direct O(N^2) DFT evaluation of one slice
    m_r, s_r, a_r, g = 4, 16, 4, 16
    rng = np.random.default_rng(0)
    cube = (rng.normal(size=(m_r, s_r, a_r))
            + 1j * rng.normal(size=(m_r, s_r, a_r)))
    maps = preproc.radar_maps(cube, g, g)

    brute = np.zeros((g, s_r))
    for a in range(a_r):
        for p in range(g):
            for q in range(s_r):
                acc = 0.0 + 0.0j
                for mm in range(m_r):
                    for ss in range(s_r):
                        acc += cube[mm, ss, a] * np.exp(
                            -2j * np.pi * (p * mm / g + q * ss / s_r))
                brute[p, q] += abs(acc)
    brute = np.fft.fftshift(brute, axes=0)
    brute = preproc.minmax_normalize(brute)
    assert np.abs(maps[0] - brute).max() < 1e-9


def test_radar_maps_nonnegative_and_phase_invariant():
    rng = np.random.default_rng(1)
    cube = (rng.normal(size=(4, 16, 8)) + 1j * rng.normal(size=(4, 16, 8)))
    maps = preproc.radar_maps(cube, 16, 16)
    assert (maps >= 0).all()
    rotated = preproc.radar_maps(cube * np.exp(1j * 1.234), 16, 16)
    assert np.abs(maps - rotated).max() < 1e-9


def test_radar_maps_validates_dims():
    cube = np.zeros((4, 16, 8), dtype=complex)
    with pytest.raises(ValueError):
        preproc.radar_maps(np.zeros((0, 4, 4), dtype=complex), 8, 8)
    with pytest.raises(ValueError):
        preproc.radar_maps(cube, 2, 16)   # fewer angle bins than antennas
    with pytest.raises(ValueError):
        preproc.radar_maps(cube, 16, 8)   # angle != velocity bins


# ---------------------------------------------------------------- BEV

def test_bev_empty_cloud():
    counts, dropped = preproc.lidar_bev(np.zeros((0, 3)), (8, 8),
                                        (-10, 10, 0, 20))
    assert np.array_equal(counts, np.zeros((8, 8)))
    assert dropped == 0


def test_bev_cap_at_five():
    pts = np.tile(np.array([[1.0, 1.0, 0.0]]), (7, 1))
    counts, _ = preproc.lidar_bev(pts, (4, 4), (0, 4, 0, 4))
    assert counts.max() == 5.0
    assert counts.sum() == 5.0


def test_bev_one_point_per_cell_sums():
    v, h = 4, 5
    pts = []
    for i in range(v):
        for j in range(h):
            pts.append([i + 0.5, j + 0.5, 0.0])
    counts, dropped = preproc.lidar_bev(np.array(pts), (v, h), (0, v, 0, h))
    assert counts.sum() == v * h
    assert (counts == 1).all()
    assert dropped == 0


def test_bev_max_boundary_goes_to_last_cell():
    counts, _ = preproc.lidar_bev(np.array([[4.0, 4.0, 0.0]]), (4, 4),
                                  (0, 4, 0, 4))
    assert counts[3, 3] == 1


def test_bev_drops_out_of_bounds_with_count():
    pts = np.array([[100.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    counts, dropped = preproc.lidar_bev(pts, (4, 4), (0, 4, 0, 4))
    assert dropped == 1
    assert counts.sum() == 1


def test_bev_permutation_invariant():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 4, size=(50, 3))
    a, _ = preproc.lidar_bev(pts, (4, 4), (0, 4, 0, 4))
    b, _ = preproc.lidar_bev(pts[rng.permutation(50)], (4, 4), (0, 4, 0, 4))
    assert np.array_equal(a, b)


def test_bev_rejects_degenerate_bounds():
    with pytest.raises(ValueError):
        preproc.lidar_bev(np.zeros((1, 3)), (4, 4), (0, 0, 0, 4))


# ---------------------------------------------------------------- GPS

def test_gps_identity():
    assert preproc.gps_to_local((40.0, -105.0), (40.0, -105.0)) == (0.0, 0.0)


def test_gps_latitude_step():
    east, north = preproc.gps_to_local((40.001, -105.0), (40.0, -105.0))
    assert east == 0.0
    assert abs(north - 111.19) < 0.01


def test_gps_antisymmetric_east_at_equal_latitude():
    e1, _ = preproc.gps_to_local((40.0, -104.999), (40.0, -105.0))
    e2, _ = preproc.gps_to_local((40.0, -105.0), (40.0, -104.999))
    assert np.isclose(e1, -e2)


def test_gps_error_vs_great_circle_under_1km():
    # haversine oracle
    rng = np.random.default_rng(3)
    for _ in range(50):
        lat0 = rng.uniform(-60, 60)
        lon0 = rng.uniform(-180, 180)
        dn = rng.uniform(-700, 700)
        de = rng.uniform(-700, 700)
        lat1, lon1 = preproc.local_to_gps(de, dn, (lat0, lon0))
        east, north = preproc.gps_to_local((lat1, lon1), (lat0, lon0))
        planar = np.hypot(east, north)
        p1 = np.deg2rad([lat0, lon0])
        p2 = np.deg2rad([lat1, lon1])
        dlat = p2[0] - p1[0]
        dlon = p2[1] - p1[1]
        a = (np.sin(dlat / 2) ** 2
             + np.cos(p1[0]) * np.cos(p2[0]) * np.sin(dlon / 2) ** 2)
        haversine = 2 * preproc.EARTH_RADIUS_M * np.arcsin(np.sqrt(a))
        if haversine > 1.0:
            assert abs(planar - haversine) / haversine < 1e-3


def test_gps_rejects_invalid_coords():
    with pytest.raises(ValueError):
        preproc.gps_to_local((91.0, 0.0), (0.0, 0.0))


# ---------------------------------------------------------------- image

def test_image_standardize_identity():
    img = np.random.default_rng(4).normal(size=(8, 8, 3))
    out = preproc.image_standardize(img, np.zeros(3), np.ones(3))
    assert np.allclose(out, img)


def test_image_standardize_own_stats_centered():
    img = np.random.default_rng(5).uniform(0, 1, size=(16, 16, 3))
    mean = img.mean(axis=(0, 1))
    std = img.std(axis=(0, 1))
    out = preproc.image_standardize(img, mean, std)
    assert np.abs(out.mean(axis=(0, 1))).max() < 1e-12


def test_image_standardize_rejects_zero_std():
    with pytest.raises(ValueError):
        preproc.image_standardize(np.zeros((4, 4, 3)), np.zeros(3),
                                  np.array([1.0, 0.0, 1.0]))


# ---------------------------------------------------------------- beam

def test_beam_normalize_endpoints_and_value():
    assert preproc.beam_normalize(np.array([0]), 64)[0] == 0.0
    assert preproc.beam_normalize(np.array([63]), 64)[0] == 1.0
    assert np.isclose(preproc.beam_normalize(np.array([31]), 64)[0],
                      31 / 63, atol=1e-5)


def test_beam_normalize_monotone():
    idx = np.arange(64)
    out = preproc.beam_normalize(idx, 64)
    assert (np.diff(out) > 0).all()


def test_beam_normalize_rejects_out_of_range():
    with pytest.raises(ValueError):
        preproc.beam_normalize(np.array([64]), 64)
    with pytest.raises(ValueError):
        preproc.beam_normalize(np.array([-1]), 64)
