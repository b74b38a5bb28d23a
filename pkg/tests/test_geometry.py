import itertools

import numpy as np
import pytest

from scatteriht.errors import InvalidArgumentError
from scatteriht.geometry import HEMISPHERE, build_grid, grid_for_kh, sphere_directions


def test_grid_basic_counts():
    g = build_grid(1.0, 10)
    assert g.n_voxels == 1000 and g.centers.shape == (1000, 3)
    assert g.h == pytest.approx(0.1)
    assert g.kh == pytest.approx(2 * np.pi * 0.1)


def test_grid_single_voxel_at_center():
    g = build_grid(2.5, 1)
    assert g.h == 2.5
    np.testing.assert_allclose(g.centers, [[1.25, 1.25, 1.25]])


def test_grid_two_per_side_pairwise_distances():
    g = build_grid(2.0, 2)
    dists = sorted(np.linalg.norm(a - b) for a, b in itertools.combinations(g.centers, 2))
    assert len(dists) == 28
    # 12 edges, 12 face diagonals, 4 body diagonals of a unit cube
    np.testing.assert_allclose(dists[:12], 1.0)
    np.testing.assert_allclose(dists[12:24], np.sqrt(2))
    np.testing.assert_allclose(dists[24:], np.sqrt(3))


def test_grid_x_fastest_ordering():
    g = build_grid(3.0, 3)
    assert g.index(2, 1, 0) == 5
    np.testing.assert_allclose(g.centers[5], [2.5, 1.5, 0.5])
    np.testing.assert_allclose(g.centers[9], [0.5, 0.5, 1.5])


@pytest.mark.parametrize("side,n", [(1.0, 3), (3.0, 10), (4.75, 5)])
def test_grid_extent_and_min_spacing(side, n):
    g = build_grid(side, n)
    c = g.centers
    d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
    assert d.max() == pytest.approx(np.sqrt(3) * (side - g.h))
    assert d[~np.eye(len(c), dtype=bool)].min() == pytest.approx(g.h)


def test_grid_for_kh():
    g = grid_for_kh(1.885, 10)
    assert g.kh == pytest.approx(1.885)


@pytest.mark.parametrize("side,n", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)])
def test_grid_rejects_bad_input(side, n):
    with pytest.raises(InvalidArgumentError):
        build_grid(side, n)


def test_grid_deterministic_and_read_only():
    a, b = build_grid(3.0, 7), build_grid(3.0, 7)
    assert a.centers.tobytes() == b.centers.tobytes()
    with pytest.raises(ValueError):
        a.centers[0, 0] = 1.0


def test_directions_unit_and_balanced():
    d = sphere_directions(500)
    np.testing.assert_allclose(np.linalg.norm(d.directions, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(d.directions.mean(axis=0)) < 0.05
    assert len(d) == 500


def test_single_direction():
    d = sphere_directions(1)
    assert d.directions.shape == (1, 3)
    assert np.linalg.norm(d.directions[0]) == pytest.approx(1.0)


def test_hemisphere_directions():
    d = sphere_directions(225, HEMISPHERE)
    assert len(d) == 225 and d.coverage == HEMISPHERE
    assert np.all(d.directions[:, 2] >= 0)
    np.testing.assert_allclose(np.linalg.norm(d.directions, axis=1), 1.0, atol=1e-12)


def test_directions_deterministic():
    assert sphere_directions(321).directions.tobytes() == sphere_directions(321).directions.tobytes()


@pytest.mark.parametrize("count,coverage", [(0, "full"), (-3, "full"), (5, "equator")])
def test_directions_reject_bad_input(count, coverage):
    with pytest.raises(InvalidArgumentError):
        sphere_directions(count, coverage)
