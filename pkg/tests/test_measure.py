"""Density functions, perimeter, surface sums, and the Gauss identity."""

import numpy as np
import pytest

from ultragrid import (
    Ball,
    Box,
    Domain,
    GridFunction,
    HalfSpace,
    NodeMask,
    build_level,
    density,
    gauss_check,
    normal_field,
    perimeter,
    surface_integral,
)
from ultragrid.measure import _box_fraction, _sampled_fraction

DOM1 = Domain(((0.0, 1.0),))
DOM2 = Domain(((0.0, 1.0), (0.0, 1.0)))
DOM3 = Domain(((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)))


def test_density_probe_values_2d():
    level = build_level(DOM2, 5)
    theta = density(HalfSpace(0, 0.5), level).grid_values
    mid = level.shape[0] // 2
    assert theta[mid, mid] == 0.5  # node on the boundary plane
    assert theta[2, 2] == 1.0  # deep inside
    assert theta[-1, -1] == 0.0  # deep outside


def test_density_probe_values_1d_3d():
    for dom in (DOM1, DOM3):
        level = build_level(dom, 4)
        theta = density(HalfSpace(0, 0.5), level)
        x = level.coordinates[:, 0]
        assert np.all(theta.values[x < 0.5 - level.h] == 1.0)
        assert np.all(theta.values[x > 0.5 + level.h] == 0.0)
        assert np.all(theta.values[np.isclose(x, 0.5)] == 0.5)


def test_density_in_unit_interval():
    level = build_level(DOM2, 5)
    for region in (Ball((0.4, 0.6), 0.2), Box(((0.2, 0.7), (0.1, 0.5)))):
        theta = density(region, level).values
        assert np.all((theta >= 0.0) & (theta <= 1.0))


def test_box_closed_form_matches_sampling_2d():
    level = build_level(DOM2, 5)
    eta = level.h
    box = Box(((0.22, 0.61), (0.33, 0.84)))
    exact = _box_fraction(level, box, eta)
    sampled = _sampled_fraction(level, box, eta)
    # the sampled rule carries midpoint error near corners; the closed form
    # is the reference
    assert np.max(np.abs(exact - sampled)) < 0.05


def test_square_perimeter():
    level = build_level(DOM2, 7)
    p = perimeter(Box(((0.25, 0.75), (0.25, 0.75))), level)
    assert abs(p - 2.0) / 2.0 < 0.05


def test_disk_perimeter():
    level = build_level(DOM2, 7)
    r = 0.25
    p = perimeter(Ball((0.5, 0.5), r), level)
    assert abs(p - 2 * np.pi * r) / (2 * np.pi * r) < 0.05


def test_half_mask_perimeter_is_interface_length():
    # the nearest-node region extends past the box, so only the internal
    # interface contributes
    level = build_level(DOM2, 6)
    mask = level.coordinates[:, 0] <= 0.5
    assert perimeter(NodeMask(level, mask), level) == pytest.approx(1.0, rel=0.02)


def test_full_and_empty_masks():
    level = build_level(DOM2, 4)
    full = NodeMask(level, np.ones(level.node_count, bool))
    empty = NodeMask(level, np.zeros(level.node_count, bool))
    assert perimeter(full, level) == 0.0
    assert perimeter(empty, level) == 0.0
    assert np.all(density(full, level).values == 1.0)
    assert np.all(density(empty, level).values == 0.0)


def test_surface_integral_of_coordinate():
    # integral of x over the boundary of the square [0.25, 0.75]^2 is 1.0
    level = build_level(DOM2, 7)
    v = GridFunction(level, level.coordinates[:, 0])
    s = surface_integral(v, Box(((0.25, 0.75), (0.25, 0.75))))
    assert s == pytest.approx(1.0, rel=0.05)


def test_normal_field_points_outward():
    level = build_level(DOM2, 6)
    normals = normal_field(Ball((0.5, 0.5), 0.25), level)
    nx, ny = normals[0].values, normals[1].values
    mag = np.sqrt(nx**2 + ny**2)
    active = mag > 0.5
    offset = level.coordinates[active] - np.array([0.5, 0.5])
    radial = offset / np.linalg.norm(offset, axis=1, keepdims=True)
    dots = nx[active] * radial[:, 0] + ny[active] * radial[:, 1]
    assert np.all(dots > 0.7)


@pytest.mark.parametrize("dom", [DOM1, DOM2])
def test_gauss_identity_random_masks(dom):
    rng = np.random.default_rng(13)
    for n in (3, 4, 5):
        level = build_level(dom, n)
        for _ in range(20):
            mask = rng.random(level.node_count) > 0.5
            phi = tuple(
                GridFunction(level, rng.standard_normal(level.node_count))
                for _ in range(level.dimension)
            )
            res = gauss_check(phi, NodeMask(level, mask))
            assert res.gap <= 1e-12 * max(abs(res.lhs), abs(res.rhs), 1.0)


def test_gauss_identity_smooth_region():
    level = build_level(DOM2, 5)
    rng = np.random.default_rng(17)
    phi = tuple(
        GridFunction(level, rng.standard_normal(level.node_count)) for _ in range(2)
    )
    res = gauss_check(phi, Ball((0.5, 0.5), 0.3))
    assert res.gap <= 1e-12 * max(abs(res.lhs), abs(res.rhs), 1.0)


def test_region_validation():
    with pytest.raises(ValueError):
        Ball((0.5,), -1.0)
    with pytest.raises(ValueError):
        Box(((0.5, 0.5),))
    with pytest.raises(ValueError):
        HalfSpace(0, 0.5, side="sideways")
    level = build_level(DOM1, 3)
    with pytest.raises(ValueError):
        NodeMask(level, np.ones(3, bool))
