"""
几何模块测试
"""

import math

import numpy as np
import pytest

from mrkit.exceptions import ArgumentError, DomainError, ResolutionError
from mrkit.geometry import (
    BoxElement,
    ChartDomain,
    CustomMetric,
    RegularityConfig,
    RegularityProfile,
    covering_count_bound,
    d0,
    d_star,
    default_c01,
    greedy_cover_count,
    regular_radius_point,
    regular_radius_sublevel,
    separated_net,
    subdivide_box,
    tankage,
)
from mrkit.measure import noncompact_gauss_density, sample
from mrkit.systems import noncompact_gauss


def _widening_line(b_growth: float = 2.0) -> ChartDomain:
    """导数范数随 |v| 线性增长的一维度量"""

    def exp_map(x, v):
        return x + v

    def exp_inverse(x, y):
        return y - x

    def derivative_norms(y, v):
        grow = 1.0 + b_growth * np.linalg.norm(v, axis=-1)
        return grow, grow

    def boundary_distance(p):
        return np.full(len(p), np.inf)

    def membership(p):
        return np.ones(len(p), dtype=bool)

    metric = CustomMetric(exp_map, exp_inverse, derivative_norms)
    return ChartDomain.custom(1, metric, boundary_distance, membership, [0.0], name="widening")


class TestDistances:
    def test_interval(self):
        domain = ChartDomain.interval(0.0, 1.0)
        assert d0(domain, 0.1) == pytest.approx(0.1)
        assert d0(domain, 0.5) == pytest.approx(0.5)

    def test_euclidean_uses_distance_to_reference(self):
        domain = ChartDomain.euclidean(2)
        assert d0(domain, [3.0, 4.0]) == pytest.approx(0.2)
        assert d_star(domain, [0.1, 0.0]) == 1.0

    def test_reference_point_on_boundaryless_domain(self):
        assert math.isinf(d0(ChartDomain.euclidean(2), [0.0, 0.0]))
        assert math.isinf(d0(ChartDomain.torus(1), 0.5))

    def test_half_line(self):
        domain = ChartDomain.half_line(1.0, reference_point=2.0)
        assert d0(domain, 10.0) == pytest.approx(0.125)
        assert d0(domain, 1.25) == pytest.approx(0.25)
        assert domain.inverse_branch(np.array([[10.0], [1.25]])).tolist() == [True, False]

    def test_noncompact_gauss_uses_inverse_branch(self):
        points = sample(noncompact_gauss_density(), 10_000, seed=4)
        share = float(np.mean(noncompact_gauss().domain.inverse_branch(points)))
        # 解析值 P(y > (3+√5)/2) = log2(1 + (3−√5)/2) ≈ 0.467
        assert share >= 0.3
        assert share == pytest.approx(math.log2(1 + (3 - math.sqrt(5)) / 2), abs=0.03)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            d0(ChartDomain.interval(0.0, 1.0), 1.5)
        with pytest.raises(DomainError):
            d0(ChartDomain.interval(0.0, 1.0), 0.0)

    def test_bad_box(self):
        with pytest.raises(ArgumentError):
            ChartDomain.box([0.0, 1.0], [1.0, 0.5])


class TestNets:
    def test_separated_and_maximal(self):
        rng = np.random.default_rng(3)
        points = rng.random((2000, 2))
        eps = 0.1
        net = separated_net(points, eps)

        gaps = np.linalg.norm(net[:, None, :] - net[None, :, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        assert gaps.min() > eps

        to_net = np.linalg.norm(points[:, None, :] - net[None, :, :], axis=-1).min(axis=1)
        assert to_net.max() <= eps + 1e-9

    def test_region_filter(self):
        points = np.linspace(0.0, 1.0, 101).reshape(-1, 1)
        net = separated_net(points, 0.05, region=lambda p: p[:, 0] < 0.5)
        assert np.all(net[:, 0] < 0.5)

    def test_empty(self):
        assert separated_net(np.empty((0, 2)), 0.1).shape == (0, 2)

    def test_eps_must_be_positive(self):
        with pytest.raises(ArgumentError):
            separated_net(np.zeros((3, 1)), 0.0)

    def test_periodic_distance(self):
        domain = ChartDomain.torus(1)
        net = separated_net(np.array([[0.01], [0.99]]), 0.1, domain=domain)
        assert len(net) == 1

    def test_greedy_cover(self):
        points = np.linspace(0.0, 1.0, 101).reshape(-1, 1)
        assert greedy_cover_count(points, 0.25) == 2
        assert greedy_cover_count(np.empty((0, 1)), 0.25) == 0

    def test_covering_bounds(self):
        assert default_c01(1, 1) == 3
        assert default_c01(1, 2) == 25
        assert covering_count_bound(1.0, 0.25, 3, 1) == 12

    def test_net_in_ball_within_bound(self):
        rng = np.random.default_rng(5)
        points = rng.uniform(-1.0, 1.0, (5000, 2))
        points = points[np.linalg.norm(points, axis=1) < 1.0]
        eps = 0.2
        net = separated_net(points, eps)
        assert len(net) <= covering_count_bound(1.0, eps, default_c01(1, 2), 2)


class TestRegularRadius:
    def test_config_validation(self):
        with pytest.raises(ArgumentError):
            RegularityConfig(b=0.5)
        with pytest.raises(ArgumentError):
            RegularityConfig(policy="shrink")

    def test_euclidean_pure_norm(self):
        domain = ChartDomain.interval(0.0, 1.0)
        assert regular_radius_point(domain, RegularityConfig(), 0.1) == 1.0

    def test_clip_policy(self):
        domain = ChartDomain.interval(0.0, 1.0)
        assert regular_radius_point(domain, RegularityConfig(policy="clip"), 0.1) == pytest.approx(0.1)

    def test_custom_metric_bisection(self):
        domain = _widening_line()
        radius = regular_radius_point(domain, RegularityConfig(b=2.0), 0.0)
        assert radius == pytest.approx(0.5, abs=1e-3)
        assert radius <= 0.5

    def test_custom_metric_saturates(self):
        domain = _widening_line()
        assert regular_radius_point(domain, RegularityConfig(b=10.0), 0.0) == 1.0

    def test_sublevel_minimum(self):
        domain = ChartDomain.interval(0.0, 1.0)
        estimate = regular_radius_sublevel(domain, RegularityConfig(policy="clip"), 0.3, 1000)
        assert estimate.value == pytest.approx(0.3)
        assert not estimate.truncated
        assert regular_radius_sublevel(domain, RegularityConfig(), 0.3, 1000).value == 1.0

    def test_sublevel_half_line(self):
        domain = ChartDomain.half_line(1.0, reference_point=2.0)
        estimate = regular_radius_sublevel(domain, RegularityConfig(policy="clip"), 1.5, 1000)
        assert estimate.value == pytest.approx(0.5)
        assert not estimate.truncated


class TestTankage:
    def test_pure_norm(self):
        domain = ChartDomain.interval(0.0, 1.0)
        assert tankage(domain, RegularityConfig(), 0.1, 0.01) == 1

    def test_clip(self):
        domain = ChartDomain.interval(0.0, 1.0)
        count = tankage(domain, RegularityConfig(policy="clip"), 0.1, 0.01)
        assert 2 <= count <= 8

    def test_resolution_too_coarse(self):
        domain = ChartDomain.interval(0.0, 1.0)
        with pytest.raises(ResolutionError):
            tankage(domain, RegularityConfig(), 0.1, 2.0)


class TestProfile:
    def test_trivial(self):
        profile = RegularityProfile.trivial()
        pts = np.array([[0.1], [0.9]])
        assert np.all(profile.rho_sublevel(pts) == 1.0)
        assert np.all(profile.tankage(pts) == 1.0)

    def test_estimated_monotone(self):
        domain = ChartDomain.interval(0.0, 1.0)
        profile = RegularityProfile.estimated(domain, RegularityConfig(policy="clip"))
        pts = np.array([[0.02], [0.1], [0.3], [0.5]])
        rho = profile.rho_sublevel(pts)
        tank = profile.tankage(pts)
        assert np.all(np.diff(rho) >= 0)
        assert np.all(rho <= domain.boundary_distances(pts) + 1e-12)
        assert np.all(np.diff(tank) <= 0)
        assert profile.mode == "estimated"


class TestBoxes:
    def test_cube(self):
        box = BoxElement.cube([0.5, 0.5], 0.5)
        assert box.volume == pytest.approx(1.0)
        assert box.contains(np.array([[0.1, 0.9]]))[0]
        assert not box.contains(np.array([[1.1, 0.5]]))[0]
        assert np.allclose(box.vertices()[0], [0.0, 0.0])

    def test_frame_must_be_orthonormal(self):
        with pytest.raises(ArgumentError):
            BoxElement.cube([0.0, 0.0], 1.0, frame=[[1.0, 0.5], [0.0, 1.0]])

    def test_rotated_frame(self):
        c = s = math.sqrt(0.5)
        box = BoxElement.cube([0.0, 0.0], 0.5, frame=[[c, -s], [s, c]])
        assert box.contains(np.array([[0.0, 0.7]]))[0]
        assert not box.contains(np.array([[0.5, 0.5]]))[0]

    def test_subdivide(self):
        cells = subdivide_box(BoxElement.cube([0.5], 0.5), 2)
        assert len(cells) == 4
        centers = sorted(float(cell.center()[0]) for cell in cells)
        assert np.allclose(centers, [0.125, 0.375, 0.625, 0.875])

    def test_subdivide_partitions_points(self):
        cells = subdivide_box(BoxElement.cube([0.5, 0.5], 0.5), 1)
        assert len(cells) == 4
        points = np.random.default_rng(1).random((1000, 2))
        hits = np.sum([cell.contains(points) for cell in cells], axis=0)
        assert np.all(hits == 1)

    def test_subdivide_rejects_non_positive(self):
        with pytest.raises(ArgumentError):
            subdivide_box(BoxElement.cube([0.5], 0.5), 0)
