"""
熵估计测试
"""

import math

import numpy as np
import pytest

from mrkit.exceptions import ArgumentError
from mrkit.entropy import (
    block_entropy,
    box_intersection_count,
    conditional_entropy,
    conditional_plugin,
    count_reachable_cells,
    decomposition_report,
    reachable_cells_survey,
    word_entropy,
)
from mrkit.geometry import BoxElement, RegularityProfile
from mrkit.measure import uniform
from mrkit.partition import LevelParams, ReferencePartition, build_partition
from mrkit.systems import doubling, rotation

LOG2 = math.log(2.0)


@pytest.fixture(scope="module")
def dyadic():
    return ReferencePartition.dyadic(doubling().domain)


@pytest.fixture(scope="module")
def doubling_partition():
    params = LevelParams(m=1, n=2, l1=5, l=0, b=1.0, alpha=0.99, C=1.01, a=1.01, s_max=24)
    return build_partition(doubling(), uniform(), RegularityProfile.trivial(), params, seed=11)


@pytest.fixture(scope="module")
def doubling_block(dyadic):
    return block_entropy(doubling(), uniform(), dyadic, 8, 20_000, seed=1)


class TestPluginEstimators:
    def test_word_entropy(self):
        H, distinct = word_entropy(np.array([[0, 1, 0, 1]]))
        assert H == pytest.approx(LOG2)
        assert distinct == 2

    def test_words_are_columns(self):
        codes = np.array([[0, 0, 1, 1], [0, 1, 0, 1]])
        H, distinct = word_entropy(codes)
        assert distinct == 4
        assert H == pytest.approx(2 * LOG2)

    def test_conditional(self):
        x = np.array([0, 0, 1, 1])
        assert conditional_plugin(x, x) == 0.0
        assert conditional_plugin(x, np.array([0, 1, 0, 1])) == pytest.approx(LOG2)


class TestBlockEntropy:
    def test_doubling_slope(self, doubling_block):
        assert doubling_block.slope == pytest.approx(LOG2, rel=0.02)
        assert doubling_block.slope_t == 8
        assert not doubling_block.undersampled
        assert doubling_block.token_share == 0.0

    def test_rows(self, doubling_block):
        rows = doubling_block.rows
        assert [row["t"] for row in rows] == list(range(1, 9))
        assert rows[0]["H"] == pytest.approx(LOG2, rel=0.01)
        assert all(row["distinct_words"] <= 2 ** row["t"] for row in rows)

    def test_power_of_map(self, dyadic):
        block = block_entropy(doubling(), uniform(), dyadic, 4, 20_000, seed=2, m=2)
        assert block.m == 2
        assert block.rate == pytest.approx(LOG2, rel=0.03)

    def test_rotation_has_no_entropy(self):
        block = block_entropy(rotation(), uniform(), ReferencePartition.dyadic(rotation().domain), 32, 20_000, seed=3)
        assert block.slope < 0.1

    def test_workers_do_not_change_results(self, dyadic):
        a = block_entropy(doubling(), uniform(), dyadic, 4, 2000, seed=5, workers=1)
        b = block_entropy(doubling(), uniform(), dyadic, 4, 2000, seed=5, workers=4)
        assert a.slope == b.slope
        assert a.rows == b.rows

    def test_short_blocks_rejected(self, dyadic):
        with pytest.raises(ArgumentError):
            block_entropy(doubling(), uniform(), dyadic, 3, 1000)


class TestConditionalEntropy:
    def test_doubling(self, dyadic):
        value = conditional_entropy(doubling(), uniform(), dyadic, 1, 20_000, seed=4)
        assert value.value == pytest.approx(LOG2, rel=0.01)
        assert value.n_pairs == 20_000

    def test_bounds_block_slope(self, dyadic, doubling_block):
        value = conditional_entropy(doubling(), uniform(), dyadic, 1, 20_000, seed=6)
        assert value.value >= doubling_block.slope - 3 * max(doubling_block.slope_stderr, value.stderr)

    def test_adaptive_partition_m_must_match(self, doubling_partition):
        with pytest.raises(ArgumentError):
            conditional_entropy(doubling(), uniform(), doubling_partition, 2, 1000)


class TestDecomposition:
    @pytest.fixture(scope="class")
    def report(self, doubling_partition):
        return decomposition_report(doubling(), uniform(), doubling_partition, 10_000, seed=7)

    def test_terms_sum_to_conditional_entropy(self, report):
        assert report.total == pytest.approx(report.conditional_entropy, abs=1e-8)

    def test_within_bounds(self, report):
        assert report.violations == []
        assert report.exterior_integral == pytest.approx(LOG2)
        assert report.constants["C1"] >= 1

    def test_report_dict(self, report):
        document = report.to_dict()
        assert document["total"] == pytest.approx(report.total)
        assert document["chain_rate"] == pytest.approx(report.chain_total)

    def test_requires_adaptive_partition(self, dyadic):
        with pytest.raises(ArgumentError):
            decomposition_report(doubling(), uniform(), dyadic, 1000)


class TestBoxIntersection:
    def test_identity_on_unit_square(self):
        box = BoxElement.cube([0.5, 0.5], 0.5)
        assert box_intersection_count(np.eye(2), box, 0.25) == 16

    def test_degenerate_map(self):
        box = BoxElement.cube([0.5, 0.5], 0.5)
        count = box_intersection_count(np.array([[1.0, 0.0], [0.0, 0.0]]), box, 0.25)
        assert count >= 4

    def test_random_boxes_within_volume_bound(self):
        rng = np.random.default_rng(12)
        beta = 0.1
        for _ in range(100):
            A = rng.standard_normal((2, 2))
            box = BoxElement.cube(rng.uniform(-1.0, 1.0, 2), float(rng.uniform(0.01, 0.5)))
            count = box_intersection_count(A, box, beta)
            widths = 2 * box.half_widths * np.linalg.norm(A @ box.frame, axis=0) / beta
            assert 1 <= count <= 32 * np.prod(np.maximum(widths, 1.0))

    def test_rejects_bad_arguments(self):
        box = BoxElement.cube([0.5, 0.5], 0.5)
        with pytest.raises(ArgumentError):
            box_intersection_count(np.eye(2), box, 0.0)
        with pytest.raises(ArgumentError):
            box_intersection_count(np.eye(3), box, 0.25)


class TestReachableCells:
    def test_survey(self, doubling_partition):
        survey = reachable_cells_survey(doubling(), doubling_partition, n_cells=20, n_probe=1000, seed=1)
        assert survey["cells"] > 0
        assert survey["violations"] == 0

    def test_survey_on_refined_cells(self, doubling_partition):
        refined = doubling_partition.with_refinement(1)
        survey = reachable_cells_survey(doubling(), refined, n_cells=40, n_probe=1000, seed=1)
        assert survey["cells"] >= 30
        assert survey["violations"] == 0
        assert survey["max_hits"] >= 1

    def test_too_few_points_per_cell(self, doubling_partition):
        with pytest.raises(ArgumentError):
            count_reachable_cells(doubling(), doubling_partition, (2, 0, None), n_probe=10)

    def test_cell_outside_base_level(self, doubling_partition):
        with pytest.raises(ArgumentError):
            count_reachable_cells(doubling(), doubling_partition, (3, 0, None))
