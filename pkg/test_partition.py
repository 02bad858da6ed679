"""
层级、自适应分划、参考分划与分划熵测试
"""

import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from mrkit.exceptions import ArgumentError, EscapeError
from mrkit.geometry import ChartDomain, RegularityProfile
from mrkit.measure import product_uniform, uniform
from mrkit.partition import (
    TRUNCATED,
    TRUNCATED_CODE,
    UNCOVERED_CODE,
    LevelParams,
    ReferencePartition,
    build_partition,
    check_l,
    check_l1,
    classify_levels,
    level_of,
    level_products,
    overlap_bound,
    partition_entropy,
    plugin_entropy,
)
from mrkit.systems import doubling, gauss, product_doubling


def _params(**overrides) -> LevelParams:
    values = dict(m=1, n=2, l1=5, l=0, b=1.0, alpha=0.99, C=1.01, a=1.01, s_max=24)
    values.update(overrides)
    return LevelParams(**values)


def _brute_force_codes(partition, points: np.ndarray) -> np.ndarray:
    """逐层按构造顺序扫描全部单元盒，取第一个包含该点的"""
    levels = partition.classify(points)
    out = np.full(len(points), UNCOVERED_CODE, dtype=np.int64)
    out[levels > partition.params.s_max] = TRUNCATED_CODE
    for s in partition.levels:
        mask = np.flatnonzero(levels == s)
        if len(mask) == 0:
            continue
        first = partition.encode((s, 0, None))
        assigned = np.full(len(mask), UNCOVERED_CODE, dtype=np.int64)
        for idx, box in enumerate(partition.boxes(s)):
            free = assigned == UNCOVERED_CODE
            if not free.any():
                break
            hit = np.zeros(len(mask), dtype=bool)
            hit[free] = box.contains(points[mask[free]])
            assigned[hit] = first + idx
        out[mask] = assigned
    return out


def _direct_l1_ok(l1, m, a, alpha, C, d, n_check=64):
    if not l1 > a:
        return False
    for n in range(1, n_check + 1):
        gap = n * (l1 - 2 * m)
        if not 2.0 ** (-gap) < 1.0 / (math.sqrt(d) * 2.0 ** (n + 1)):
            return False
        if not C * 2.0 ** (-alpha * gap) * 2.0 ** (a * n) < 2.0 ** (1.0 / m) - 1.0:
            return False
    return True


@pytest.fixture(scope="module")
def doubling_partition():
    return build_partition(doubling(), uniform(), RegularityProfile.trivial(), _params(), seed=3)


@pytest.fixture(scope="module")
def product_partition():
    return build_partition(product_doubling(), product_uniform(2), RegularityProfile.trivial(), _params(l=1), seed=4)


class TestLevelParams:
    def test_validation(self):
        with pytest.raises(ArgumentError):
            _params(m=0)
        with pytest.raises(ArgumentError):
            _params(l=-1)
        with pytest.raises(ArgumentError):
            _params(b=0.5)
        with pytest.raises(ArgumentError):
            _params(n=5, s_max=4)

    def test_epsilon(self):
        params = _params()
        assert params.epsilon(2, 1) == 2.0 ** -10
        assert params.epsilon(1, 4) == pytest.approx(1 / 64)

    def test_cell_bound(self):
        params = _params()
        assert params.c0(1) == 3 * 4
        assert params.log_cell_bound(2, 1) == pytest.approx(math.log(12) + 12 * math.log(2))


class TestLevels:
    def test_products(self):
        products = level_products(doubling(), RegularityProfile.trivial(), 0.3, 1)
        assert products.prodDf == pytest.approx(2.0)
        assert products.prodD == pytest.approx(0.3)
        assert products.prodRho == 1.0
        assert products.prodN == 1.0
        assert products.level == 2

    def test_two_steps(self):
        products = level_products(doubling(), RegularityProfile.trivial(), 0.3, 2)
        assert products.prodDf == pytest.approx(4.0)
        assert products.prodD == pytest.approx(0.12)
        assert products.level == 4

    def test_escape(self):
        with pytest.raises(EscapeError):
            level_of(gauss(), RegularityProfile.trivial(), 0.5, 1)

    def test_batch_matches_single(self):
        points = np.array([[0.3], [0.01], [0.75]])
        batch = classify_levels(doubling(), RegularityProfile.trivial(), points, 1)
        singles = [level_of(doubling(), RegularityProfile.trivial(), p, 1) for p in points]
        assert batch.tolist() == singles

    def test_batch_escape_marked(self):
        levels = classify_levels(gauss(), RegularityProfile.trivial(), np.array([[0.5], [0.3]]), 1)
        assert levels[0] == -1
        assert levels[1] >= 0


class TestConstraints:
    def test_doubling_minimal_l1(self):
        check = check_l1(_params(l1=1), 1)
        assert not check.ok
        assert check.violated == 1
        assert check.minimal == 5
        assert check_l1(_params(), 1).ok

    def test_second_constraint_witness(self):
        check = check_l1(_params(l1=4), 1)
        assert check.violated == 2
        assert check.witness_n == 1

    def test_matches_direct_inequalities(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            d = int(rng.integers(1, 5))
            m = int(rng.integers(1, 4))
            alpha = float(rng.uniform(0.1, 0.9))
            C = float(rng.uniform(1.5, 100.0))
            a = float(rng.uniform(1.1, 4.0))
            l1 = int(rng.integers(1, 40))
            params = _params(m=m, l1=l1, alpha=alpha, C=C, a=a)
            check = check_l1(params, d)
            assert check.ok == _direct_l1_ok(l1, m, a, alpha, C, d)
            minimal = next((c for c in range(1, 129) if _direct_l1_ok(c, m, a, alpha, C, d)), None)
            assert check.minimal == minimal

    def test_refinement_constraint(self):
        check = check_l(_params(), 2.0)
        assert check.minimal is not None
        assert check_l(_params(l=check.minimal), 2.0).ok
        if check.minimal > 0:
            assert not check_l(_params(l=check.minimal - 1), 2.0).ok


class TestAdaptivePartition:
    def test_rejects_infeasible_l1(self):
        with pytest.raises(ArgumentError):
            build_partition(doubling(), uniform(), RegularityProfile.trivial(), _params(l1=1))

    def test_rejects_small_budget(self):
        with pytest.raises(ArgumentError):
            build_partition(doubling(), uniform(), RegularityProfile.trivial(), _params(), sample_budget=5000)

    def test_nets_are_separated_and_cover_samples(self, doubling_partition):
        partition = doubling_partition
        levels = partition.clip_levels(partition.sample_levels)
        for s, net in partition.levels.items():
            tree = cKDTree(net.anchors)
            assert not tree.query_pairs(net.eps)
            distance, _ = tree.query(partition.samples[levels == s])
            assert distance.max() <= net.eps + 2e-12

    @pytest.mark.parametrize("fixture", ["doubling_partition", "product_partition"])
    def test_ball_meets_few_cubes(self, fixture, request):
        partition = request.getfixturevalue(fixture)
        check = partition.overlap_check()
        assert check.ok
        assert check.bound == overlap_bound(partition.params.b, partition.dim)
        assert 1 <= check.worst <= check.bound
        assert check.centers > 0
        assert set(check.per_level) == set(partition.levels)

    def test_overlap_bound_values(self):
        assert overlap_bound(1.0, 1) == 4
        assert overlap_bound(1.0, 2) == 64
        assert overlap_bound(1.5, 1) == 8

    def test_cell_counts_within_bound(self, doubling_partition):
        for info in doubling_partition.level_cell_counts().values():
            assert math.log(info["cells"]) <= info["log_bound"]

    def test_samples_are_covered(self, doubling_partition):
        partition = doubling_partition
        codes = partition.codes(partition.samples, partition.sample_levels)
        levels = partition.clip_levels(partition.sample_levels)
        assert np.all(codes[(levels >= 0) & (levels <= partition.params.s_max)] >= 0)

    def test_first_come_lookup_doubling(self, doubling_partition):
        partition = doubling_partition
        rng = np.random.default_rng(0)
        points = np.vstack([partition.samples[:5000], rng.random((5000, 1))])
        assert np.array_equal(partition.codes(points), _brute_force_codes(partition, points))

    def test_first_come_lookup_product(self, product_partition):
        partition = product_partition
        rng = np.random.default_rng(1)
        points = np.vstack([partition.samples[:1000], rng.random((1000, 2))])
        assert partition.cells_per_cube == 4
        assert np.array_equal(partition.codes(points), _brute_force_codes(partition, points))

    def test_locate_round_trip(self, doubling_partition):
        partition = doubling_partition
        cell = partition.locate(partition.samples[0])
        assert cell[2] is None
        assert partition.decode(partition.encode(cell)) == cell
        assert partition.decode(TRUNCATED_CODE) == TRUNCATED

    def test_level_of_code(self, doubling_partition):
        partition = doubling_partition
        codes = partition.codes(partition.samples[:100], partition.sample_levels[:100])
        levels = partition.clip_levels(partition.sample_levels[:100])
        assert np.array_equal(partition.level_of_code(codes), levels)

    def test_refinement_multiplies_cells(self, doubling_partition):
        refined = doubling_partition.with_refinement(2)
        assert refined.n_cells == 4 * doubling_partition.n_cells
        assert refined.params.l == 2

    def test_deterministic(self, doubling_partition):
        again = build_partition(doubling(), uniform(), RegularityProfile.trivial(), _params(), seed=3, workers=4)
        assert again.n_cells == doubling_partition.n_cells
        assert np.array_equal(again.samples, doubling_partition.samples)

    def test_report(self, doubling_partition):
        document = doubling_partition.to_dict(include_anchors=False)
        assert document["n_cells"] == doubling_partition.n_cells
        assert "anchor_list" not in document["levels"]["2"]


class TestPartitionEntropy:
    def test_gap_non_negative(self, doubling_partition):
        entropy = partition_entropy(doubling_partition)
        assert entropy.entropy > 0
        assert entropy.gap >= 0

    def test_fresh_samples(self, doubling_partition):
        entropy = partition_entropy(doubling_partition, uniform(), 5000, seed=1)
        assert entropy.n_samples == 5000
        assert entropy.gap >= 0
        assert entropy.truncation_mass > 0

    def test_product_gap(self, product_partition):
        assert partition_entropy(product_partition).gap >= 0

    def test_plugin_entropy(self):
        assert plugin_entropy([0, 1, 0, 1]) == pytest.approx(math.log(2))
        assert plugin_entropy([]) == 0.0


class TestReferencePartition:
    def test_cf_digits(self):
        ref = ReferencePartition.cf_digits(ChartDomain.interval(0.0, 1.0), max_digit=8)
        assert ref.codes(np.array([[0.3], [0.6], [0.01], [1.5]])).tolist() == [3, 1, 8, UNCOVERED_CODE]

    def test_integer_part(self):
        ref = ReferencePartition.integer_part(ChartDomain.half_line(1.0, 2.0), max_digit=8)
        assert ref.codes(np.array([[3.7], [100.0]])).tolist() == [3, 8]

    def test_dyadic_two_dimensional(self):
        ref = ReferencePartition.dyadic(ChartDomain.box([0.0, 0.0], [1.0, 1.0]))
        assert ref.codes(np.array([[0.3, 0.7]])).tolist() == [1]

    def test_dyadic_depth(self):
        ref = ReferencePartition.dyadic(ChartDomain.interval(0.0, 1.0), depth=3)
        assert ref.codes(np.array([[0.3], [0.99]])).tolist() == [2, 7]

    def test_orbit_codes_shape(self):
        ref = ReferencePartition.dyadic(ChartDomain.interval(0.0, 1.0))
        orbit = np.full((4, 3, 1), 0.75)
        orbit[2, 1, 0] = np.nan
        codes = ref.orbit_codes(orbit)
        assert codes.shape == (4, 3)
        assert codes[2, 1] == UNCOVERED_CODE

    def test_rejects_bad_kinds(self):
        with pytest.raises(ArgumentError):
            ReferencePartition(ChartDomain.interval(0.0, 1.0), kind="ternary")
        with pytest.raises(ArgumentError):
            ReferencePartition.cf_digits(ChartDomain.box([0.0, 0.0], [1.0, 1.0]))
