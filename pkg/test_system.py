"""
动力系统与条件 (A) 测试
"""

import itertools
import math

import numpy as np
import pytest

from mrkit.exceptions import ArgumentError, EscapeError
from mrkit.system import (
    DistortionParams,
    SamplePlan,
    check_distortion_A,
    cocycle_jacobian_norms,
    default_distortion_params,
    exterior_norm,
    exterior_norm_growth,
    iterate,
    jacobian_defect,
    log_plus,
    mgs_qr,
    per_application,
)
from mrkit.systems import BUILTIN_SYSTEMS, doubling, gauss, linear, logistic4, polynomial, product_doubling, rational


def _compound_exterior_norm(A: np.ndarray) -> float:
    """逐个 κ 用全部 κ×κ 子式拼出复合矩阵，取谱范数的最大值"""
    d = A.shape[0]
    best = 0.0
    for kappa in range(1, d + 1):
        subsets = list(itertools.combinations(range(d), kappa))
        compound = np.array([[np.linalg.det(A[np.ix_(rows, cols)]) for cols in subsets] for rows in subsets])
        best = max(best, float(np.linalg.norm(compound, 2)))
    return best


def _smooth_sample(name: str, rng: np.random.Generator, n: int = 1000) -> np.ndarray:
    """避开奇异点的取样"""
    if name == "gauss_noncompact":
        return (rng.integers(1, 20, n) + rng.uniform(0.05, 0.95, n)).reshape(-1, 1)
    if name == "product_doubling":
        return rng.uniform(0.01, 0.99, (n, 2))
    x = rng.uniform(0.01, 0.99, n)
    if name == "logistic4":
        x = x[np.abs(x - 0.5) >= 0.01]
    return x.reshape(-1, 1)


class TestIterate:
    def test_zero_steps(self):
        assert iterate(doubling(), 0.3, 0)[0] == pytest.approx(0.3)

    def test_doubling(self):
        assert iterate(doubling(), 0.3, 2)[0] == pytest.approx(0.2)

    def test_polynomial(self):
        system = polynomial([0.0, 4.0, -4.0])
        assert iterate(system, 0.25, 1)[0] == pytest.approx(0.75)

    def test_rational_modulo(self):
        system = rational([1.0], [0.0, 1.0], modulo=True)
        assert iterate(system, 0.3, 1)[0] == pytest.approx(1 / 0.3 - 3)
        assert system.jacobians(np.array([[0.5]]))[0, 0, 0] == pytest.approx(-4.0)

    def test_escape(self):
        with pytest.raises(EscapeError) as info:
            iterate(gauss(), 0.5, 1)
        assert info.value.step == 1

    def test_negative_steps(self):
        with pytest.raises(ArgumentError):
            iterate(doubling(), 0.3, -1)

    def test_batch_escape(self):
        orbit, escaped_at = gauss().trajectory(np.array([[0.5], [0.3]]), 1)
        assert escaped_at.tolist() == [1, -1]
        assert np.isnan(orbit[1, 0, 0])
        assert orbit[1, 1, 0] == pytest.approx(1 / 0.3 - 3)

    def test_jitter_only_with_rng(self):
        system = doubling()
        points = np.array([[0.3], [0.7]])
        assert np.array_equal(system.step(points), system.apply(points))
        kicked = system.step(points, np.random.default_rng(0))
        assert np.all(np.abs(kicked - system.apply(points)) <= system.jitter)


class TestJacobians:
    @pytest.mark.parametrize("name", sorted(BUILTIN_SYSTEMS))
    def test_matches_finite_difference(self, name):
        system = BUILTIN_SYSTEMS[name]()
        points = _smooth_sample(name, np.random.default_rng(17))
        error, count = jacobian_defect(system, points)
        assert count >= 900
        assert error < 1e-4

    def test_cocycle_norms(self):
        norms, starred = cocycle_jacobian_norms(doubling(), 0.3, 3)
        assert norms == pytest.approx([2.0, 2.0, 2.0])
        assert starred == pytest.approx(8.0)

    def test_starred_floors_at_one(self):
        system = linear([[0.5]])
        norms, starred = cocycle_jacobian_norms(system, 1.0, 4)
        assert norms == pytest.approx([0.5] * 4)
        assert starred == 1.0


class TestExteriorAlgebra:
    def test_exterior_norm(self):
        assert exterior_norm(np.diag([2.0, 0.5])) == pytest.approx(2.0)
        assert exterior_norm(np.diag([2.0, 3.0])) == pytest.approx(6.0)
        assert exterior_norm(np.diag([0.5, 0.25])) == pytest.approx(0.5)

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_exterior_norm_matches_compound_minors(self, d):
        rng = np.random.default_rng(10 + d)
        for _ in range(100):
            A = rng.standard_normal((d, d)) * rng.uniform(0.1, 3.0)
            assert exterior_norm(A) == pytest.approx(_compound_exterior_norm(A), rel=1e-8)

    def test_exterior_norm_submultiplicative(self):
        rng = np.random.default_rng(21)
        for _ in range(1000):
            d = int(rng.integers(1, 6))
            A, B = rng.standard_normal((2, d, d))
            assert exterior_norm(A @ B) <= exterior_norm(A) * exterior_norm(B) * (1 + 1e-10)

    def test_mgs_qr(self):
        Z = np.random.default_rng(2).standard_normal((5, 3, 3))
        Q, R = mgs_qr(Z)
        assert np.allclose(Q @ R, Z)
        assert np.allclose(np.swapaxes(Q, 1, 2) @ Q, np.eye(3))
        assert np.all(np.diagonal(R, axis1=1, axis2=2) > 0)
        assert np.allclose(np.tril(R, -1), 0.0)

    def test_mgs_qr_degenerate(self):
        Z = np.array([[[1.0, 1.0], [0.0, 0.0]]])
        Q, R = mgs_qr(Z)
        assert R[0, 1, 1] == 0.0
        assert np.allclose(Q[0].T @ Q[0], np.eye(2))
        assert np.allclose(Q @ R, Z)

    def test_product_growth(self):
        value = exterior_norm_growth(product_doubling(), [0.3, 0.7], 3)
        assert value == pytest.approx(6 * math.log(2.0))

    def test_linear_growth_without_overflow(self):
        system = linear([[2.0, 0.0], [0.0, 0.5]])
        assert exterior_norm_growth(system, [0.0, 1.0], 2000) == pytest.approx(2000 * math.log(2.0))


class TestDistortion:
    def test_params_validation(self):
        with pytest.raises(ArgumentError):
            DistortionParams(alpha=1.0, C=2.0, a=2.0)
        with pytest.raises(ArgumentError):
            DistortionParams(alpha=0.5, C=1.0, a=2.0)

    def test_defaults(self):
        assert default_distortion_params(doubling()) == DistortionParams(0.99, 1.01, 1.01)
        assert default_distortion_params(gauss()) == DistortionParams(0.5, 100.0, 3.0)

    def test_constant_derivative_passes(self):
        system = doubling()
        report = check_distortion_A(system, default_distortion_params(system), SamplePlan(n_points=2000))
        assert report.passed
        assert report.max_ratio == 0.0
        assert report.n_pairs > 0

    def test_logistic_passes_generous_constants(self):
        report = check_distortion_A(logistic4(), DistortionParams(0.5, 100.0, 3.0), SamplePlan(n_points=5000))
        assert report.passed
        assert report.max_ratio < 0.05

    def test_logistic_falsified_by_tight_constants(self):
        def central(rng, n):
            return rng.uniform(0.3, 0.7, (n, 1))

        report = check_distortion_A(logistic4(), DistortionParams(0.5, 1.01, 1.01), SamplePlan(n_points=5000), sampler=central)
        assert not report.passed
        assert report.max_ratio > 1.0
        assert len(report.witnesses) == 5
        assert report.to_dict()["kind"] == "empirical-falsifier"

    def test_same_seed_same_report(self):
        params = DistortionParams(0.5, 100.0, 3.0)
        a = check_distortion_A(gauss(), params, SamplePlan(n_points=2000, seed=4))
        b = check_distortion_A(gauss(), params, SamplePlan(n_points=2000, seed=4))
        assert a.max_ratio == b.max_ratio
        assert a.n_pairs == b.n_pairs


class TestHelpers:
    def test_log_plus(self):
        assert np.allclose(log_plus(np.array([0.5, 2.0])), [0.0, math.log(2.0)])

    def test_per_application(self):
        assert per_application(4.0, 2) == 2.0
        assert math.isinf(per_application(float("inf"), 2))
