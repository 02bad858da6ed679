"""
不变测度、积分与条件 (B) 测试
"""

import math

import numpy as np
import pytest

from mrkit.exceptions import ArgumentError, DivergenceError, DomainError, EscapeError
from mrkit.geometry import RegularityProfile
from mrkit.measure import (
    AnalyticDensity,
    EmpiricalMeasure,
    arcsine,
    check_invariance,
    condition_B_report,
    default_test_functions,
    gauss_density,
    integrate,
    noncompact_gauss_density,
    product_uniform,
    sample,
    uniform,
)
from mrkit.quadrature import integrate_interval
from mrkit.systems import doubling, gauss, product_doubling, rotation

GAUSS_LOG_DERIVATIVE = math.pi ** 2 / (6 * math.log(2.0))


class TestDensities:
    def test_pdf_vanishes_outside_support(self):
        mu = gauss_density()
        assert mu.pdf(np.array([-0.5, 1.5])).tolist() == [0.0, 0.0]
        assert mu.pdf(np.array([0.0]))[0] == 0.0

    def test_normalization(self):
        mu = AnalyticDensity("linear", lambda x: x, 0.0, 1.0)
        assert mu.normalization == pytest.approx(0.5, rel=1e-8)
        assert mu.pdf(np.array([0.5]))[0] == pytest.approx(1.0)

    def test_tabulated_ppf(self):
        mu = AnalyticDensity("linear", lambda x: x, 0.0, 1.0)
        assert mu.ppf(np.array([0.25, 0.81])) == pytest.approx([0.5, 0.9], abs=1e-6)

    def test_not_normalizable(self):
        with pytest.raises(DomainError):
            AnalyticDensity("pole", lambda x: 1.0 / x, 0.0, 1.0)

    def test_samples_stay_inside(self):
        points = sample(noncompact_gauss_density(), 1000, seed=2)
        assert points.shape == (1000, 1)
        assert np.all(points > 1.0)

    def test_sample_reproducible(self):
        a = sample(arcsine(), 50, seed=9)
        b = sample(arcsine(), 50, seed=9)
        assert np.array_equal(a, b)

    def test_sample_count(self):
        with pytest.raises(ArgumentError):
            sample(uniform(), 0)

    def test_product_sample_shape(self):
        assert sample(product_uniform(3), 10).shape == (10, 3)


class TestEmpirical:
    def test_empty(self):
        with pytest.raises(DomainError):
            EmpiricalMeasure("empty", np.empty((0, 1)))

    def test_from_orbit(self):
        mu = EmpiricalMeasure.from_orbit(doubling(), 0.3, 1000, burn_in=100, rng=np.random.default_rng(1))
        assert mu.points.shape == (1000, 1)
        assert np.all((mu.points > 0) & (mu.points < 1))

    def test_from_orbit_without_shadowing_escapes(self):
        with pytest.raises(EscapeError):
            EmpiricalMeasure.from_orbit(doubling(), 0.3, 100, burn_in=100)

    def test_from_csv(self, tmp_path):
        path = tmp_path / "orbit.csv"
        np.savetxt(path, np.array([[0.1, 0.2], [0.3, 0.4]]), delimiter=",")
        mu = EmpiricalMeasure.from_file(path, dim=2)
        assert mu.dim == 2
        assert mu.name == "orbit"
        with pytest.raises(DomainError):
            EmpiricalMeasure.from_file(path, dim=1)

    def test_from_binary(self, tmp_path):
        path = tmp_path / "orbit.f8"
        np.asarray([0.1, 0.2, 0.3], dtype="<f8").tofile(path)
        mu = EmpiricalMeasure.from_file(path)
        assert mu.points[:, 0].tolist() == [0.1, 0.2, 0.3]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DomainError):
            EmpiricalMeasure.from_file(tmp_path / "missing.csv")


class TestIntegrate:
    def test_quadrature_polynomial(self):
        estimate = integrate(uniform(), lambda p: p[:, 0] ** 2)
        assert estimate.method == "quadrature"
        assert estimate.value == pytest.approx(1 / 3, abs=1e-10)

    def test_quadrature_log_singularity(self):
        estimate = integrate(uniform(), lambda p: -np.log(p[:, 0]))
        assert estimate.finite
        assert estimate.value == pytest.approx(1.0, abs=1e-6)

    def test_divergence_flagged(self):
        estimate = integrate(uniform(), lambda p: 1.0 / p[:, 0])
        assert estimate.diverged
        assert not estimate.finite
        assert integrate_interval(lambda x: 1.0 / x, 0.0, 1.0).diverged

    def test_interval_infinite_limits(self):
        result = integrate_interval(lambda x: np.exp(-x), 0.0, np.inf)
        assert result.value == pytest.approx(1.0, abs=1e-8)
        assert not result.diverged
        assert len(result.cutoffs) == 4
        whole_line = integrate_interval(lambda x: 1.0 / (1.0 + x ** 2), -np.inf, np.inf)
        assert whole_line.value == pytest.approx(math.pi, abs=1e-8)
        assert integrate_interval(lambda x: 1.0 / x, 1.0, np.inf).diverged

    def test_interval_breakpoints(self):
        def step(x):
            return np.where(x < 0.3, 1.0, 2.0)

        result = integrate_interval(step, 0.0, 1.0, breakpoints=[0.3])
        assert result.value == pytest.approx(1.7, abs=1e-9)
        single = integrate_interval(step, 0.0, 1.0, breakpoints=[0.3], detect_divergence=False)
        assert single.value == pytest.approx(1.7, abs=1e-9)
        assert single.cutoffs == []
        assert single.nodes > 0

    def test_interval_rejects_empty_range(self):
        with pytest.raises(ArgumentError):
            integrate_interval(lambda x: x, 1.0, 1.0)

    def test_noncompact_log(self):
        estimate = integrate(noncompact_gauss_density(), lambda p: 2 * np.log(p[:, 0]))
        assert estimate.value == pytest.approx(GAUSS_LOG_DERIVATIVE, abs=1e-3)

    def test_monte_carlo(self):
        estimate = integrate(product_uniform(2), lambda p: p[:, 0] + p[:, 1], budget=100_000, seed=3)
        assert estimate.method == "monte-carlo"
        assert estimate.value == pytest.approx(1.0, abs=max(0.01, 4 * estimate.uncertainty))
        assert estimate.uncertainty > 0

    def test_monte_carlo_uncertainty_scaling(self):
        ratios = []
        for seed in range(10):
            coarse = integrate(product_uniform(2), lambda p: p[:, 0] + p[:, 1], budget=20_000, seed=seed)
            fine = integrate(product_uniform(2), lambda p: p[:, 0] + p[:, 1], budget=40_000, seed=seed)
            ratios.append(coarse.uncertainty / fine.uncertainty)
        assert all(1.2 <= ratio <= 1.7 for ratio in ratios)
        assert np.mean(ratios) == pytest.approx(math.sqrt(2.0), rel=0.02)

    def test_empirical_average_uses_all_points(self):
        mu = EmpiricalMeasure("grid", np.arange(1, 101, dtype=float).reshape(-1, 1))
        estimate = integrate(mu, lambda p: p[:, 0], budget=100)
        assert estimate.method == "empirical-average"
        assert estimate.value == pytest.approx(50.5)

    def test_budget_floor(self):
        with pytest.raises(ArgumentError):
            integrate(uniform(), lambda p: p[:, 0], budget=10)


class TestInvariance:
    def test_default_test_functions(self):
        assert len(default_test_functions(doubling().domain)) == 8
        assert len(default_test_functions(product_doubling().domain)) == 17

    def test_doubling_lebesgue(self):
        report = check_invariance(uniform(), doubling(), [("cos", lambda p: np.cos(2 * np.pi * p[:, 0]))])
        assert report.method == "quadrature"
        assert report.max_defect <= 1e-6
        assert report.passed

    def test_gauss_measure(self):
        moments = [(f"moment^{k}", lambda p, k=k: (2 * p[:, 0] - 1) ** k) for k in (1, 2, 3)]
        report = check_invariance(gauss_density(), gauss(), moments)
        assert report.max_defect <= 5e-3

    def test_lebesgue_not_invariant_for_gauss(self):
        moments = [("moment^1", lambda p: 2 * p[:, 0] - 1)]
        report = check_invariance(uniform(), gauss(), moments)
        assert not report.passed

    def test_monte_carlo_failure(self):
        mu = EmpiricalMeasure("atom", np.full((500, 1), 0.1))
        report = check_invariance(mu, rotation(), [("step", lambda p: np.tanh((p[:, 0] - 0.5) / 0.05))], budget=500)
        assert report.method == "monte-carlo"
        assert not report.passed
        assert report.max_defect > 1.0


class TestConditionB:
    def test_doubling(self):
        report = condition_B_report(uniform(), doubling(), RegularityProfile.trivial())
        assert report.status == "pass"
        assert report.components["log_d0"].value == pytest.approx(1 + math.log(2.0), abs=1e-4)
        assert report.components["log_plus_derivative"].value == pytest.approx(math.log(2.0), abs=1e-8)
        assert report.components["log_rho"].value == pytest.approx(0.0, abs=1e-12)
        assert report.maximum.value >= report.components["log_d0"].value - 1e-6
        report.require_finite()

    def test_gauss_derivative(self):
        report = condition_B_report(gauss_density(), gauss(), RegularityProfile.trivial())
        assert report.components["log_plus_derivative"].value == pytest.approx(GAUSS_LOG_DERIVATIVE, rel=0.01)

    def test_product_monte_carlo(self):
        report = condition_B_report(product_uniform(2), product_doubling(), RegularityProfile.trivial(), budget=20_000)
        assert report.method == "monte-carlo"
        assert report.status == "pass"

    def test_atom_on_boundary_fails(self):
        mu = EmpiricalMeasure("edge", np.array([[0.0], [0.25], [0.5]]))
        report = condition_B_report(mu, doubling(), RegularityProfile.trivial(), budget=100)
        assert report.status == "fail"
        assert report.failed_component == "log_d0"
        with pytest.raises(DivergenceError):
            report.require_finite()
