"""
基准注册表、验证流水线、报告输出与命令行退出码测试
"""

import csv
import json
import math
import types

import numpy as np
import pytest

from mrkit import ArgumentError, ConfigError, MRClient, Settings, StageError
from mrkit.cli import EXIT_FATAL, EXIT_OK, main
from mrkit.entropy import block_entropy
from mrkit.exceptions import EmitError
from mrkit.lyapunov import positive_sum_integral
from mrkit.partition import check_l1
from mrkit.registry import (
    BENCHMARKS,
    MIN_EPSILON_LOG2,
    build_measure,
    build_reference,
    build_system,
    get_benchmark,
    level_params,
    load_benchmark_config,
    resolve,
)
from mrkit.report import SUMMARY_COLUMNS, check_schema, emit, jsonable, partition_svg, without_timestamp
from mrkit.system import iterate
from mrkit.verification import SweepReport, VerificationReport, VerificationService, row_violated

TINY_BUDGETS = {
    "distortion_pairs": 500,
    "spectrum_orbits": 10,
    "horizon": 200,
    "partition_samples": 10_000,
    "entropy_orbits": 2000,
    "t_max": 4,
    "decomposition_orbits": 2000,
    "survey_cells": 3,
    "survey_probes": 1000,
}


def _write_config(path, **document):
    document.setdefault("schema_version", 1)
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def _tiny_spec(tmp_path, **extra):
    config = _write_config(tmp_path / "tiny.json", extends="doubling", budgets=TINY_BUDGETS, seed=7, **extra)
    return load_benchmark_config(config)


class TestRegistry:
    @pytest.mark.parametrize("name", sorted(BENCHMARKS))
    def test_builtin_benchmarks_validate(self, name):
        spec = get_benchmark(name)
        spec.validate()
        assert spec.answers["entropy"] == pytest.approx(spec.answers["positive_sum"])

    @pytest.mark.parametrize("name", sorted(BENCHMARKS))
    def test_level_params_feasible(self, name):
        spec = get_benchmark(name)
        system = build_system(spec)
        params = level_params(spec, system)
        assert check_l1(params, system.dim).ok
        assert params.s_max >= params.n
        assert params.s_max == params.n or params.l1 * params.s_max * system.dim <= -MIN_EPSILON_LOG2

    def test_unknown_benchmark(self):
        with pytest.raises(ConfigError):
            get_benchmark("no_such_benchmark")

    def test_resolve_name(self):
        assert resolve("gauss").name == "gauss"


class TestConfigFiles:
    def test_extends_builtin(self, tmp_path):
        spec = _tiny_spec(tmp_path)
        assert spec.name == "doubling"
        assert spec.seed == 7
        assert spec.budgets.horizon == 200
        assert spec.budgets.invariance is None
        assert spec.reference == BENCHMARKS["doubling"].reference

    def test_resolve_path(self, tmp_path):
        config = _write_config(tmp_path / "seeded.json", extends="tent", seed=3)
        assert resolve(str(config)).seed == 3

    def test_polynomial_system(self, tmp_path):
        config = _write_config(
            tmp_path / "logistic_poly.json",
            system={"polynomial": {"coefficients": [0.0, 4.0, -4.0]}, "domain": {"interval": [0.0, 1.0]}},
            measure={"density": "arcsine"},
        )
        spec = load_benchmark_config(config)
        assert spec.name == "logistic_poly"
        assert iterate(build_system(spec), 0.25, 1)[0] == pytest.approx(0.75)

    def test_schema_version(self, tmp_path):
        config = _write_config(tmp_path / "future.json", schema_version=2, extends="doubling")
        with pytest.raises(ConfigError):
            load_benchmark_config(config)

    def test_invalid_json(self, tmp_path):
        config = tmp_path / "broken.json"
        config.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_benchmark_config(config)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_benchmark_config(tmp_path / "missing.json")

    def test_requires_system_and_measure(self, tmp_path):
        config = _write_config(tmp_path / "bare.json", measure={"density": "uniform"})
        with pytest.raises(ConfigError):
            load_benchmark_config(config)

    def test_unknown_system(self, tmp_path):
        config = _write_config(tmp_path / "unknown.json", system={"builtin": "henon"}, measure={"density": "uniform"})
        with pytest.raises(ConfigError):
            load_benchmark_config(config)

    def test_bad_budgets(self, tmp_path):
        with pytest.raises(ConfigError):
            load_benchmark_config(_write_config(tmp_path / "a.json", extends="doubling", budgets={"nope": 1}))
        with pytest.raises(ConfigError):
            load_benchmark_config(_write_config(tmp_path / "b.json", extends="doubling", budgets={"horizon": 0}))


class TestReportOutput:
    def test_jsonable(self):
        document = jsonable({"a": float("nan"), "b": [float("inf"), -math.inf], "c": np.int64(3), "d": np.array([1.5])})
        assert document == {"a": None, "b": ["inf", "-inf"], "c": 3, "d": [1.5]}

    def test_empty_report_matches_schema(self):
        document = jsonable(VerificationReport("doubling", 7).to_dict())
        assert check_schema(document) == []
        assert document["margin"] is None
        assert document["violated"] is False
        assert check_schema({})

    def test_emit_json_and_summary(self, tmp_path):
        written = emit(VerificationReport("doubling", 7), ["json", "csv"], tmp_path)
        assert sorted(p.name for p in written) == ["doubling.json", "doubling_summary.csv"]
        with (tmp_path / "doubling_summary.csv").open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == list(SUMMARY_COLUMNS)
        assert rows[1][:2] == ["doubling", "7"]

    def test_emit_empty_sweep(self, tmp_path):
        written = emit(SweepReport("doubling", 7), ["json", "csv"], tmp_path, prefix="grid")
        assert sorted(p.name for p in written) == ["grid.json", "grid_sweep.csv"]

    def test_emit_into_file_fails(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("", encoding="utf-8")
        with pytest.raises(EmitError):
            emit(VerificationReport("doubling", 7), ["json"], blocker)

    def test_emit_unknown_format(self, tmp_path):
        with pytest.raises(ArgumentError):
            emit(VerificationReport("doubling", 7), ["xml"], tmp_path)

    def test_partition_svg(self, tmp_path):
        spec = _tiny_spec(tmp_path)
        client = MRClient(seed=spec.seed, settings=Settings(burn_in=10))
        bench = client.workbench(spec)
        partition = client.build_partition(bench, bench.level_params())
        path = tmp_path / "cells.svg"
        count = partition_svg(partition, path)
        assert count == partition.n_cells
        assert path.read_text(encoding="utf-8").count('id="cell-') == count

    def test_partition_svg_rejects_three_dimensions(self, tmp_path):
        with pytest.raises(ArgumentError):
            partition_svg(types.SimpleNamespace(dim=3), tmp_path / "cube.svg")

    def test_row_violated(self):
        row = {"status": "ok", "margin": -0.5, "rhs_stderr": 0.01, "block_rate": 1.0, "block_stderr": 0.01}
        assert row_violated(row)
        assert not row_violated(dict(row, margin=-0.01))
        assert not row_violated(dict(row, status="failed"))

class TestBenchmarkAnswers:
    @staticmethod
    def _parts(name, settings):
        spec = get_benchmark(name)
        system = build_system(spec)
        return spec, system, build_measure(spec, system, settings), build_reference(spec, system)

    def test_noncompact_gauss_matches_gauss(self):
        settings = Settings(burn_in=100)
        spec, gauss_system, gauss_mu, gauss_ref = self._parts("gauss", settings)
        _, system, mu, reference = self._parts("gauss_noncompact", settings)

        gauss_rhs = positive_sum_integral(gauss_system, gauss_mu, 2000, 100, seed=1, settings=settings)
        rhs = positive_sum_integral(system, mu, 2000, 100, seed=2, settings=settings)
        assert rhs.estimate == pytest.approx(spec.answers["positive_sum"], rel=0.02)
        assert rhs.estimate == pytest.approx(gauss_rhs.estimate, rel=0.02)

        gauss_block = block_entropy(gauss_system, gauss_mu, gauss_ref, 4, 50_000, seed=3, settings=settings)
        block = block_entropy(system, mu, reference, 4, 50_000, seed=4, settings=settings)
        # 两个参考分划经共轭一一对应，逐 t 的熵增量应一致
        for t in (1, 2, 3):
            assert block.rows[t - 1]["increment"] == pytest.approx(gauss_block.rows[t - 1]["increment"], rel=0.02)

    def test_logistic_positive_sum(self):
        settings = Settings(burn_in=100)
        spec, system, mu, _ = self._parts("logistic4", settings)
        rhs = positive_sum_integral(system, mu, 2000, 100, seed=1, settings=settings)
        assert rhs.estimate == pytest.approx(math.log(2.0), rel=0.02)
        assert rhs.estimate == pytest.approx(spec.answers["positive_sum"], rel=0.02)



class TestVerification:
    @pytest.fixture(scope="class")
    def report(self, tmp_path_factory):
        config = _write_config(
            tmp_path_factory.mktemp("verify") / "doubling.json",
            extends="doubling",
            budgets=dict(TINY_BUDGETS, entropy_orbits=20_000, t_max=6),
            seed=7,
        )
        spec = load_benchmark_config(config)
        return VerificationService(MRClient(seed=spec.seed, settings=Settings(burn_in=10))).run_verification(spec)

    def test_margin(self, report):
        assert report.status == "complete"
        assert report.rhs["estimate"] == pytest.approx(math.log(2.0))
        assert abs(report.margin) < 0.03
        assert not report.violated
        assert report.ok

    def test_checks(self, report):
        assert report.checks["invariance"]
        assert report.checks["condition_a"]
        assert report.checks["condition_b"] == "pass"
        assert report.checks["partition_entropy_within_bound"]
        assert report.checks["overlap_within_bound"]
        assert 1 <= report.partition["overlap"]["worst"] <= report.partition["overlap"]["bound"]
        assert report.lhs["source"] == "block:dyadic(1)"

    def test_report_matches_schema(self, report):
        assert check_schema(jsonable(report.to_dict())) == []
        assert {"spectrum", "entropy_vs_t"} <= set(report.tables)

    def test_workers_do_not_change_report(self, tmp_path):
        spec = _tiny_spec(tmp_path)
        documents = []
        for workers in (1, 8):
            client = MRClient(seed=spec.seed, workers=workers, settings=Settings(burn_in=10))
            report = VerificationService(client).run_verification(spec)
            documents.append(without_timestamp(jsonable(report.to_dict())))
        assert documents[0] == documents[1]

    def test_stage_failure_carries_partial_report(self, tmp_path):
        spec = _tiny_spec(tmp_path, level={"m": 1, "n": 2, "l": 0, "l1": 1, "s_max": 24})
        service = VerificationService(MRClient(seed=spec.seed, settings=Settings(burn_in=10)))
        with pytest.raises(StageError) as info:
            service.run_verification(spec)
        assert info.value.stage == "partition"
        assert info.value.partial["status"] == "partial"
        assert info.value.partial["failed_stage"] == "partition"
        assert "estimate" in info.value.partial["rhs"]

    def test_sweep(self, tmp_path):
        spec = _tiny_spec(tmp_path)
        service = VerificationService(MRClient(seed=spec.seed, settings=Settings(burn_in=10)))
        sweep = service.sweep(spec, {"n": [2], "l": [0, 1], "m": [1]})
        assert [(row["n"], row["l"], row["m"]) for row in sweep.rows] == [(2, 0, 1), (2, 1, 1)]
        assert all(row["status"] == "ok" for row in sweep.rows)
        assert sweep.annotations["entropy_nondecreasing_in_l"]["n=2,m=1"]
        assert sweep.annotations["failed_cells"] == 0

    def test_empty_sweep_grid(self, tmp_path):
        spec = _tiny_spec(tmp_path)
        with pytest.raises(ArgumentError):
            VerificationService(MRClient(seed=spec.seed)).sweep(spec, {"n": [], "l": [0], "m": [1]})


class TestCommandLine:
    def test_verify_exit_ok(self, tmp_path, capsys):
        config = _write_config(tmp_path / "tiny.json", extends="doubling", budgets=TINY_BUDGETS, seed=7)
        out = tmp_path / "out"
        assert main(["verify", str(config), "--out", str(out), "--format", "json,csv"]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["benchmark"] == "doubling"
        assert (out / "doubling.json").is_file()
        assert (out / "doubling_summary.csv").is_file()

    def test_stage_failure_writes_partial(self, tmp_path):
        config = _write_config(
            tmp_path / "broken.json",
            extends="doubling",
            budgets=TINY_BUDGETS,
            level={"m": 1, "n": 2, "l": 0, "l1": 1, "s_max": 24},
        )
        out = tmp_path / "out"
        assert main(["verify", str(config), "--out", str(out)]) == EXIT_FATAL
        partial = json.loads((out / "broken_partial.json").read_text(encoding="utf-8"))
        assert partial["status"] == "partial"
        assert check_schema(partial) == []
