"""
mrkit测试
包入口、运行配置、随机流、客户端阶段封装与命令行
"""

import json

import numpy as np
import pytest

import mrkit
from mrkit import ArgumentError, ConfigError, MRClient, Settings, StageError
from mrkit.cli import EXIT_FATAL, build_parser, main
from mrkit.streams import StreamKeys, chunk_bounds, chunked_map


class TestPackage:
    def test_version(self):
        assert isinstance(mrkit.__version__, str)

    def test_public_api(self):
        for name in mrkit.__all__:
            assert hasattr(mrkit, name), name


class TestSettings:
    def test_defaults_valid(self):
        Settings().validate()

    def test_from_env(self):
        settings = Settings.from_env({"MRKIT_CHUNK_SIZE": "64", "MRKIT_GEOM_TOL": "1e-10"})
        assert settings.chunk_size == 64
        assert settings.geom_tol == 1e-10

    def test_from_env_bad_value(self):
        with pytest.raises(ConfigError):
            Settings.from_env({"MRKIT_BURN_IN": "many"})

    def test_replace_unknown(self):
        with pytest.raises(ConfigError):
            Settings().replace(workers=4)

    def test_replace_non_positive(self):
        with pytest.raises(ConfigError):
            Settings().replace(chunk_size=0)


class TestStreams:
    def test_same_labels_same_draws(self):
        a = StreamKeys(7).generator("stage", 3).random(5)
        b = StreamKeys(7).generator("stage", 3).random(5)
        assert np.array_equal(a, b)

    def test_labels_separate_streams(self):
        keys = StreamKeys(7)
        assert not np.array_equal(keys.generator("a").random(5), keys.generator("b").random(5))
        assert keys.generate_key("a") != StreamKeys(8).generate_key("a")

    def test_chunk_bounds(self):
        chunks = chunk_bounds(10, 4)
        assert [len(c) for c in chunks] == [4, 4, 2]
        assert chunks[-1].stop == 10

    def test_chunked_map_independent_of_workers(self):
        def draw(chunk, rng):
            return rng.random(len(chunk))

        keys = StreamKeys(11)
        serial = np.concatenate(chunked_map(draw, 1000, keys, "test", 64, workers=1))
        threaded = np.concatenate(chunked_map(draw, 1000, keys, "test", 64, workers=8))
        assert np.array_equal(serial, threaded)


class TestClient:
    def test_run_stage_wraps_toolkit_errors(self):
        client = MRClient(seed=1, settings=Settings())

        def fail():
            raise ArgumentError("bad")

        with pytest.raises(StageError) as info:
            client._run_stage("partition", fail, partial={"benchmark": "x"})
        assert info.value.stage == "partition"
        assert info.value.partial == {"benchmark": "x"}

    def test_run_stage_wraps_unknown_errors(self):
        client = MRClient(seed=1, settings=Settings())

        def fail():
            raise RuntimeError("boom")

        with pytest.raises(StageError) as info:
            client._run_stage("spectrum", fail)
        assert "未知错误" in info.value.message

    def test_run_stage_returns_result(self):
        client = MRClient(seed=1, debug=True, settings=Settings())
        assert client._run_stage("setup", lambda x: x + 1, 1, inputs={"x": 1}) == 2


class TestCli:
    def test_parse_verify(self):
        args = build_parser().parse_args(["verify", "doubling", "--seed", "7", "--format", "json,csv", "--workers", "8"])
        assert args.command == "verify"
        assert args.seed == 7
        assert args.workers == 8
        assert args.format == ["json", "csv"]

    def test_parse_sweep_grid(self):
        args = build_parser().parse_args(["sweep", "doubling", "--n", "2", "3", "--m", "1", "2"])
        assert args.n == [2, 3]
        assert args.m == [1, 2]
        assert args.l is None

    def test_unknown_format_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["verify", "doubling", "--format", "xml"])

    def test_unknown_benchmark_is_fatal(self):
        assert main(["verify", "no_such_benchmark"]) == EXIT_FATAL

    def test_missing_config_is_fatal(self, tmp_path):
        assert main(["check-conditions", str(tmp_path / "missing.json")]) == EXIT_FATAL

    def test_partition_command_prints_report(self, capsys):
        assert main(["partition", "doubling", "--seed", "3"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document["benchmark"] == "doubling"
        assert document["entropy"]["gap"] >= 0
