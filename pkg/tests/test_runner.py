import json
from pathlib import Path

import pytest

import runner
from cechkit.errors import ScenarioError

ROOT = Path(__file__).resolve().parents[1]
REGISTRY = str(ROOT / "experiments.json")


def run(*argv, out):
    return runner.main([*argv, "--out", str(out), "--registry", REGISTRY, "--workers", "1"])


def result(out, stem):
    return json.loads((Path(out) / f"{stem}.json").read_text())


class TestParams:
    def test_json_values(self):
        assert runner.parse_param("samples=4") == ("samples", 4)
        assert runner.parse_param("family={\"levels\": 1}") == ("family", {"levels": 1})

    def test_plain_string(self):
        assert runner.parse_param("coeffs=ZZ") == ("coeffs", "ZZ")

    def test_missing_equals(self):
        with pytest.raises(ScenarioError):
            runner.parse_param("samples")

    def test_hash_is_stable(self):
        a = runner.parameter_hash("model", {"b": 1, "a": 2}, 3)
        b = runner.parameter_hash("model", {"a": 2, "b": 1}, 3)
        assert a == b and len(a) == 16
        assert runner.parameter_hash("model", {"a": 2, "b": 1}, 4) != a


class TestRegistry:
    def test_every_plugin_loads(self):
        registry = runner.load_registry(REGISTRY)
        for command, entry in registry.items():
            plugin = runner.load_plugin(command, entry)
            assert plugin.name == command
            assert plugin.cfg["plugin"] == entry["plugin"]

    def test_missing_registry(self, tmp_path):
        with pytest.raises(ScenarioError):
            runner.load_registry(tmp_path / "none.json")

    def test_bad_plugin_path(self):
        with pytest.raises(ScenarioError):
            runner.load_plugin("x", {"plugin": "plugins.nowhere:Nothing"})


class TestExitCodes:
    def test_selftest(self, tmp_path):
        assert run("selftest", out=tmp_path) == 0
        body = result(tmp_path, "selftest")
        assert body["schema"] == "cechkit.result/1"
        assert body["result"]["ok"]
        assert (tmp_path / "selftest.csv").exists()
        assert (tmp_path / "selftest.stages.json").exists()

    def test_model_validate(self, tmp_path):
        assert run("model", "validate", "--seed", "3", out=tmp_path) == 0
        body = result(tmp_path, "model-validate")
        assert body["result"]["validation"]["ok"]
        assert body["seed"] == 3

    def test_missing_seed(self, tmp_path):
        assert run("model", "build", out=tmp_path) == 2
        assert (tmp_path / "model-build.stages.json").exists()

    def test_unknown_command(self, tmp_path):
        assert run("frobnicate", "--seed", "1", out=tmp_path) == 2

    def test_unknown_action(self, tmp_path):
        assert run("model", "frobnicate", "--seed", "1", out=tmp_path) == 2

    def test_nothing_to_run(self, tmp_path):
        assert run(out=tmp_path) == 2

    def test_malformed_scenario(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run("--scenario", str(bad), out=tmp_path) == 2

    def test_scenario_without_operation(self, tmp_path):
        bad = tmp_path / "empty.json"
        bad.write_text(json.dumps({"params": {}}))
        assert run("--scenario", str(bad), out=tmp_path) == 2

    def test_contract_failure_writes_error_record(self, tmp_path):
        code = run("model", "build", "--seed", "1", "--param",
                   "family={\"levels\": 2, \"ratio\": 0.5}", out=tmp_path)
        assert code == 1
        body = result(tmp_path, "model-build")
        assert body["result"]["error"]["code"] == "PACKING_FAILED"

    def test_nonvanish_two_punctures(self, tmp_path):
        assert run("nonvanish", "--punctures", "2", "--seed", "0", out=tmp_path) == 0
        body = result(tmp_path, "nonvanish")["result"]
        assert body["rank"] == 1 and body["reverify"]["ok"]


class TestScenarios:
    def test_scenario_and_command_together(self, tmp_path):
        scenario = str(ROOT / "scenarios" / "model_validate.json")
        assert run("--scenario", scenario, "model", "build", "--seed", "2", out=tmp_path) == 0
        assert (tmp_path / "model-validate.json").exists()
        assert (tmp_path / "model-build.json").exists()
        assert (tmp_path / "summary.csv").exists()

    def test_scenario_seed_from_file(self, tmp_path):
        scenario = str(ROOT / "scenarios" / "model_validate.json")
        assert run("--scenario", scenario, out=tmp_path) == 0
        assert result(tmp_path, "model-validate")["seed"] == 3

    def test_duplicate_stems(self, tmp_path):
        scenario = str(ROOT / "scenarios" / "model_validate.json")
        assert run("--scenario", scenario, "--scenario", scenario, out=tmp_path) == 0
        assert (tmp_path / "model-validate-1.json").exists()

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("model", "build", "--seed", "5", out=a) == 0
        assert run("model", "build", "--seed", "5", out=b) == 0
        assert (a / "model-build.json").read_bytes() == (b / "model-build.json").read_bytes()
