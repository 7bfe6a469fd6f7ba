import json

import pandas as pd
import pytest

from m4nls.cli.router import cli_router
from m4nls.config.settings import settings
from m4nls.main import main
from m4nls.models.schemas import RunManifest
from m4nls.services.spectral_core import Field, make_grid
from m4nls.utils.config_loader import parse_config, unflatten
from m4nls.utils.errors import ConfigError
from m4nls.utils.file_handler import RunDirectory, save_field
from m4nls.utils.logger import configure_logger
from tests.conftest import exact_profile_values


EXACT = {"gamma": 1.0, "beta": 5.0, "alpha": 4.0, "sigma": 1.0}


def write_config(directory, payload) -> str:
    path = directory / "run.json"
    text = payload if isinstance(payload, str) else json.dumps(payload)
    path.write_text(text, encoding="utf-8")
    return str(path)


def manifest_of(run_dir) -> RunManifest:
    return RunDirectory.load_manifest(run_dir)


class TestParseConfig:
    def test_defaults(self, tmp_path):
        config = parse_config(write_config(tmp_path, dict(EXACT, command="ground-state")))
        assert config.solver.tol == 1e-10
        assert config.solver.max_iter == 2000
        assert config.n == 256
        assert config.dim == 1
        assert config.params().alpha == 4.0

    def test_dotted_keys(self, tmp_path):
        payload = dict(EXACT, command="evolve", **{"experiment.t_end": 0.5, "solver.tol": 1e-8})
        config = parse_config(write_config(tmp_path, payload))
        assert config.experiment.t_end == 0.5
        assert config.solver.tol == 1e-8

    def test_invalid_value_names_the_key(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            parse_config(write_config(tmp_path, dict(EXACT, command="ground-state", sigma=-1.0)))
        assert info.value.key == "sigma"

    def test_duplicate_key(self, tmp_path):
        text = '{"command": "ground-state", "gamma": 1, "gamma": 2, "beta": 5, "alpha": 4, "sigma": 1}'
        with pytest.raises(ConfigError, match="duplicate key 'gamma'"):
            parse_config(write_config(tmp_path, text))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            parse_config(write_config(tmp_path, dict(EXACT, command="ground-state", **{"solver.bogus": 1})))
        assert info.value.key == "solver.bogus"

    def test_odd_resolution(self, tmp_path):
        with pytest.raises(ConfigError, match="even"):
            parse_config(write_config(tmp_path, dict(EXACT, command="ground-state", n=255)))

    def test_command_requirements(self, tmp_path):
        with pytest.raises(ConfigError, match="input_field is required"):
            parse_config(write_config(tmp_path, dict(EXACT, command="verify")))
        with pytest.raises(ConfigError, match="experiment.mu is required"):
            parse_config(write_config(tmp_path, dict(EXACT, command="mass-min")))

    def test_missing_file_and_bad_json(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "absent.json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(write_config(tmp_path, "{"))
        with pytest.raises(ConfigError, match="JSON object"):
            parse_config(write_config(tmp_path, "[1, 2]"))

    def test_relative_paths_follow_the_config(self, tmp_path):
        payload = dict(EXACT, command="verify", input_field="u.m4nl")
        config = parse_config(write_config(tmp_path, payload))
        assert config.input_field == tmp_path / "u.m4nl"

    def test_unflatten_conflicts(self):
        assert unflatten({"a.b": 1, "a.c": 2}) == {"a": {"b": 1, "c": 2}}
        with pytest.raises(ConfigError):
            unflatten({"a": 1, "a.b": 2})
        with pytest.raises(ConfigError, match="malformed"):
            unflatten({"a..b": 1})


class TestMain:
    def test_every_command_is_routed(self):
        assert set(cli_router.commands) == {
            "ground-state", "mass-min", "spectrum", "stability-condition", "evolve",
            "stability-experiment", "decay-fit", "critical-mass", "gamma-limit",
            "shoot-1d", "verify", "alpha-chart",
        }

    def test_missing_config_flag(self):
        assert main([]) == 1

    def test_bad_thread_count(self, tmp_path):
        config = write_config(tmp_path, dict(EXACT, command="ground-state"))
        assert main(["--config", config, "--threads", "0"]) == 1

    def test_invalid_config_exits_with_one(self, tmp_path):
        config = write_config(tmp_path, dict(EXACT, command="ground-state", n=255))
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == 1

    def test_verify_stored_exact_profile(self, tmp_path):
        grid = make_grid(1, 512, 80.0)
        save_field(tmp_path / "u.m4nl", Field(grid, exact_profile_values(grid.coords[0])))
        config = write_config(tmp_path, dict(EXACT, command="verify", input_field="u.m4nl"))
        out = tmp_path / "out"

        assert main(["--config", config, "--out", str(out)]) == 0
        manifest = manifest_of(out)
        assert manifest.status == "ok"
        assert manifest.flags["failed_checks"] == []
        assert all(RunDirectory.verify_manifest(out).values())
        assert pd.read_csv(out / "identity.csv")["passed"].all()

    def test_verify_rejects_a_scaled_profile(self, tmp_path):
        grid = make_grid(1, 512, 80.0)
        save_field(tmp_path / "u.m4nl", Field(grid, 1.1 * exact_profile_values(grid.coords[0])))
        config = write_config(tmp_path, dict(EXACT, command="verify", input_field="u.m4nl"))
        out = tmp_path / "out"

        assert main(["--config", config, "--out", str(out)]) == 2
        manifest = manifest_of(out)
        assert manifest.status == "failed"
        assert "IdentityCheckError" in manifest.message
        assert (out / "identity.csv").exists()

    def test_symbol_violation_fails_the_run(self, tmp_path):
        payload = {"command": "ground-state", "gamma": 1.0, "beta": -3.0, "alpha": 1.0, "sigma": 1.0, "L": 40.0}
        out = tmp_path / "out"
        assert main(["--config", write_config(tmp_path, payload), "--out", str(out)]) == 2
        manifest = manifest_of(out)
        assert manifest.status == "failed"
        assert manifest.exit_code == 2
        assert "SymbolViolationError" in manifest.message

    def test_evolve_flags_possible_blow_up(self, tmp_path):
        payload = {
            "command": "evolve", "gamma": 1.0, "beta": 1.0, "sigma": 5.0, "n": 64, "L": 20.0,
            "experiment.t_end": 0.1, "experiment.dt": 1e-3,
        }
        out = tmp_path / "out"
        assert main(["--config", write_config(tmp_path, payload), "--out", str(out)]) == 0
        manifest = manifest_of(out)
        assert manifest.flags["blow_up_possible"] is True
        assert manifest.flags["initial_state"] == "gaussian"
        assert manifest.flags["mass_drift"] < 1e-10
        assert set(manifest.outputs) == {"trace.csv", "final.m4nl"}

    def test_ground_state_outputs_are_deterministic(self, tmp_path):
        payload = dict(EXACT, command="ground-state", n=256, L=80.0)
        config = write_config(tmp_path, payload)
        first, second = tmp_path / "one", tmp_path / "two"
        assert main(["--config", config, "--out", str(first)]) == 0
        assert main(["--config", config, "--out", str(second)]) == 0
        for name in ("summary.csv", "profile.csv", "profile.m4nl"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert manifest_of(first).outputs == manifest_of(second).outputs

    def test_shoot_writes_the_trajectory(self, tmp_path):
        payload = dict(EXACT, command="shoot-1d", **{
            "experiment.u0": 1.0, "experiment.upp0": -0.5, "experiment.x_max": 2.0, "experiment.step": 0.01,
        })
        out = tmp_path / "out"
        assert main(["--config", write_config(tmp_path, payload), "--out", str(out)]) == 0
        trajectory = pd.read_csv(out / "trajectory.csv")
        assert list(trajectory.columns) == ["x", "u", "up", "upp", "uppp", "H"]
        assert trajectory.x.iloc[0] == 0.0
        assert "outcome" in manifest_of(out).flags


def test_logger_reconfiguration_replaces_handlers(tmp_path):
    try:
        package_logger = configure_logger(tmp_path, console_level="warning")
        package_logger.info("moved")
        assert len(package_logger.handlers) == 2
        assert (tmp_path / "m4nls.log").exists()
    finally:
        configure_logger(settings.log_dir)
