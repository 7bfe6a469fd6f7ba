import json

import numpy as np
import pytest

from m4nls.models.schemas import RunManifest
from m4nls.services.spectral_core import Field, make_grid
from m4nls.utils.errors import FieldFormatError
from m4nls.utils.file_handler import HEADER, RunDirectory, field_frame, load_field, save_field

hypothesis = pytest.importorskip("hypothesis")
from hypothesis import given, settings, strategies as st  # noqa: E402


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 31), complex_values=st.booleans(), dim=st.sampled_from([1, 2]))
def test_field_file_is_bitwise_exact(tmp_path_factory, seed, complex_values, dim):
    grid = make_grid(dim, 16, 7.5)
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(grid.shape)
    if complex_values:
        values = values + 1j * rng.standard_normal(grid.shape)
    path = tmp_path_factory.mktemp("fields") / "u.m4nl"
    save_field(path, Field(grid, values))

    loaded = load_field(path)
    assert loaded.grid.matches(grid)
    assert loaded.values.dtype == values.dtype
    assert loaded.values.tobytes() == values.tobytes()


class TestCorruptFiles:
    @pytest.fixture
    def stored(self, tmp_path):
        path = tmp_path / "u.m4nl"
        save_field(path, Field(make_grid(1, 16, 4.0), np.arange(16, dtype=float)))
        return path

    def test_bad_magic(self, stored):
        data = bytearray(stored.read_bytes())
        data[:4] = b"XXXX"
        stored.write_bytes(bytes(data))
        with pytest.raises(FieldFormatError, match="bad magic"):
            load_field(stored)

    def test_truncated_payload(self, stored):
        stored.write_bytes(stored.read_bytes()[:-8])
        with pytest.raises(FieldFormatError, match="truncated payload"):
            load_field(stored)

    def test_truncated_header(self, stored):
        stored.write_bytes(stored.read_bytes()[: HEADER.size - 1])
        with pytest.raises(FieldFormatError, match="truncated header"):
            load_field(stored)

    def test_version_mismatch(self, stored):
        data = bytearray(stored.read_bytes())
        data[4:8] = (99).to_bytes(4, "little")
        stored.write_bytes(bytes(data))
        with pytest.raises(FieldFormatError, match="version mismatch"):
            load_field(stored)

    def test_trailing_bytes(self, stored):
        stored.write_bytes(stored.read_bytes() + b"\0" * 8)
        with pytest.raises(FieldFormatError, match="longer"):
            load_field(stored)


class TestFieldFrame:
    def test_real_1d(self):
        grid = make_grid(1, 16, 4.0)
        frame = field_frame(Field(grid, np.ones(16)))
        assert list(frame.columns) == ["x", "u"]
        assert len(frame) == 16

    def test_complex_2d(self):
        grid = make_grid(2, 16, 4.0)
        frame = field_frame(Field(grid, np.ones(grid.shape, dtype=complex)))
        assert list(frame.columns) == ["x1", "x2", "re", "im"]
        assert len(frame) == 256


class TestRunDirectory:
    def _manifest(self, **kwargs) -> RunManifest:
        fields = dict(
            config={}, version="test", command="ground-state", determinism_note="", threads=1,
            started_at="2024-01-01T00:00:00Z", wall_time_s=0.0, status="ok", exit_code=0, message="",
        )
        fields.update(kwargs)
        return RunManifest(**fields)

    def test_tables_are_deterministic(self, tmp_path):
        rows = [{"a": 0.1, "b": 1.0 / 3.0}, {"a": 2.0, "b": -1e-300}]
        first = RunDirectory("test", tmp_path / "one").save_table("t.csv", rows)
        second = RunDirectory("test", tmp_path / "two").save_table("t.csv", rows)
        assert first.read_bytes() == second.read_bytes()
        assert b"\r\n" not in first.read_bytes()

    def test_table_keeps_full_precision(self, tmp_path):
        path = RunDirectory("test", tmp_path).save_table("t.csv", [{"v": 1.0 / 3.0}])
        assert float(path.read_text().splitlines()[1]) == 1.0 / 3.0

    def test_manifest_lists_every_output(self, tmp_path):
        run_dir = RunDirectory("ground-state", tmp_path)
        run_dir.save_table("summary.csv", [{"x": 1.0}])
        run_dir.save_json("report.json", {"value": 2})
        run_dir.save_field("u.m4nl", Field(make_grid(1, 16, 4.0), np.zeros(16)))
        run_dir.write_manifest(self._manifest(flags={"converged": True}))

        checks = RunDirectory.verify_manifest(tmp_path)
        assert set(checks) == {"summary.csv", "report.json", "u.m4nl"}
        assert all(checks.values())
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["flags"] == {"converged": True}

    def test_tampered_output_fails_verification(self, tmp_path):
        run_dir = RunDirectory("ground-state", tmp_path)
        path = run_dir.save_json("report.json", {"value": 2})
        run_dir.write_manifest(self._manifest())
        path.write_text("{}")
        assert RunDirectory.verify_manifest(tmp_path) == {"report.json": False}
