import numpy as np
import pytest

from tdscat.fieldio import (
    BadMagicError,
    TruncatedPayloadError,
    VersionMismatchError,
    extract_slice,
    file_sha256,
    read_field,
    read_tdis,
    write_field,
    write_tdis,
)
from tdscat.forward import ScatteredDataSet, synth_point_model
from tdscat.geometry import make_circle_sensors, make_sampling_grid
from tdscat.greenfn import MediumSpec
from tdscat.indicator import IndicatorField, sweep
from tdscat.signal import SignalSpec, TimeGrid

SPEC = SignalSpec(4.0, 1.6, 3.0)
MED = MediumSpec(1.0)


@pytest.fixture(scope="module")
def data():
    sensors = make_circle_sensors(8, 4.0)
    tg = TimeGrid(20.0, 16)
    d = synth_point_model([[0.3, -0.4]], [1.0], sensors, sensors, tg, SPEC, MED, 3)
    d.meta["config"] = {"example": True}
    return d


class TestTensorFile:
    def test_round_trip_bit_exact(self, data, tmp_path):
        path = tmp_path / "d.tdis"
        write_tdis(data, path)
        back = read_tdis(path)
        assert np.array_equal(back.values, data.values)
        assert np.array_equal(back.sensors.points, data.sensors.points)
        assert np.array_equal(back.sensors.weights, data.sensors.weights)
        assert np.array_equal(back.sources.points, data.sources.points)
        assert back.tgrid == data.tgrid
        assert back.spec == data.spec
        assert back.medium == data.medium
        assert back.kernel_dimension == data.kernel_dimension
        assert back.meta["config"] == {"example": True}
        assert back.meta["model"] == data.meta["model"]

    def test_write_is_deterministic(self, data, tmp_path):
        p1, p2 = tmp_path / "a.tdis", tmp_path / "b.tdis"
        write_tdis(data, p1)
        write_tdis(data, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, data, tmp_path):
        path = tmp_path / "d.tdis"
        write_tdis(data, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            read_tdis(path)

    def test_version_mismatch(self, data, tmp_path):
        path = tmp_path / "d.tdis"
        write_tdis(data, path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatchError):
            read_tdis(path)

    def test_truncated_payload(self, data, tmp_path):
        path = tmp_path / "d.tdis"
        write_tdis(data, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(TruncatedPayloadError):
            read_tdis(path)

    def test_header_larger_than_payload(self, data, tmp_path):
        path = tmp_path / "d.tdis"
        write_tdis(data, path)
        blob = bytearray(path.read_bytes())
        # inflate the source count field (offset: magic 4 + version 4 + dim 4 + nm 4 + nt 4)
        blob[20:24] = (5000).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(TruncatedPayloadError):
            read_tdis(path)

    def test_sha256_helper(self, data, tmp_path):
        path = tmp_path / "d.tdis"
        write_tdis(data, path)
        import hashlib

        assert file_sha256(path) == hashlib.sha256(path.read_bytes()).hexdigest()


class TestFieldFile:
    @pytest.fixture(scope="class")
    def field(self, data):
        grid = make_sampling_grid([[-1, 1]] * 2, [3, 3])
        return sweep(data, grid, "i3")

    def test_round_trip_lossless(self, field, tmp_path):
        path = tmp_path / "f.csv"
        write_field(field, path, source_hash="abc123")
        pts, vals, meta = read_field(path)
        assert np.array_equal(vals, field.values)
        assert np.array_equal(pts, field.grid.points)
        assert meta["indicator"] == "i3"
        assert meta["source_sha256"] == "abc123"
        assert "argmax" in meta

    def test_row_and_header_layout(self, field, tmp_path):
        path = tmp_path / "f.csv"
        write_field(field, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "z1,z2,value"
        data_rows = [ln for ln in lines if not ln.startswith("#") and ln != lines[0]]
        assert len(data_rows) == 9
        comments = [ln for ln in lines if ln.startswith("#")]
        assert comments, "metadata comment lines expected"
        # all metadata comments trail the data rows
        first_comment = lines.index(comments[0])
        assert all(ln.startswith("#") for ln in lines[first_comment:])

    def test_byte_determinism(self, field, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_field(field, p1, source_hash="h")
        write_field(field, p2, source_hash="h")
        assert p1.read_bytes() == p2.read_bytes()


class TestSlices:
    @pytest.fixture(scope="class")
    def cube_field(self):
        grid = make_sampling_grid([[-2, 2]] * 3, [21, 21, 21])
        rng = np.random.default_rng(5)
        values = rng.uniform(0.1, 1.0, grid.n_points)
        return IndicatorField(grid, values, "i3", {"normalization": "test"})

    def test_nearest_plane_selection(self, cube_field):
        sl = extract_slice(cube_field, axis=2, coord=0.27)
        # nearest plane to 0.27 on a 0.2-spaced axis is 0.2
        assert "coord=0.2" in sl.meta["slice"].replace("0.20000000000000018", "0.2")
        assert sl.grid.counts == (21, 21)
        assert len(sl.values) == 441

    def test_slice_values_match_cube(self, cube_field):
        sl = extract_slice(cube_field, axis=0, coord=-2.0)
        cube = cube_field.values_nd()
        assert np.array_equal(sl.values.reshape(21, 21), cube[0])

    def test_slice_writes_as_2d_table(self, cube_field, tmp_path):
        sl = extract_slice(cube_field, axis=1, coord=0.0)
        path = tmp_path / "slice.csv"
        write_field(sl, path)
        pts, vals, meta = read_field(path)
        assert pts.shape == (441, 2)
        assert "slice" in meta

    def test_slice_requires_3d(self, data):
        grid = make_sampling_grid([[-1, 1]] * 2, [3, 3])
        field = IndicatorField(grid, np.ones(9), "i3")
        with pytest.raises(ValueError, match="3D"):
            extract_slice(field, 0, 0.0)
