import numpy as np
import pytest

from circular_pat.core import UniformAxis
from circular_pat.exceptions import ChecksumError, VolumeFormatError
from circular_pat.files import (
    CHECKSUM_KEY,
    METRICS_COLUMNS,
    MetricsWriter,
    Volume,
    decode_volume,
    encode_volume,
    read_manifest,
    read_metrics,
    read_volume,
    write_manifest,
    write_volume,
)
from circular_pat.hash import payload_checksum


@pytest.fixture
def values():
    return np.arange(24, dtype=float).reshape(2, 3, 4) / 7


class TestVolume:
    def test_encode_and_decode(self, values):
        data = encode_volume(values, (0.0, -1.0, 0.5), (0.1, 0.2, 0.3))
        assert data[:4] == b"RVL1"
        assert len(data) == 8 + 3 * 4 + 3 * 16 + values.size * 8
        volume = decode_volume(data)
        np.testing.assert_array_equal(volume.values, values)
        assert volume.starts == (0.0, -1.0, 0.5)
        assert volume.axes[2] == UniformAxis(0.5, 0.3, 4)

    def test_layout_is_little_endian_and_row_major(self):
        data = encode_volume(np.array([[1.0, 2.0]]), (0.0, 0.0), (1.0, 1.0))
        assert data[4:8] == (2).to_bytes(4, "little")
        assert data[-16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()

    def test_write_and_read(self, tmp_path, values):
        path = tmp_path / "v.rvl"
        checksum = write_volume(path, values, (0, 0, 0), (1, 1, 1))
        volume = read_volume(path)
        assert checksum == volume.checksum == payload_checksum(values)
        assert Volume.from_axes(values, volume.axes).checksum == checksum

    @pytest.mark.parametrize(
        ("mutate", "message"),
        [
            pytest.param(lambda d: b"RVL2" + d[4:], "magic", id="magic"),
            pytest.param(lambda d: d[:6], "header", id="truncated header"),
            pytest.param(lambda d: d[:20], "header", id="truncated axes"),
            pytest.param(lambda d: d[:-8], "mismatch", id="truncated payload"),
            pytest.param(lambda d: d + b"\0", "mismatch", id="trailing bytes"),
        ],
    )
    def test_malformed(self, values, mutate, message):
        with pytest.raises(VolumeFormatError, match=message):
            decode_volume(mutate(encode_volume(values, (0, 0, 0), (1, 1, 1))))

    def test_axis_count_must_match_rank(self, values):
        with pytest.raises(VolumeFormatError):
            encode_volume(values, (0, 0), (1, 1))

    def test_missing_file(self, tmp_path):
        with pytest.raises(VolumeFormatError):
            read_volume(tmp_path / "missing.rvl")


class TestManifest:
    def test_entries_keep_their_types(self, tmp_path):
        path = tmp_path / "v.manifest"
        entries = {
            "data": "sinogram",
            "axis0": [0.0, 0.1, 5],
            "geometry.R": 1.0,
            "inversion.reg_epsilon": 1e-6,
            "phantom.symmetrize_x1": False,
            "axes.t_max": None,
            "phantom.blobs": [{"center": [0.0, 0.0, 0.0], "sigma": 0.1}],
        }
        write_manifest(path, entries, "abc")
        manifest = read_manifest(path)
        assert manifest == entries | {CHECKSUM_KEY: "abc"}
        assert path.read_text().splitlines()[-1] == f"{CHECKSUM_KEY}=abc"

    def test_verify_against_data(self, tmp_path, values):
        volume_path = tmp_path / "v.rvl"
        checksum = write_volume(volume_path, values, (0, 0, 0), (1, 1, 1))
        write_manifest(tmp_path / "v.manifest", {"data": "field"}, checksum)
        assert read_manifest(tmp_path / "v.manifest", verify_against=volume_path)["data"] == "field"
        assert read_manifest(tmp_path / "v.manifest", verify_against=values)[CHECKSUM_KEY] == checksum
        with pytest.raises(ChecksumError):
            read_manifest(tmp_path / "v.manifest", verify_against=values + 1)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.manifest"
        path.write_text("data=field\nno separator\n")
        with pytest.raises(VolumeFormatError, match=":2:"):
            read_manifest(path)


class TestMetrics:
    def test_header_is_written_once(self, tmp_path):
        path = tmp_path / "metrics.csv"
        with MetricsWriter(path) as metrics:
            metrics.write("invert", "rel_l2_error", 0.04, "1", 12.5)
        with MetricsWriter(path) as metrics:
            metrics.write("deconvolve", "min_abs_j0", 1e-3)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(METRICS_COLUMNS)
        assert len(lines) == 3
        rows = read_metrics(path)
        expected = {"stage": "invert", "name": "rel_l2_error", "value": "0.04", "units": "1", "wall_ms": "12.500"}
        assert rows[0] == expected
        assert float(rows[1]["value"]) == 1e-3

    def test_requires_context(self, tmp_path):
        with pytest.raises(RuntimeError):
            MetricsWriter(tmp_path / "metrics.csv").write("a", "b", 1.0)
