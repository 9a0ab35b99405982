import numpy as np
import pytest

from circular_pat import pipeline
from circular_pat.config import build_config
from circular_pat.exceptions import ChecksumError, GeometryError, VolumeFormatError
from circular_pat.files import read_manifest, read_metrics, read_volume, write_volume
from circular_pat.forward import CenterKind, PressureData, ToroidalSinogram
from circular_pat.pipeline import (
    CIRCULAR_MEANS_FILE,
    FIELD_FILE,
    METRICS_FILE,
    PHANTOM_FILE,
    PRESSURE_FILE,
    SINOGRAM_FILE,
    add_noise,
    check_manifest,
    load_data,
    manifest_path,
    run_forward,
    run_phantom,
    run_pipeline,
)


@pytest.fixture
def forward(mocker, tiny_config, synthetic_sinogram, out_dir):
    mocker.patch.object(pipeline, "simulate", return_value=synthetic_sinogram)
    return run_forward(tiny_config, out_dir)


@pytest.fixture
def torus_config():
    return build_config(
        {
            "geometry.kind": "torus-cylinder",
            "grid.counts": [9, 9, 5],
            "grid.spacing": [0.1, 0.1, 0.1],
            "phantom.blobs": [{"center": [0.0, 0.0, 0.0], "sigma": 0.08}],
            "axes.n_centers": 2,
            "axes.z": {"start": -0.3, "stop": 0.3, "step": 0.1},
            "axes.r": {"start": 0.1, "stop": 1.0, "step": 0.1},
        }
    )


def test_run_phantom(tiny_config, out_dir):
    path = run_phantom(tiny_config, out_dir)
    assert path == out_dir / PHANTOM_FILE
    volume = read_volume(path)
    assert volume.values.shape == tiny_config.target_grid().shape
    manifest = read_manifest(manifest_path(path), verify_against=path)
    assert manifest["data"] == "phantom"
    assert manifest["geometry.kind"] == "cylinder"
    rows = read_metrics(out_dir / METRICS_FILE)
    assert [(row["stage"], row["name"], row["units"]) for row in rows] == [
        ("phantom", "wall_time", "ms"),
        ("phantom", "max_abs_value", "1"),
    ]
    assert float(rows[1]["value"]) == pytest.approx(np.abs(volume.values).max())


class TestForward:
    def test_writes_sinogram_and_pressure(self, forward, synthetic_sinogram, out_dir):
        assert forward.paths == {"sinogram": out_dir / SINOGRAM_FILE, "pressure": out_dir / PRESSURE_FILE}
        np.testing.assert_array_equal(read_volume(forward.paths["sinogram"]).values, synthetic_sinogram.values)
        manifest = read_manifest(manifest_path(forward.paths["pressure"]), verify_against=forward.paths["pressure"])
        assert manifest["data"] == "pressure"
        assert manifest["axis2"] == [0.0, synthetic_sinogram.t_axis.step, synthetic_sinogram.t_axis.count]
        assert isinstance(forward.pressure, PressureData)
        assert not (out_dir / ".circular-pat.lock").exists()

    def test_records_the_forward_wall_time(self, forward, synthetic_sinogram, out_dir):
        rows = {row["name"]: row for row in read_metrics(out_dir / METRICS_FILE)}
        assert {row["stage"] for row in rows.values()} == {"forward"}
        assert rows["wall_time"]["units"] == "ms"
        assert float(rows["wall_time"]["value"]) >= 0
        assert float(rows["wall_time"]["value"]) == pytest.approx(float(rows["wall_time"]["wall_ms"]), abs=1e-3)
        assert float(rows["max_abs_value"]["value"]) == pytest.approx(np.abs(synthetic_sinogram.values).max())

    def test_noise_is_added_before_the_pressure(self, mocker, tiny_config, synthetic_sinogram, out_dir):
        mocker.patch.object(pipeline, "simulate", return_value=synthetic_sinogram)
        noisy = build_config(tiny_config.as_flat_dict() | {"noise.sigma": 0.01, "noise.seed": 3})
        result = run_forward(noisy, out_dir)
        expected = add_noise(synthetic_sinogram, 0.01, 3)
        np.testing.assert_array_equal(result.sinogram.values, expected.values)
        assert not np.array_equal(result.sinogram.values, synthetic_sinogram.values)


def test_add_noise_is_reproducible(synthetic_sinogram):
    assert add_noise(synthetic_sinogram, 0.0, 1) is synthetic_sinogram
    first = add_noise(synthetic_sinogram, 0.1, 7)
    np.testing.assert_array_equal(first.values, add_noise(synthetic_sinogram, 0.1, 7).values)
    assert not np.array_equal(first.values, add_noise(synthetic_sinogram, 0.1, 8).values)


class TestLoadData:
    @pytest.mark.parametrize("name", ["sinogram", "pressure"])
    def test_pressure_from_either_file(self, forward, tiny_config, name):
        kind, data = load_data(tiny_config, forward.paths[name])
        assert kind == "pressure"
        assert isinstance(data, PressureData)
        assert data.geometry == tiny_config.detector_geometry()
        np.testing.assert_allclose(data.values, forward.pressure.values)

    def test_geometry_mismatch(self, forward, tiny_config):
        manifest = read_manifest(manifest_path(forward.paths["pressure"]))
        with pytest.raises(GeometryError, match="r_det"):
            check_manifest(tiny_config, manifest | {"geometry.r_det": 0.2})
        other = build_config(tiny_config.as_flat_dict() | {"geometry.R": 1.5})
        with pytest.raises(GeometryError):
            load_data(other, forward.paths["pressure"])

    def test_modified_data(self, forward, tiny_config):
        path = forward.paths["pressure"]
        volume = read_volume(path)
        write_volume(path, volume.values + 1, volume.starts, volume.steps)
        with pytest.raises(ChecksumError):
            load_data(tiny_config, path)

    def test_wrong_data_kind(self, tiny_config, out_dir):
        with pytest.raises(VolumeFormatError):
            load_data(tiny_config, run_phantom(tiny_config, out_dir))

    def test_toroidal(self, mocker, torus_config, out_dir):
        centers = torus_config.centers()
        p_axis, r_axis = torus_config.axes.z.axis(), torus_config.axes.r.axis()
        values = np.ones((len(centers), p_axis.count, r_axis.count))
        g = ToroidalSinogram(centers, torus_config.geometry.u, p_axis, r_axis, values)
        mocker.patch.object(pipeline, "simulate", return_value=g)
        result = run_forward(torus_config, out_dir)
        assert result.pressure is None and set(result.paths) == {"sinogram"}

        kind, data = load_data(torus_config, result.paths["sinogram"])
        assert kind == "toroidal"
        assert data.centers.kind is CenterKind.CIRCLE and data.centers.R == 1.0
        np.testing.assert_allclose(data.centers.points(), centers.points())
        assert data.u == torus_config.geometry.u
        with pytest.raises(GeometryError):
            load_data(build_config(torus_config.as_flat_dict() | {"geometry.u": 0.4}), result.paths["sinogram"])


@pytest.mark.slow
def test_pipeline_writes_all_outputs(tiny_config, out_dir):
    metrics = run_pipeline(tiny_config, out_dir)
    for name in (PHANTOM_FILE, SINOGRAM_FILE, PRESSURE_FILE, CIRCULAR_MEANS_FILE, FIELD_FILE):
        assert (out_dir / name).exists()
        assert manifest_path(out_dir / name).exists()
    assert set(metrics) == {"invert.rel_l2_error", "deconvolve.rel_l2_error", "deconvolve.min_abs_j0"}
    stages = [row["stage"] for row in read_metrics(out_dir / METRICS_FILE)]
    assert stages == ["phantom", "phantom", "forward", "forward", "invert", "deconvolve", "deconvolve"]
    assert all(np.isfinite(v) for v in metrics.values())
