"""Experiment runs: phantom -> forward data (+ noise) -> inversion, with files, manifests and metrics"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from circular_pat.config import ExperimentConfig, ExperimentKind
from circular_pat.core import ScalarField3, UniformAxis, rel_l2_error, sample_phantom
from circular_pat.exceptions import GeometryError, VolumeFormatError
from circular_pat.files import MetricsWriter, Volume, read_manifest, read_volume, write_manifest, write_volume
from circular_pat.forward import (
    Centers,
    PressureData,
    Sinogram,
    ToroidalSinogram,
    circular_mean_fixed_radius,
    circular_radon,
    pressure_from_rp,
    rp_cylinder,
    rp_plane,
    rp_sphere,
    sinogram_for,
    toroidal_radon,
)
from circular_pat.hash import config_fingerprint
from circular_pat.lock import OutputLock
from circular_pat.logging import get_logger
from circular_pat.pat_inversion import reconstruct
from circular_pat.torus_inversion import torus_to_circle_pair, unfold_cylinder, unfold_plane
from circular_pat.utils import timed

logger = get_logger(__name__)

PHANTOM_FILE = "phantom.rvl"
SINOGRAM_FILE = "sinogram.rvl"
PRESSURE_FILE = "pressure.rvl"
CIRCULAR_MEANS_FILE = "circular_means.rvl"
FIELD_FILE = "field.rvl"
CIRCULAR_RADON_FILE = "circular_radon.rvl"
METRICS_FILE = "metrics.csv"


@dataclass(frozen=True)
class ForwardResult:
    sinogram: Sinogram | ToroidalSinogram
    pressure: PressureData | None
    paths: dict[str, Path]


def manifest_path(volume_path: str | Path) -> Path:
    return Path(volume_path).with_suffix(".manifest")


def _save(path: Path, volume: Volume, entries: dict[str, Any]) -> Path:
    checksum = write_volume(path, volume.values, volume.starts, volume.steps)
    write_manifest(manifest_path(path), entries, checksum)
    logger.info(f"Wrote {path} ({checksum[:12]})")
    return path


def _manifest_entries(config: ExperimentConfig, data: str, axes: tuple[UniformAxis, ...]) -> dict[str, Any]:
    entries: dict[str, Any] = {"data": data, "config_fingerprint": config_fingerprint(config.as_flat_dict())}
    for i, axis in enumerate(axes):
        entries[f"axis{i}"] = [axis.start, axis.step, axis.count]
    entries.update(config.as_flat_dict())
    return entries


def phantom_field(config: ExperimentConfig) -> ScalarField3:
    return sample_phantom(config.phantom, config.target_grid())


def add_noise(data: Sinogram | ToroidalSinogram, sigma: float, seed: int) -> Sinogram | ToroidalSinogram:
    """Additive Gaussian noise on the data values, reproducible from the seed"""
    if sigma == 0:
        return data
    rng = np.random.default_rng(seed)
    return data.with_values(data.values + rng.normal(0.0, sigma, data.values.shape))


def simulate(config: ExperimentConfig, f: ScalarField3 | None = None) -> Sinogram | ToroidalSinogram:
    """Noise-free forward data of the configured experiment"""
    f = f if f is not None else phantom_field(config)
    g = config.geometry
    axes = config.axes
    quad = config.quadrature
    match config.kind:
        case ExperimentKind.CYLINDER:
            theta = UniformAxis.periodic(axes.n_theta)
            return rp_cylinder(f, g.R, g.r_det, theta, config.z_axis(), config.t_axis(), quad)
        case ExperimentKind.PLANE:
            return rp_plane(f, axes.y.axis(), config.z_axis(), config.t_axis(), g.r_det, quad)
        case ExperimentKind.SPHERE:
            return rp_sphere(f, g.R, g.r_det, axes.n_det_azimuth, axes.n_det_polar, config.t_axis(), quad)
        case _:
            return toroidal_radon(
                f,
                config.centers(),
                g.u,
                config.z_axis(),
                axes.r.axis(),
                n_alpha=quad.n_alpha,
                n_beta=axes.n_beta,
                order=quad.interpolation_order,
            )


def _data_axes(data: Sinogram | ToroidalSinogram | PressureData) -> tuple[UniformAxis, ...]:
    if isinstance(data, ToroidalSinogram):
        return data.centers.axis, data.p_axis, data.r_axis
    return (*data.detector_axes, data.t_axis)


def _grid_volume(values: np.ndarray, config: ExperimentConfig) -> Volume:
    grid = config.target_grid()
    # array axes are (x3, x2, x1)
    return Volume(values, grid.origin[::-1], grid.spacing[::-1])


def run_phantom(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Write the sampled phantom, its manifest and the phantom metrics"""
    out_dir = Path(out_dir)
    with timed("phantom") as elapsed:
        f = phantom_field(config)
    with OutputLock(out_dir), MetricsWriter(out_dir / METRICS_FILE) as writer:
        path = _save(out_dir / PHANTOM_FILE, _grid_volume(f.values, config), _manifest_entries(config, "phantom", ()))
        writer.write("phantom", "wall_time", elapsed["wall_ms"], "ms", elapsed["wall_ms"])
        writer.write("phantom", "max_abs_value", float(np.abs(f.values).max(initial=0.0)), "1", 0.0)
    return path


def run_forward(config: ExperimentConfig, out_dir: str | Path) -> ForwardResult:
    """Simulate the configured experiment and write its data files

    PAT experiments write the detector sinogram R_P f and the pressure derived from it; torus experiments write the
    toroidal sinogram. Noise is added to the sinogram before the pressure is derived. The forward wall time is
    appended to the metrics file.
    """
    out_dir = Path(out_dir)
    with timed("forward") as elapsed:
        data = add_noise(simulate(config), config.noise.sigma, config.noise.seed)
    logger.info(f"Forward simulation took {elapsed['wall_ms']:.0f} ms", stage="forward")

    paths: dict[str, Path] = {}
    pressure = None
    with OutputLock(out_dir), MetricsWriter(out_dir / METRICS_FILE) as writer:
        writer.write("forward", "wall_time", elapsed["wall_ms"], "ms", elapsed["wall_ms"])
        writer.write("forward", "max_abs_value", float(np.abs(data.values).max(initial=0.0)), "1", 0.0)
        kind = "toroidal" if config.kind.is_torus else "sinogram"
        axes = _data_axes(data)
        volume = Volume.from_axes(data.values.reshape([a.count for a in axes]), axes)
        paths["sinogram"] = _save(out_dir / SINOGRAM_FILE, volume, _manifest_entries(config, kind, axes))
        if not config.kind.is_torus:
            pressure = pressure_from_rp(data)
            axes = _data_axes(pressure)
            volume = Volume.from_axes(pressure.values, axes)
            paths["pressure"] = _save(out_dir / PRESSURE_FILE, volume, _manifest_entries(config, "pressure", axes))
    return ForwardResult(data, pressure, paths)


def check_manifest(config: ExperimentConfig, manifest: dict[str, Any]):
    """Raise GeometryError unless the manifest was written for the configured geometry"""
    flat = config.as_flat_dict()
    keys = ["geometry.kind", "geometry.r_det"]
    if config.kind is not ExperimentKind.PLANE:
        keys.append("geometry.R")
    if config.kind.is_torus:
        keys.append("geometry.u")
    for key in keys:
        expected, actual = flat[key], manifest.get(key)
        if isinstance(expected, str) or actual is None:
            same = actual == expected
        else:
            same = bool(np.isclose(float(actual), float(expected)))
        if not same:
            raise GeometryError(f"Data were recorded with {key}={actual}, the config has {expected}")


def load_data(config: ExperimentConfig, path: str | Path) -> tuple[str, PressureData | ToroidalSinogram]:
    """Read a data file written by run_forward() after verifying its manifest against the config

    :return: ("pressure" | "toroidal", data). An R_P sinogram is converted to pressure
    """
    manifest = read_manifest(manifest_path(path), verify_against=path)
    check_manifest(config, manifest)
    volume = read_volume(path)
    axes = volume.axes
    kind = manifest.get("data")
    if config.kind.is_torus:
        if kind != "toroidal":
            raise VolumeFormatError(f"Expected toroidal data, found {kind}")
        template = config.centers()
        centers = Centers(template.kind, axes[0], template.R)
        return "toroidal", ToroidalSinogram(centers, config.geometry.u, axes[1], axes[2], volume.values)
    if kind not in ("pressure", "sinogram"):
        raise VolumeFormatError(f"Expected pressure or sinogram data, found {kind}")
    geometry = config.detector_geometry()
    if kind == "sinogram":
        return "pressure", pressure_from_rp(sinogram_for(geometry, axes[:-1], axes[-1], volume.values))
    return "pressure", PressureData(geometry, axes[:-1], axes[-1], volume.values)


def run_invert(config: ExperimentConfig, data_path: str | Path, out_dir: str | Path) -> dict[str, float]:
    """Invert a data file and write the reconstructed volumes and metrics

    Errors against the phantom of the config are reported for every stage.

    :return: Metric values by "<stage>.<name>"
    """
    out_dir = Path(out_dir)
    kind, data = load_data(config, data_path)
    f = phantom_field(config)
    metrics: dict[str, float] = {}
    with OutputLock(out_dir), MetricsWriter(out_dir / METRICS_FILE) as writer:

        def record(stage: str, name: str, value: float, units: str, wall_ms: float):
            writer.write(stage, name, value, units, wall_ms)
            metrics[f"{stage}.{name}"] = float(value)

        if kind == "toroidal":
            _invert_torus(config, data, f, out_dir, record)
        else:
            _invert_pat(config, data, f, out_dir, record)
    return metrics


def _invert_pat(config: ExperimentConfig, data: PressureData, f: ScalarField3, out_dir: Path, record):
    grid = config.target_grid()
    result = reconstruct(config.detector_geometry(), data, grid, config.inversion, f.support_radius)
    oracle = circular_mean_fixed_radius(f, config.geometry.r_det, n_alpha=config.quadrature.n_alpha)
    entries = _manifest_entries(config, "circular_means", ())
    _save(out_dir / CIRCULAR_MEANS_FILE, _grid_volume(result.circular_means.values, config), entries)
    _save(out_dir / FIELD_FILE, _grid_volume(result.field.values, config), _manifest_entries(config, "field", ()))

    record("invert", "rel_l2_error", rel_l2_error(result.circular_means, oracle), "1", result.timings["invert"])
    record("deconvolve", "rel_l2_error", rel_l2_error(result.field, f), "1", result.timings["deconvolve"])
    record("deconvolve", "min_abs_j0", result.condition.min_abs_j0, "1", 0.0)


def _invert_torus(config: ExperimentConfig, data: ToroidalSinogram, f: ScalarField3, out_dir: Path, record):
    g = config.geometry
    timings: dict[str, float] = {}
    with timed("circle_pair", timings):
        S = torus_to_circle_pair(data, padding_factor=config.inversion.padding_factor)
    r_axis = data.r_axis
    with timed("unfold", timings):
        if config.kind is ExperimentKind.TORUS_CYLINDER:
            radon = unfold_cylinder(S, g.u, g.R, r_axis)
        else:
            radon = unfold_plane(S, g.u, g.R, r_axis, f.parity_x1)
    oracle = circular_radon(f, data.centers, S.x3_axis, r_axis, n_alpha=config.quadrature.n_alpha)
    axes = (data.centers.axis, S.x3_axis, r_axis)
    volume = Volume.from_axes(radon.values, axes)
    _save(out_dir / CIRCULAR_RADON_FILE, volume, _manifest_entries(config, "circular_radon", axes))
    record("circle_pair", "wall_time", timings["circle_pair"], "ms", timings["circle_pair"])
    record("unfold", "rel_l2_error", rel_l2_error(radon.values, oracle.values), "1", timings["unfold"])


def run_pipeline(config: ExperimentConfig, out_dir: str | Path) -> dict[str, float]:
    """phantom -> forward (+ noise) -> invert in one run"""
    run_phantom(config, out_dir)
    forward = run_forward(config, out_dir)
    data_path = forward.paths.get("pressure", forward.paths["sinogram"])
    return run_invert(config, data_path, out_dir)
