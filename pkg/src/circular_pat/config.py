"""Experiment configuration

An experiment is described by one YAML file. Keys may be nested or flat dotted (``geometry.kind: cylinder``); they
are merged over DEFAULTS, so a file only needs the values it changes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from circular_pat.core import Blob, DetectorGeometry, DetectorKind, Grid3, PhantomSpec, UniformAxis
from circular_pat.exceptions import ConfigError
from circular_pat.forward import Centers, Quadrature
from circular_pat.logging import get_logger
from circular_pat.pat_inversion import InversionOptions
from circular_pat.utils import flatten_dotted, merge_dicts, unflatten_dotted

logger = get_logger(__name__)

# Default half-length of the cylindrical z window in units of R
CYLINDER_Z_WINDOW = 12.0


class ExperimentKind(StrEnum):
    CYLINDER = "cylinder"
    PLANE = "plane"
    SPHERE = "sphere"
    TORUS_CYLINDER = "torus-cylinder"
    TORUS_PLANE = "torus-plane"

    @property
    def is_torus(self) -> bool:
        return self in (ExperimentKind.TORUS_CYLINDER, ExperimentKind.TORUS_PLANE)

    @property
    def is_planar(self) -> bool:
        return self in (ExperimentKind.PLANE, ExperimentKind.TORUS_PLANE)


DEFAULTS: dict[str, Any] = {
    "geometry": {"kind": "cylinder", "R": 1.0, "r_det": 0.15, "u": 0.3},
    "grid": {"counts": [25, 25, 25], "spacing": [0.05, 0.05, 0.05], "center": [0.0, 0.0, 0.0]},
    "phantom": {"blobs": [{"center": [0.0, 0.0, 0.0], "sigma": 0.1, "amplitude": 1.0}], "symmetrize_x1": False},
    "quadrature": {
        "n_alpha": 128,
        "n_azimuth": 128,
        "n_polar": 64,
        "cap": True,
        "cap_polar": 24,
        "cap_azimuth": 48,
        "interpolation_order": 1,
    },
    "axes": {
        "n_theta": 64,
        "y": {"start": -2.0, "stop": 2.0, "step": 0.05},
        "z": None,
        "t_step": 0.025,
        "t_max": None,
        "n_det_azimuth": 32,
        "n_det_polar": 16,
        "n_centers": 16,
        "r": {"start": 0.025, "stop": 2.4, "step": 0.025},
        "n_beta": 128,
    },
    "inversion": {
        "reg_epsilon": 1e-6,
        "interpolation_order": 1,
        "taper": False,
        "padding_factor": 2,
        "plane_method": "support-fit",
        "plane_regularization": 1e-6,
    },
    "noise": {"sigma": 0.0, "seed": 0},
    "output_dir": "out",
}


@dataclass(frozen=True)
class RangeConfig:
    start: float
    stop: float
    step: float

    def axis(self) -> UniformAxis:
        if not self.stop >= self.start:
            raise ConfigError(f"Invalid range: stop {self.stop} < start {self.start}")
        return UniformAxis.spanning(self.start, self.stop, self.step)


@dataclass(frozen=True)
class GeometryConfig:
    kind: ExperimentKind
    R: float | None
    r_det: float
    u: float | None = None


@dataclass(frozen=True)
class GridConfig:
    counts: tuple[int, int, int]
    spacing: tuple[float, float, float]
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def grid(self) -> Grid3:
        return Grid3.centered(self.counts, self.spacing, self.center)


@dataclass(frozen=True)
class AxesConfig:
    n_theta: int
    y: RangeConfig
    z: RangeConfig | None
    t_step: float
    t_max: float | None
    n_det_azimuth: int
    n_det_polar: int
    n_centers: int
    r: RangeConfig
    n_beta: int


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig
    grid: GridConfig
    phantom: PhantomSpec
    quadrature: Quadrature
    axes: AxesConfig
    inversion: InversionOptions
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    output_dir: Path = Path("out")

    @property
    def kind(self) -> ExperimentKind:
        return self.geometry.kind

    def detector_geometry(self) -> DetectorGeometry:
        """Detector geometry of the PAT experiments"""
        if self.kind.is_torus:
            raise ConfigError(f"{self.kind} experiments have no circular detector geometry")
        R = None if self.kind is ExperimentKind.PLANE else self.geometry.R
        return DetectorGeometry(DetectorKind(self.kind.value), self.geometry.r_det, R)

    def target_grid(self) -> Grid3:
        return self.grid.grid()

    def z_axis(self) -> UniformAxis:
        """Detector z samples: axes.z, or by default ±CYLINDER_Z_WINDOW·R for the cylinder and ±2 otherwise"""
        if self.axes.z is not None:
            return self.axes.z.axis()
        if self.kind is ExperimentKind.CYLINDER:
            half = CYLINDER_Z_WINDOW * self.geometry.R
            return UniformAxis.spanning(-half, half, 0.1)
        return UniformAxis.spanning(-2.0, 2.0, 0.05)

    def t_axis(self) -> UniformAxis:
        """t samples from 0 up to axes.t_max

        The default t_max is 2(R + r_det) for the sphere. For the cylinder it reaches every detector of the z window
        from the widest grid node, as the axial back-projection needs. For the plane it is the distance from the
        farthest detector to the origin plus the support reach.
        """
        t_max = self.axes.t_max
        if t_max is None:
            match self.kind:
                case ExperimentKind.PLANE:
                    y, z = self.axes.y.axis(), self.z_axis()
                    far = np.hypot(max(abs(y.start), abs(y.stop)), max(abs(z.start), abs(z.stop)))
                    t_max = float(far + self.phantom.support_radius + self.geometry.r_det)
                case ExperimentKind.CYLINDER:
                    x1, x2, x3 = self.target_grid().mesh()
                    z = self.z_axis()
                    reach = max(abs(z.start - x3.min()), abs(z.stop - x3.max()))
                    rho = self.geometry.R + float(np.hypot(x1, x2).max())
                    t_max = float(np.hypot(reach, rho)) + self.geometry.r_det
                case _:
                    t_max = 2 * (self.geometry.R + self.geometry.r_det)
        return UniformAxis.spanning(0.0, t_max, self.axes.t_step)

    def centers(self) -> Centers:
        """Centers of the circular means for the torus experiments"""
        if self.kind is ExperimentKind.TORUS_CYLINDER:
            return Centers.circle(self.axes.n_centers, self.geometry.R)
        return Centers.line(self.axes.y.axis())

    def as_flat_dict(self) -> dict[str, Any]:
        """Flat dotted representation, as written into manifests"""
        nested = _to_plain(dataclasses.asdict(self))
        nested["phantom"] = {
            "blobs": [dataclasses.asdict(b) for b in self.phantom.blobs],
            "symmetrize_x1": self.phantom.symmetrize_x1,
        }
        return flatten_dotted(_to_plain(nested))

    def validate(self) -> ExperimentConfig:
        """Check positivity and the geometric preconditions of the experiment

        :raises ConfigError: The first violated requirement
        """
        g = self.geometry
        if not g.r_det > 0:
            raise ConfigError(f"geometry.r_det must be positive: {g.r_det}")
        if self.kind is not ExperimentKind.PLANE and not (g.R is not None and g.R > 0):
            raise ConfigError(f"geometry.R must be positive for {self.kind}: {g.R}")
        if self.kind.is_torus and not (g.u is not None and g.u > 0):
            raise ConfigError(f"geometry.u must be positive for {self.kind}: {g.u}")
        if self.noise.sigma < 0:
            raise ConfigError(f"noise.sigma must be nonnegative: {self.noise.sigma}")
        if not self.axes.t_step > 0 or (self.axes.t_max is not None and not self.axes.t_max > 0):
            raise ConfigError("axes.t_step and axes.t_max must be positive")
        if self.kind.is_planar and not self.phantom.symmetrize_x1:
            raise ConfigError(f"{self.kind} requires an even phantom: set phantom.symmetrize_x1")

        grid = self.target_grid()
        if self.kind.is_planar and not grid.is_symmetric_x1():
            raise ConfigError(f"{self.kind} requires grid.center[0] = 0")
        if self.kind in (ExperimentKind.CYLINDER, ExperimentKind.TORUS_CYLINDER):
            support = self.phantom.transverse_support_radius
            if self.blobs_present and not support < g.R:
                raise ConfigError(f"Phantom transverse radius {support:.4g} must stay below R = {g.R}")
        elif self.kind is not ExperimentKind.PLANE:
            support = self.phantom.support_radius
            if self.blobs_present and not support < g.R:
                raise ConfigError(f"Phantom support radius {support:.4g} violates support_radius < R = {g.R}")

        x1, x2, x3 = grid.mesh()
        if self.kind is ExperimentKind.CYLINDER and np.any(x1**2 + x2**2 >= g.R**2):
            raise ConfigError("The grid must lie inside the open cylinder of radius R")
        if self.kind is ExperimentKind.SPHERE and np.any(x1**2 + x2**2 + x3**2 >= g.R**2):
            raise ConfigError("The grid must lie inside the open ball of radius R")
        return self

    @property
    def blobs_present(self) -> bool:
        return bool(self.phantom.blobs)


def _to_plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, StrEnum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _section(cls: type, data: Any, name: str, **converters):
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown key(s) in '{name}': {', '.join(sorted(unknown))}")
    kwargs = {k: converters[k](v) if k in converters else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid '{name}' section: {e}") from e


def build_config(data: dict[str, Any]) -> ExperimentConfig:
    """Build a validated ExperimentConfig from nested or flat dotted keys merged over DEFAULTS"""
    merged = merge_dicts(DEFAULTS, unflatten_dotted(data or {}))
    unknown = set(merged) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"Unknown top-level key(s): {', '.join(sorted(unknown))}")

    def ranged(name):
        return lambda v: None if v is None else _section(RangeConfig, v, f"axes.{name}")

    try:
        kind = ExperimentKind(merged["geometry"]["kind"])
    except ValueError as e:
        raise ConfigError(f"Unknown geometry.kind: {merged['geometry'].get('kind')}") from e
    blobs = merged["phantom"].get("blobs") or []
    try:
        phantom = PhantomSpec(tuple(Blob(**b) for b in blobs), bool(merged["phantom"].get("symmetrize_x1", False)))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid phantom: {e}") from e

    config = ExperimentConfig(
        geometry=_section(GeometryConfig, merged["geometry"] | {"kind": kind}, "geometry"),
        grid=_section(GridConfig, merged["grid"], "grid", counts=tuple, spacing=tuple, center=tuple),
        phantom=phantom,
        quadrature=_section(Quadrature, merged["quadrature"], "quadrature"),
        axes=_section(AxesConfig, merged["axes"], "axes", y=ranged("y"), z=ranged("z"), r=ranged("r")),
        inversion=_section(InversionOptions, merged["inversion"], "inversion"),
        noise=_section(NoiseConfig, merged["noise"], "noise"),
        output_dir=Path(merged["output_dir"]),
    )
    return config.validate()


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load an experiment config file

    :param path: YAML file. The built-in defaults are used when omitted
    :param overrides: Values (nested or flat dotted) applied on top of the file
    """
    data: dict[str, Any] = {}
    if path:
        try:
            with open(path) as f:
                data = yaml.safe_load(f) or {}
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must contain a mapping")
    if overrides:
        data = merge_dicts(unflatten_dotted(data), unflatten_dotted(overrides))
    config = build_config(data)
    logger.debug(f"Loaded {config.kind} config from {path or 'defaults'}")
    return config
