"""Forward operators

The detector transform R_P integrates the source over the spheres of radius t centered on every point of a detector
circle of radius r_det. By Fubini it equals the spherical means of the fixed-radius circular mean M_{r_det}f, which is
how the default "composed" method evaluates it. The "direct" method integrates f itself over every
(circle point, sphere) pair and is kept as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import StrEnum
from typing import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid

from circular_pat.core import (
    DetectorGeometry,
    DetectorKind,
    Grid3,
    Parity,
    SampledVolume,
    ScalarField3,
    UniformAxis,
    interpolate3_many,
    sample_along_axes,
    support_radius_of,
    transverse_support_radius_of,
    validated_values,
)
from circular_pat.exceptions import GridError, ParityError, SupportError
from circular_pat.logging import get_logger
from circular_pat.transforms import cap_rule, first_difference, lat_long_rule

logger = get_logger(__name__)

PRESSURE_NORMALIZATION = 1 / (8 * np.pi**2)
# upper bound on the number of interpolation nodes evaluated at once
MAX_NODES_PER_BATCH = 2_000_000


class Method(StrEnum):
    COMPOSED = "composed"
    DIRECT = "direct"


class CenterKind(StrEnum):
    CIRCLE = "circle"
    LINE = "line"


@dataclass(frozen=True)
class Quadrature:
    """Quadrature orders shared by the forward operators

    :param n_alpha: Trapezoid nodes on the detector circle
    :param n_azimuth: β1 nodes of the global sphere rule
    :param n_polar: β2 intervals of the global sphere rule
    :param cap: Integrate only the spherical cap that meets the support ball
    :param cap_polar: Polar nodes of the cap rule
    :param cap_azimuth: Azimuth nodes of the cap rule
    :param interpolation_order: 1 (linear) or 3 (cubic spline)
    """

    n_alpha: int = 128
    n_azimuth: int = 128
    n_polar: int = 64
    cap: bool = True
    cap_polar: int = 24
    cap_azimuth: int = 48
    interpolation_order: int = 1

    def __post_init__(self):
        if min(self.n_alpha, self.n_azimuth, self.cap_azimuth) < 3 or min(self.n_polar, self.cap_polar) < 2:
            raise ValueError(f"Quadrature orders are too small: {self}")
        if self.interpolation_order not in (1, 3):
            raise ValueError(f"interpolation_order must be 1 or 3: {self.interpolation_order}")


@dataclass(frozen=True)
class CircularMeanMap:
    """M_{r_det}f sampled on a grid"""

    grid: Grid3
    values: NDArray[np.float64]
    r_det: float

    def __post_init__(self):
        object.__setattr__(self, "values", validated_values(self.grid, self.values))
        if not self.r_det > 0:
            raise ValueError(f"r_det must be positive: {self.r_det}")

    def with_values(self, values: ArrayLike) -> CircularMeanMap:
        return replace(self, values=values)


@dataclass(frozen=True)
class Centers:
    """Centers μ in the x1x2-plane: angles on a circle of radius R, or samples of the x2-axis"""

    kind: CenterKind
    axis: UniformAxis
    R: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CenterKind(self.kind))
        if self.kind is CenterKind.CIRCLE and not (self.R is not None and self.R > 0):
            raise ValueError(f"Circle centers require a positive R: {self.R}")

    @classmethod
    def circle(cls, count: int, R: float) -> Centers:
        return cls(CenterKind.CIRCLE, UniformAxis.periodic(count), R)

    @classmethod
    def line(cls, axis: UniformAxis) -> Centers:
        return cls(CenterKind.LINE, axis)

    def points(self) -> NDArray[np.float64]:
        """Center coordinates (n_μ, 2)"""
        s = self.axis.values
        if self.kind is CenterKind.CIRCLE:
            return self.R * np.stack([np.cos(s), np.sin(s)], axis=-1)
        return np.stack([np.zeros_like(s), s], axis=-1)

    def __len__(self) -> int:
        return self.axis.count


def _validate_sampled(values: ArrayLike, shape: tuple[int, ...], what: str) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise GridError(f"{what} values of shape {arr.shape} do not match the axes {shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{what} values must be finite")
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


class Sinogram:
    """Shared behaviour of detector data sampled as values[*detector axes, t]"""

    values: NDArray[np.float64]
    t_axis: UniformAxis

    @property
    def geometry(self) -> DetectorGeometry:
        raise NotImplementedError

    @property
    def detector_axes(self) -> tuple[UniformAxis, ...]:
        raise NotImplementedError

    @property
    def values_shape(self) -> tuple[int, ...]:
        return (*(a.count for a in self.detector_axes), self.t_axis.count)

    def detector_centers(self) -> NDArray[np.float64]:
        """Detector circle centers a, shaped (*detector dims, 3)"""
        raise NotImplementedError

    def with_values(self, values: ArrayLike) -> Self:
        return replace(self, values=values)

    def _validate(self):
        if self.t_axis.start < 0:
            raise GridError(f"t samples must be nonnegative: t starts at {self.t_axis.start}")
        object.__setattr__(self, "values", _validate_sampled(self.values, self.values_shape, type(self).__name__))


@dataclass(frozen=True)
class CylindricalSinogram(Sinogram):
    R: float
    r_det: float
    theta: UniformAxis
    z_axis: UniformAxis
    t_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        self._validate()

    @property
    def geometry(self) -> DetectorGeometry:
        return DetectorGeometry(DetectorKind.CYLINDER, self.r_det, self.R)

    @property
    def detector_axes(self) -> tuple[UniformAxis, ...]:
        return self.theta, self.z_axis

    def detector_centers(self) -> NDArray[np.float64]:
        theta, z = np.meshgrid(self.theta.values, self.z_axis.values, indexing="ij")
        return np.stack([self.R * np.cos(theta), self.R * np.sin(theta), z], axis=-1)


@dataclass(frozen=True)
class PlanarSinogram(Sinogram):
    r_det: float
    y_axis: UniformAxis
    z_axis: UniformAxis
    t_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        self._validate()

    @property
    def geometry(self) -> DetectorGeometry:
        return DetectorGeometry(DetectorKind.PLANE, self.r_det)

    @property
    def detector_axes(self) -> tuple[UniformAxis, ...]:
        return self.y_axis, self.z_axis

    def detector_centers(self) -> NDArray[np.float64]:
        y, z = np.meshgrid(self.y_axis.values, self.z_axis.values, indexing="ij")
        return np.stack([np.zeros_like(y), y, z], axis=-1)


@dataclass(frozen=True)
class SphericalSinogram(Sinogram):
    """Detectors centered at Rω for the directions ω of lat_long_rule(n_azimuth, n_polar); values [n_ω][n_t]"""

    R: float
    r_det: float
    n_azimuth: int
    n_polar: int
    t_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        self._validate()

    @property
    def rule(self):
        return lat_long_rule(self.n_azimuth, self.n_polar)

    @property
    def directions(self) -> NDArray[np.float64]:
        return self.rule.directions

    @property
    def weights(self) -> NDArray[np.float64]:
        return self.rule.weights

    @property
    def geometry(self) -> DetectorGeometry:
        return DetectorGeometry(DetectorKind.SPHERE, self.r_det, self.R)

    @property
    def detector_axes(self) -> tuple[UniformAxis, ...]:
        """(polar, azimuth) axes of the direction grid"""
        step = np.pi / self.n_polar
        return UniformAxis(step, step, self.n_polar - 1), UniformAxis.periodic(self.n_azimuth)

    @property
    def values_shape(self) -> tuple[int, ...]:
        return (self.n_polar - 1) * self.n_azimuth, self.t_axis.count

    def detector_centers(self) -> NDArray[np.float64]:
        return self.R * self.directions


@dataclass(frozen=True)
class ToroidalSinogram:
    """R_T f sampled as values[μ][p][r]"""

    centers: Centers
    u: float
    p_axis: UniformAxis
    r_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError(f"u must be positive: {self.u}")
        if not self.r_axis.start > 0:
            raise GridError(f"r samples must be positive: r starts at {self.r_axis.start}")
        shape = (len(self.centers), self.p_axis.count, self.r_axis.count)
        object.__setattr__(self, "values", _validate_sampled(self.values, shape, "ToroidalSinogram"))

    def with_values(self, values: ArrayLike) -> ToroidalSinogram:
        return replace(self, values=values)


@dataclass(frozen=True)
class CircularRadonData:
    """M f sampled as values[μ][x3][r]"""

    centers: Centers
    x3_axis: UniformAxis
    r_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        if not self.r_axis.start > 0:
            raise GridError(f"r samples must be positive: r starts at {self.r_axis.start}")
        shape = (len(self.centers), self.x3_axis.count, self.r_axis.count)
        object.__setattr__(self, "values", _validate_sampled(self.values, shape, "CircularRadonData"))


@dataclass(frozen=True)
class PressureData:
    """Measured pressure P(a, t) laid out like the sinogram of the same geometry"""

    geometry: DetectorGeometry
    detector_axes: tuple[UniformAxis, ...]
    t_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        if self.t_axis.start != 0:
            raise GridError(f"Pressure data must start at t = 0: {self.t_axis.start}")
        shape = (*(a.count for a in self.detector_axes), self.t_axis.count)
        object.__setattr__(self, "values", _validate_sampled(self.values, shape, "PressureData"))


# Circular means


def circular_mean_fixed_radius(
    f: SampledVolume, r_det: float, grid: Grid3 | None = None, n_alpha: int = 128, order: int = 1
) -> CircularMeanMap:
    """M_{r_det}f(x) = ∫₀^{2π} f(x1 + r_det cos α, x2 + r_det sin α, x3) dα by the periodic trapezoid rule

    :param f: Sampled source
    :param r_det: Detector radius
    :param grid: Output grid (f's grid by default)
    :param n_alpha: Trapezoid nodes
    :param order: Interpolation order
    """
    if not r_det > 0:
        raise ValueError(f"r_det must be positive: {r_det}")
    grid = grid or f.grid
    x1, x2, x3 = grid.mesh()
    acc = np.zeros(grid.shape)
    for alpha in 2 * np.pi * np.arange(n_alpha) / n_alpha:
        points = np.stack([x1 + r_det * np.cos(alpha), x2 + r_det * np.sin(alpha), x3], axis=-1)
        acc += interpolate3_many(f, points, order=order)
    logger.debug(f"Circular means of radius {r_det} on a {grid.counts} grid ({n_alpha} nodes)")
    return CircularMeanMap(grid, acc * (2 * np.pi / n_alpha), r_det)


def circle_integrals(
    f: SampledVolume, mu: NDArray, x3: NDArray, s: NDArray, n_alpha: int, order: int = 1
) -> NDArray[np.float64]:
    """∫₀^{2π} f(μ + s(cos α, sin α), x3) dα for every (μ, x3, s); shape (n_μ, n_x3, n_s)"""
    m1 = mu[:, 0][:, None, None]
    m2 = mu[:, 1][:, None, None]
    z = np.asarray(x3)[None, :, None]
    s = np.asarray(s)[None, None, :]
    acc = np.zeros((mu.shape[0], z.shape[1], s.shape[2]))
    for alpha in 2 * np.pi * np.arange(n_alpha) / n_alpha:
        p1, p2, p3 = np.broadcast_arrays(m1 + s * np.cos(alpha), m2 + s * np.sin(alpha), z)
        acc += interpolate3_many(f, np.stack([p1, p2, p3], axis=-1), order=order)
    return acc * (2 * np.pi / n_alpha)


def circular_radon(
    f: SampledVolume, centers: Centers, x3_axis: UniformAxis, r_axis: UniformAxis, n_alpha: int = 128, order: int = 1
) -> CircularRadonData:
    """M f(μ, x3, r) = ∫₀^{2π} f(μ + r(cos α, sin α), x3) dα on all sample combinations"""
    if not r_axis.start > 0:
        raise ValueError(f"circular_radon requires r > 0: r starts at {r_axis.start}")
    values = circle_integrals(f, centers.points(), x3_axis.values, r_axis.values, n_alpha, order)
    logger.debug(f"Circular Radon transform on {len(centers)} centers x {x3_axis.count} x {r_axis.count}")
    return CircularRadonData(centers, x3_axis, r_axis, values)


def circular_mean_at(f: SampledVolume, center: ArrayLike, x3: float, r: float, n_alpha: int = 128) -> float:
    """M f at a single center (x1, x2), height x3 and radius r"""
    if not r > 0:
        raise ValueError(f"circular_mean_at requires r > 0: {r}")
    mu = np.asarray(center, dtype=float).reshape(1, 2)
    return float(circle_integrals(f, mu, np.array([x3]), np.array([r]), n_alpha)[0, 0, 0])


# Spherical means


def spherical_mean(f: SampledVolume, center: ArrayLike, t: float, n_azimuth: int = 128, n_polar: int = 64) -> float:
    """∫_{S²} f(center + tβ) dS(β) with the global product rule"""
    if t < 0:
        raise ValueError(f"spherical_mean requires t >= 0: {t}")
    rule = lat_long_rule(n_azimuth, n_polar)
    points = np.asarray(center, dtype=float)[None, :] + t * rule.directions
    return float(interpolate3_many(f, points) @ rule.weights)


def _cap_geometry(centers: NDArray, ts: NDArray, reach: float) -> tuple[NDArray, NDArray]:
    """Axis and cos of the half-angle of the cap of each sphere |y - c| = t inside the ball |y| <= reach"""
    dist = np.linalg.norm(centers, axis=-1)
    safe = np.where(dist > 0, dist, 1.0)
    axes = np.where((dist > 0)[:, None], -centers / safe[:, None], [0.0, 0.0, 1.0])
    degenerate = ts * dist <= 1e-14 * max(reach, 1.0) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_gamma = (dist**2 + ts**2 - reach**2) / (2 * ts * safe)
    cos_gamma = np.where(degenerate, -1.0, cos_gamma)
    return axes, np.clip(cos_gamma, -1.0, 1.0)


def spherical_means(
    volume: SampledVolume, centers: ArrayLike, ts: ArrayLike, reach: float, quadrature: Quadrature = Quadrature()
) -> NDArray[np.float64]:
    """Spherical means of a volume supported in the ball |y| <= reach for many (center, t) pairs

    Spheres that miss the ball are skipped. With quadrature.cap, only the cap of each sphere inside the ball is
    integrated; otherwise the global rule is used.

    :param volume: Sampled volume
    :param centers: Sphere centers (m, 3)
    :param ts: Radii (m,)
    :param reach: Support radius of the volume about the origin
    :param quadrature: Quadrature orders
    """
    c = np.asarray(centers, dtype=float).reshape(-1, 3)
    t = np.asarray(ts, dtype=float).reshape(-1)
    out = np.zeros(t.size)
    live = np.flatnonzero(np.abs(t - np.linalg.norm(c, axis=-1)) <= reach)
    if quadrature.cap:
        n_nodes = quadrature.cap_polar * quadrature.cap_azimuth
    else:
        rule = lat_long_rule(quadrature.n_azimuth, quadrature.n_polar)
        n_nodes = rule.weights.size
    batch = max(1, MAX_NODES_PER_BATCH // n_nodes)
    for start in range(0, live.size, batch):
        idx = live[start : start + batch]
        if quadrature.cap:
            axes, cos_gamma = _cap_geometry(c[idx], t[idx], reach)
            directions, weights = cap_rule(axes, cos_gamma, quadrature.cap_polar, quadrature.cap_azimuth)
        else:
            directions, weights = rule.directions[None], rule.weights[None]
        points = c[idx][:, None, :] + t[idx][:, None, None] * directions
        values = interpolate3_many(volume, points, order=quadrature.interpolation_order)
        out[idx] = np.sum(values * weights, axis=-1)
    logger.debug(f"Spherical means: {live.size} of {t.size} spheres meet the support ({n_nodes} nodes each)")
    return out


def _mean_grid(grid: Grid3, r_det: float) -> Grid3:
    """f's grid widened in x1 and x2 to hold the support of M_{r_det}f"""
    pad = np.ceil(r_det / np.asarray(grid.spacing[:2])).astype(int) + 1
    counts = (grid.counts[0] + 2 * pad[0], grid.counts[1] + 2 * pad[1], grid.counts[2])
    origin = (grid.origin[0] - pad[0] * grid.spacing[0], grid.origin[1] - pad[1] * grid.spacing[1], grid.origin[2])
    return Grid3(counts, grid.spacing, origin)


def detector_integrals(
    f: ScalarField3,
    r_det: float,
    centers: NDArray,
    t_axis: UniformAxis,
    quadrature: Quadrature = Quadrature(),
    method: Method = Method.COMPOSED,
) -> NDArray[np.float64]:
    """R_P f(a, t) = ∫_α ∫_{S²} f(a + (r_det α⃗, 0) + tβ) dS(β) dα for detector centers (..., 3)

    :return: Array (..., n_t)
    """
    det_shape = centers.shape[:-1]
    t = t_axis.values
    out_shape = (*det_shape, t.size)
    support = support_radius_of(f)
    if support == 0:
        return np.zeros(out_shape)

    c = np.broadcast_to(centers.reshape(-1, 1, 3), (int(np.prod(det_shape)), t.size, 3)).reshape(-1, 3)
    ts = np.broadcast_to(t, (int(np.prod(det_shape)), t.size)).reshape(-1)
    if Method(method) is Method.COMPOSED:
        means = circular_mean_fixed_radius(
            f, r_det, _mean_grid(f.grid, r_det), quadrature.n_alpha, quadrature.interpolation_order
        )
        values = spherical_means(means, c, ts, support + r_det, quadrature)
    else:
        values = np.zeros(ts.size)
        for alpha in 2 * np.pi * np.arange(quadrature.n_alpha) / quadrature.n_alpha:
            shift = np.array([r_det * np.cos(alpha), r_det * np.sin(alpha), 0.0])
            values += spherical_means(f, c + shift, ts, support, quadrature)
        values *= 2 * np.pi / quadrature.n_alpha
    return values.reshape(out_shape)


def _require_inside(f: ScalarField3, R: float, transverse: bool = False):
    """Raise SupportError unless the support lies in the open ball of radius R, or in the open cylinder B²_R × ℝ"""
    if transverse:
        support = transverse_support_radius_of(f)
        if not support < R:
            raise SupportError("transverse support radius < R", f"transverse radius {support:.6g} vs R = {R:.6g}")
        return
    support = support_radius_of(f)
    if not support < R:
        raise SupportError("support_radius < R", f"support radius {support:.6g} vs R = {R:.6g}")


def rp_cylinder(
    f: ScalarField3,
    R: float,
    r_det: float,
    theta: UniformAxis,
    z_axis: UniformAxis,
    t_axis: UniformAxis,
    quadrature: Quadrature = Quadrature(),
    method: Method = Method.COMPOSED,
) -> CylindricalSinogram:
    """R_P f for detectors centered on the cylinder of radius R"""
    _require_inside(f, R, transverse=True)
    sinogram = CylindricalSinogram(R, r_det, theta, z_axis, t_axis, np.zeros((theta.count, z_axis.count, t_axis.count)))
    values = detector_integrals(f, r_det, sinogram.detector_centers(), t_axis, quadrature, method)
    logger.info(f"Cylindrical sinogram {values.shape} done (R={R}, r_det={r_det}, {method})")
    return sinogram.with_values(values)


def rp_plane(
    f: ScalarField3,
    y_axis: UniformAxis,
    z_axis: UniformAxis,
    t_axis: UniformAxis,
    r_det: float,
    quadrature: Quadrature = Quadrature(),
    method: Method = Method.COMPOSED,
    check_parity: bool = True,
) -> PlanarSinogram:
    """R_P f for detectors centered on the x2x3-plane

    :param check_parity: Require a field flagged even in x1. The data of the odd part vanish, so only even fields are
                         determined by planar data
    """
    if check_parity and f.parity_x1 is not Parity.EVEN:
        raise ParityError(f"Planar data require a field flagged even in x1 (got {f.parity_x1})")
    sinogram = PlanarSinogram(r_det, y_axis, z_axis, t_axis, np.zeros((y_axis.count, z_axis.count, t_axis.count)))
    values = detector_integrals(f, r_det, sinogram.detector_centers(), t_axis, quadrature, method)
    logger.info(f"Planar sinogram {values.shape} done (r_det={r_det}, {method})")
    return sinogram.with_values(values)


def rp_sphere(
    f: ScalarField3,
    R: float,
    r_det: float,
    n_azimuth: int,
    n_polar: int,
    t_axis: UniformAxis,
    quadrature: Quadrature = Quadrature(),
    method: Method = Method.COMPOSED,
) -> SphericalSinogram:
    """R_P f for detectors centered at Rω on the sphere of radius R"""
    _require_inside(f, R)
    n_dir = (n_polar - 1) * n_azimuth
    sinogram = SphericalSinogram(R, r_det, n_azimuth, n_polar, t_axis, np.zeros((n_dir, t_axis.count)))
    values = detector_integrals(f, r_det, sinogram.detector_centers(), t_axis, quadrature, method)
    logger.info(f"Spherical sinogram {values.shape} done (R={R}, r_det={r_det}, {method})")
    return sinogram.with_values(values)


# Pressure measurement model


def pressure_from_rp(sinogram: Sinogram) -> PressureData:
    """P(a, t) = (1/(8π²)) ∂_t [t R_P f(a, t)] by central differences"""
    t = sinogram.t_axis.values
    if sinogram.t_axis.start != 0:
        raise GridError(f"Pressure data must start at t = 0: {sinogram.t_axis.start}")
    values = sinogram.values.reshape((*(a.count for a in sinogram.detector_axes), t.size))
    p = PRESSURE_NORMALIZATION * first_difference(t * values, sinogram.t_axis.step, axis=-1)
    return PressureData(sinogram.geometry, sinogram.detector_axes, sinogram.t_axis, p)


def rp_from_pressure(pressure: PressureData) -> Sinogram:
    """R_P f(a, t) = (8π²/t) ∫₀^t P(a, τ) dτ, with the limit 8π² P(a, 0) at t = 0"""
    t = pressure.t_axis.values
    integral = cumulative_trapezoid(pressure.values, dx=pressure.t_axis.step, axis=-1, initial=0.0)
    values = np.empty_like(integral)
    values[..., 1:] = integral[..., 1:] / t[1:]
    values[..., 0] = pressure.values[..., 0]
    values /= PRESSURE_NORMALIZATION
    return sinogram_for(pressure.geometry, pressure.detector_axes, pressure.t_axis, values)


def sinogram_for(
    geometry: DetectorGeometry, detector_axes: tuple[UniformAxis, ...], t_axis: UniformAxis, values: ArrayLike
) -> Sinogram:
    """Build the sinogram type of a detector geometry from its axes"""
    values = np.asarray(values, dtype=float)
    match geometry.kind:
        case DetectorKind.CYLINDER:
            theta, z_axis = detector_axes
            return CylindricalSinogram(geometry.R, geometry.r_det, theta, z_axis, t_axis, values)
        case DetectorKind.PLANE:
            y_axis, z_axis = detector_axes
            return PlanarSinogram(geometry.r_det, y_axis, z_axis, t_axis, values)
        case DetectorKind.SPHERE:
            polar, azimuth = detector_axes
            return SphericalSinogram(
                geometry.R, geometry.r_det, azimuth.count, polar.count + 1, t_axis, values.reshape(-1, t_axis.count)
            )


# Toroidal Radon transform


def toroidal_radon(
    f: ScalarField3,
    centers: Centers,
    u: float,
    p_axis: UniformAxis,
    r_axis: UniformAxis,
    n_alpha: int = 128,
    n_beta: int = 128,
    method: Method = Method.COMPOSED,
    order: int = 1,
) -> ToroidalSinogram:
    """R_T f(μ, p, r) = (1/2π) ∫₀^{2π} ∫₀^{2π} f(μ + (u - r cos β)α⃗, p + r sin β) dβ dα

    The composed method tabulates the circle integrals Φ(μ, x3, s) = M f(μ, x3, s) once on a fine radius grid and
    integrates Φ(μ, p + r sin β, |u - r cos β|) over β. The direct method evaluates the double integral of f.
    """
    if not u > 0:
        raise ValueError(f"u must be positive: {u}")
    if not r_axis.start > 0:
        raise ValueError(f"toroidal_radon requires r > 0: r starts at {r_axis.start}")
    mu = centers.points()
    p = p_axis.values
    r = r_axis.values
    betas = 2 * np.pi * np.arange(n_beta) / n_beta
    out = np.zeros((len(centers), p.size, r.size))

    if Method(method) is Method.COMPOSED:
        grid = f.grid
        ds = 0.5 * min(grid.spacing[0], grid.spacing[1])
        s_axis = UniformAxis.spanning(0.0, u + r_axis.stop + ds, ds)
        x3 = grid.axis(2)
        phi = circle_integrals(f, mu, x3, s_axis.values, n_alpha, order)
        heights = p[:, None, None] + r[None, :, None] * np.sin(betas)
        radii = np.broadcast_to(np.abs(u - r[:, None] * np.cos(betas)), heights.shape)
        for m in range(len(centers)):
            samples = sample_along_axes(
                phi[m], (x3[0], 0.0), (grid.spacing[2], ds), (heights, radii), order=order
            )
            out[m] = samples.mean(axis=-1)
    else:
        m1, m2 = mu[:, 0][:, None, None], mu[:, 1][:, None, None]
        for beta in betas:
            radius = (u - r * np.cos(beta))[None, None, :]
            height = (p[:, None] + r[None, :] * np.sin(beta))[None]
            for alpha in 2 * np.pi * np.arange(n_alpha) / n_alpha:
                p1, p2, height = np.broadcast_arrays(m1 + radius * np.cos(alpha), m2 + radius * np.sin(alpha), height)
                out += interpolate3_many(f, np.stack([p1, p2, height], axis=-1), order=order)
        out *= (2 * np.pi / n_alpha) * (2 * np.pi / n_beta) / (2 * np.pi)

    logger.info(f"Toroidal sinogram {out.shape} done (u={u}, {method})")
    return ToroidalSinogram(centers, u, p_axis, r_axis, out)
