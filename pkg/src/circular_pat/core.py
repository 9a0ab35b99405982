"""Grids, sampled fields, analytic phantoms, interpolation and error metrics

Volumes are stored as numpy arrays of shape (nz, ny, nx), so the row-major flattening has x1 fastest.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

from circular_pat.exceptions import GridError, ParityError
from circular_pat.logging import get_logger

logger = get_logger(__name__)

# Gaussian blobs are treated as compactly supported beyond this many standard deviations
SUPPORT_SIGMAS = 5.0
PARITY_ATOL = 1e-12


class Parity(StrEnum):
    NONE = "none"
    EVEN = "even"
    ODD = "odd"


class DetectorKind(StrEnum):
    CYLINDER = "cylinder"
    PLANE = "plane"
    SPHERE = "sphere"


@dataclass(frozen=True)
class UniformAxis:
    """Uniform samples start + k*step, k = 0..count-1"""

    start: float
    step: float
    count: int

    def __post_init__(self):
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "count", int(self.count))
        if self.count < 1:
            raise GridError(f"An axis needs at least one sample: {self.count}")
        if not (self.step > 0 and np.isfinite(self.step) and np.isfinite(self.start)):
            raise GridError(f"Invalid axis start/step: {self.start}, {self.step}")

    @classmethod
    def spanning(cls, start: float, stop: float, step: float) -> UniformAxis:
        """Samples from start up to stop (inclusive, within half a step)"""
        return cls(start, step, int(np.floor((stop - start) / step + 0.5)) + 1)

    @classmethod
    def periodic(cls, count: int, period: float = 2 * np.pi) -> UniformAxis:
        """count samples on [0, period)"""
        return cls(0.0, period / count, count)

    @property
    def values(self) -> NDArray[np.float64]:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    def __len__(self) -> int:
        return self.count


def _as_triple(value: ArrayLike, name: str, cast: Callable = float) -> tuple:
    arr = np.broadcast_to(np.asarray(value), (3,))
    return tuple(cast(v) for v in arr)


@dataclass(frozen=True)
class Grid3:
    """Regular 3D grid. counts/spacing/origin are ordered (x1, x2, x3)"""

    counts: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "counts", _as_triple(self.counts, "counts", int))
        object.__setattr__(self, "spacing", _as_triple(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _as_triple(self.origin, "origin"))
        if any(n < 2 for n in self.counts):
            raise GridError(f"All grid counts must be >= 2: {self.counts}")
        if any(not (d > 0 and np.isfinite(d)) for d in self.spacing):
            raise GridError(f"All grid spacings must be positive: {self.spacing}")
        if not all(np.isfinite(self.origin)):
            raise GridError(f"Grid origin must be finite: {self.origin}")

    @classmethod
    def centered(cls, counts: ArrayLike, spacing: ArrayLike, center: ArrayLike = (0.0, 0.0, 0.0)) -> Grid3:
        """A grid whose nodes are symmetric about the given center"""
        counts_ = np.asarray(_as_triple(counts, "counts", int))
        spacing_ = np.asarray(_as_triple(spacing, "spacing"))
        origin = np.asarray(_as_triple(center, "center")) - 0.5 * (counts_ - 1) * spacing_
        return cls(tuple(counts_), tuple(spacing_), tuple(origin))

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (nz, ny, nx)"""
        nx, ny, nz = self.counts
        return nz, ny, nx

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axis(self, i: int) -> NDArray[np.float64]:
        """Node coordinates along x_{i+1}"""
        return self.origin[i] + np.arange(self.counts[i]) * self.spacing[i]

    def mesh(self) -> tuple[NDArray, NDArray, NDArray]:
        """Coordinate arrays X1, X2, X3, each of shape (nz, ny, nx)"""
        x3, x2, x1 = np.meshgrid(self.axis(2), self.axis(1), self.axis(0), indexing="ij")
        return x1, x2, x3

    def is_symmetric_x1(self, rtol: float = 1e-9) -> bool:
        """Whether the x1 nodes are symmetric about x1 = 0"""
        x1 = self.axis(0)
        return bool(np.allclose(x1, -x1[::-1], rtol=0, atol=rtol * self.spacing[0]))


class SampledVolume(Protocol):
    grid: Grid3
    values: NDArray[np.float64]


def validated_values(grid: Grid3, values: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1 and arr.size == grid.size:
        arr = arr.reshape(grid.shape)
    if arr.shape != grid.shape:
        raise GridError(f"Values of shape {arr.shape} do not match grid shape {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError("Field values must be finite")
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField3:
    """A real scalar field sampled on a Grid3"""

    grid: Grid3
    values: NDArray[np.float64]
    support_radius: float = 0.0
    parity_x1: Parity = Parity.NONE
    transverse_support_radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", validated_values(self.grid, self.values))
        object.__setattr__(self, "parity_x1", Parity(self.parity_x1))
        if self.support_radius < 0:
            raise GridError(f"support_radius must be nonnegative: {self.support_radius}")
        if self.transverse_support_radius < 0:
            raise GridError(f"transverse_support_radius must be nonnegative: {self.transverse_support_radius}")
        if self.parity_x1 is not Parity.NONE:
            check_parity_x1(self.grid, self.values, self.parity_x1)

    @classmethod
    def zeros(cls, grid: Grid3, parity_x1: Parity = Parity.NONE) -> ScalarField3:
        return cls(grid, np.zeros(grid.shape), 0.0, parity_x1)

    @classmethod
    def from_function(
        cls, grid: Grid3, func: Callable[[NDArray, NDArray, NDArray], NDArray], support_radius: float = 0.0, **kwargs
    ) -> ScalarField3:
        """Sample func(x1, x2, x3) on the grid nodes"""
        x1, x2, x3 = grid.mesh()
        return cls(grid, np.broadcast_to(func(x1, x2, x3), grid.shape), support_radius, **kwargs)

    @property
    def flat_values(self) -> NDArray[np.float64]:
        """Row-major values with x1 fastest"""
        return self.values.ravel()

    def with_values(self, values: ArrayLike, parity_x1: Parity | None = None) -> ScalarField3:
        return replace(self, values=values, parity_x1=self.parity_x1 if parity_x1 is None else parity_x1)


def support_radius_of(field: ScalarField3) -> float:
    """Radius of a ball about the origin holding the field's support

    The declared support_radius is used when set; otherwise it is estimated from the nonzero nodes, padded by one cell
    diagonal. A zero field has support radius 0.
    """
    if field.support_radius > 0:
        return field.support_radius
    nonzero = field.values != 0
    if not np.any(nonzero):
        return 0.0
    x1, x2, x3 = field.grid.mesh()
    radius = np.sqrt(x1[nonzero] ** 2 + x2[nonzero] ** 2 + x3[nonzero] ** 2).max()
    return float(radius + np.linalg.norm(field.grid.spacing))


def transverse_support_radius_of(field: ScalarField3) -> float:
    """Radius of an infinite cylinder about the x3-axis holding the field's support

    Uses the declared transverse radius when set. Otherwise it is estimated from the nonzero nodes, padded by the
    (x1, x2) cell diagonal, and never exceeds the support ball's radius.
    """
    if field.transverse_support_radius > 0:
        return field.transverse_support_radius
    nonzero = field.values != 0
    if not np.any(nonzero):
        return 0.0
    x1, x2, _ = field.grid.mesh()
    radius = float(np.hypot(x1[nonzero], x2[nonzero]).max() + np.hypot(*field.grid.spacing[:2]))
    if field.support_radius > 0:
        radius = min(radius, field.support_radius)
    return radius


def check_parity_x1(grid: Grid3, values: NDArray, parity: Parity) -> None:
    """Raise ParityError unless values are even/odd in x1 at mirrored grid nodes"""
    if not grid.is_symmetric_x1():
        raise GridError("A parity flag requires a grid whose x1 nodes are symmetric about 0")
    sign = 1.0 if parity is Parity.EVEN else -1.0
    mirrored = values[..., ::-1]
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    if not np.allclose(values, sign * mirrored, rtol=0, atol=PARITY_ATOL * scale):
        raise ParityError(f"Field values are not {parity} in x1")


@dataclass(frozen=True)
class Blob:
    center: tuple[float, float, float]
    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", _as_triple(self.center, "center"))
        if not self.sigma > 0:
            raise ValueError(f"Blob sigma must be positive: {self.sigma}")

    def mirrored_x1(self) -> Blob:
        return replace(self, center=(-self.center[0], self.center[1], self.center[2]))

    def evaluate(self, x1: NDArray, x2: NDArray, x3: NDArray) -> NDArray:
        c1, c2, c3 = self.center
        r2 = (x1 - c1) ** 2 + (x2 - c2) ** 2 + (x3 - c3) ** 2
        return self.amplitude * np.exp(-r2 / (2.0 * self.sigma**2))


@dataclass(frozen=True)
class PhantomSpec:
    """Analytic test source: a sum of Gaussian blobs"""

    blobs: tuple[Blob, ...] = field(default_factory=tuple)
    symmetrize_x1: bool = False

    def __post_init__(self):
        blobs = tuple(b if isinstance(b, Blob) else Blob(**b) for b in self.blobs)
        object.__setattr__(self, "blobs", blobs)

    def effective_blobs(self) -> tuple[Blob, ...]:
        """Blobs including the mirrored copies. A blob centered on x1 = 0 is already even and is not copied"""
        if not self.symmetrize_x1:
            return self.blobs
        mirrored = tuple(b.mirrored_x1() for b in self.blobs if b.center[0] != 0.0)
        return self.blobs + mirrored

    @property
    def support_radius(self) -> float:
        return max((float(np.linalg.norm(b.center)) + SUPPORT_SIGMAS * b.sigma for b in self.blobs), default=0.0)

    @property
    def transverse_support_radius(self) -> float:
        return max((float(np.hypot(*b.center[:2])) + SUPPORT_SIGMAS * b.sigma for b in self.blobs), default=0.0)

    def evaluate(self, points: ArrayLike) -> NDArray[np.float64]:
        """Evaluate the phantom analytically at points (..., 3)"""
        p = np.asarray(points, dtype=float)
        out = np.zeros(p.shape[:-1])
        for blob in self.effective_blobs():
            out += blob.evaluate(p[..., 0], p[..., 1], p[..., 2])
        return out


@dataclass(frozen=True)
class DetectorGeometry:
    """Centers of the circular detectors: a cylinder or sphere of radius R, or the x2x3-plane"""

    kind: DetectorKind
    r_det: float
    R: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        if not self.r_det > 0:
            raise ValueError(f"r_det must be positive: {self.r_det}")
        if self.kind is DetectorKind.PLANE:
            object.__setattr__(self, "R", None)
        elif self.R is None or not self.R > 0:
            raise ValueError(f"{self.kind} geometry requires a positive R: {self.R}")


def sample_phantom(spec: PhantomSpec, grid: Grid3) -> ScalarField3:
    """Sample a Gaussian-blob phantom on the grid nodes"""
    x1, x2, x3 = grid.mesh()
    values = np.zeros(grid.shape)
    for blob in spec.effective_blobs():
        values += blob.evaluate(x1, x2, x3)

    parity = Parity.NONE
    if spec.symmetrize_x1:
        if not grid.is_symmetric_x1():
            raise GridError("symmetrize_x1 requires a grid whose x1 nodes are symmetric about 0")
        # removes the last-bit asymmetry of the floating point node coordinates
        values = 0.5 * (values + values[..., ::-1])
        parity = Parity.EVEN

    logger.debug(f"Sampled {len(spec.effective_blobs())} blob(s) on a {grid.counts} grid")
    return ScalarField3(grid, values, spec.support_radius, parity, spec.transverse_support_radius)


def sample_along_axes(
    volume: NDArray,
    starts: Sequence[float],
    steps: Sequence[float],
    coords: Sequence[ArrayLike],
    order: int = 1,
    fill_value: float = 0.0,
) -> NDArray[np.float64]:
    """Interpolate a regularly sampled N-d array at physical coordinates

    :param volume: Array sampled at starts[i] + k*steps[i] along axis i
    :param starts: Axis starts
    :param steps: Axis steps
    :param coords: One coordinate array per axis (broadcastable against each other)
    :param order: 1 for (multi)linear, 3 for cubic spline interpolation
    :param fill_value: Value returned outside the sampled box
    """
    coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
    indices = np.stack([(c - s) / d for c, s, d in zip(coords, starts, steps)])
    inside = np.ones(indices.shape[1:], dtype=bool)
    for axis, idx in enumerate(indices):
        inside &= (idx >= -1e-9) & (idx <= volume.shape[axis] - 1 + 1e-9)
    out = np.full(indices.shape[1:], fill_value, dtype=np.float64)
    if np.any(inside):
        out[inside] = ndimage.map_coordinates(volume, indices[:, inside], order=order, mode="nearest")
    return out


def sample_last_axis(
    values: NDArray, axis: UniformAxis, queries: ArrayLike, order: int = 1, fill_value: float = 0.0
) -> NDArray[np.float64]:
    """Interpolate each row values[i, j, ..., :] along its last axis

    :param values: Array (*lead, n) sampled on `axis` along the last dimension
    :param axis: Sample positions of the last dimension
    :param queries: Query positions, broadcastable to (*lead, m)
    :param order: Interpolation order
    :param fill_value: Value returned outside the sampled range
    """
    lead = values.shape[:-1]
    q = np.asarray(queries, dtype=float)
    ndim = max(q.ndim, len(lead) + 1)
    coords = [np.arange(n).reshape((1,) * i + (n,) + (1,) * (ndim - i - 1)) for i, n in enumerate(lead)]
    starts = [0.0] * len(lead) + [axis.start]
    steps = [1.0] * len(lead) + [axis.step]
    return sample_along_axes(values, starts, steps, [*coords, q], order=order, fill_value=fill_value)


def interpolate3_many(field: SampledVolume, points: ArrayLike, order: int = 1) -> NDArray[np.float64]:
    """Trilinear interpolation at points (..., 3). Points outside the grid bounding box evaluate to 0"""
    p = np.asarray(points, dtype=float)
    g = field.grid
    # array axes are (x3, x2, x1)
    return sample_along_axes(
        field.values, g.origin[::-1], g.spacing[::-1], (p[..., 2], p[..., 1], p[..., 0]), order=order
    )


def interpolate3(field: SampledVolume, point: ArrayLike) -> float:
    """Trilinear interpolation at a single point; 0 outside the grid bounding box"""
    return float(interpolate3_many(field, np.asarray(point, dtype=float)[None, :])[0])


def _values_of(obj: SampledVolume | ArrayLike) -> tuple[Grid3 | None, NDArray]:
    if hasattr(obj, "values"):
        return getattr(obj, "grid", None), np.asarray(obj.values, dtype=float)
    return None, np.asarray(obj, dtype=float)


def rel_l2_error(a: SampledVolume | ArrayLike, b: SampledVolume | ArrayLike, mask: ArrayLike | None = None) -> float:
    """Relative l2 error ||a - b|| / ||b||, or ||a|| when ||b|| = 0

    :param a: Field (or array) to assess
    :param b: Reference field (or array) on the same grid
    :param mask: Optional boolean mask restricting the comparison
    """
    grid_a, va = _values_of(a)
    grid_b, vb = _values_of(b)
    if (grid_a is not None and grid_b is not None and grid_a != grid_b) or va.shape != vb.shape:
        raise GridError("rel_l2_error requires both operands on the same grid")
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), va.shape)
        va, vb = va[m], vb[m]
    norm_b = float(np.linalg.norm(vb))
    if norm_b == 0.0:
        return float(np.linalg.norm(va))
    return float(np.linalg.norm(va - vb) / norm_b)
