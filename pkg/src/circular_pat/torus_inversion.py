"""Reduction of toroidal Radon data to circular Radon data

The back-projection R_T^* followed by the filter |ξ2| in the ρ-frequency turns R_T f into the two-circle sum

    S(μ, x3, r) = M f(μ, x3, |u - r|) + M f(μ, x3, u + r)

and M f follows from S by alternating sums that telescope away the second term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from circular_pat.core import Parity, SampledVolume, UniformAxis, sample_last_axis
from circular_pat.exceptions import GeometryError, GridError, ImaginaryResidueError, ParityError
from circular_pat.forward import CenterKind, Centers, CircularRadonData, ToroidalSinogram, circle_integrals
from circular_pat.logging import get_logger
from circular_pat.transforms import angular_frequencies, fourier_nd, inverse_fourier_nd

logger = get_logger(__name__)

IMAGINARY_RESIDUE_TOLERANCE = 1e-8

# Scale of S = |ξ2| R_T^* g. With the 1/(2π) in R_T and
# ∫ e^{-iξ1 s} J0(|ξ| √(s² + ρ²)) ds = 2 cos(ρ ξ2) / |ξ2|, the filtered back-projection is already the two-circle sum
CIRCLE_PAIR_SCALE = 1.0


@dataclass(frozen=True)
class FiltrationPlane:
    """Values on a (z, ρ) grid for every center μ, values[μ][z][ρ], with the ρ samples symmetric about 0"""

    centers: Centers
    z_axis: UniformAxis
    rho_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        if not np.isclose(self.rho_axis.start, -self.rho_axis.stop, rtol=0, atol=1e-9 * self.rho_axis.step):
            raise GridError(f"The ρ samples must be symmetric about 0: [{self.rho_axis.start}, {self.rho_axis.stop}]")
        arr = np.asarray(self.values, dtype=np.float64)
        shape = (len(self.centers), self.z_axis.count, self.rho_axis.count)
        if arr.shape != shape:
            raise GridError(f"FiltrationPlane values of shape {arr.shape} do not match the axes {shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("FiltrationPlane values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def zero_index(self) -> int:
        """Index of ρ = 0"""
        return self.rho_axis.count // 2

    def nonnegative(self) -> tuple[UniformAxis, NDArray[np.float64]]:
        """The ρ >= 0 half: its axis and values[μ][z][ρ]"""
        i0 = self.zero_index
        return UniformAxis(0.0, self.rho_axis.step, self.rho_axis.count - i0), self.values[..., i0:]

    def with_values(self, values: ArrayLike) -> FiltrationPlane:
        return replace(self, values=values)


@dataclass(frozen=True)
class CirclePairSum:
    """S(μ, x3, r) for r >= 0, zero beyond the sampled radii"""

    centers: Centers
    u: float
    x3_axis: UniformAxis
    r_axis: UniformAxis
    values: NDArray[np.float64]

    def __post_init__(self):
        if self.r_axis.start != 0:
            raise GridError(f"S must be sampled from r = 0: {self.r_axis.start}")

    def sample(self, radii: ArrayLike) -> NDArray[np.float64]:
        """S at radii broadcastable to (n_μ, n_x3, m); 0 beyond the sampled range"""
        return sample_last_axis(self.values, self.r_axis, radii)


def rt_star(
    g: ToroidalSinogram, z_axis: UniformAxis | None = None, rho_max: float | None = None, order: int = 1
) -> FiltrationPlane:
    """R_T^* g(μ, z, ρ) = ∫ g(μ, p, √((z-p)² + ρ²)) dp by the trapezoid rule over the sampled p range

    Computed for ρ >= 0 on the r step of the sinogram and mirrored, so the result is even in ρ. Radii below the
    first recorded r take the value of the first sample; radii beyond the last contribute nothing.

    :param g: Toroidal sinogram
    :param z_axis: Output z samples (the p samples by default)
    :param rho_max: Largest output ρ (the last recorded r by default)
    :param order: Interpolation order in r
    """
    z_axis = z_axis or g.p_axis
    step = g.r_axis.step
    half = UniformAxis.spanning(0.0, g.r_axis.stop if rho_max is None else rho_max, step)
    p = g.p_axis.values
    w = np.full(p.size, g.p_axis.step)
    if p.size > 1:
        w[[0, -1]] *= 0.5

    out = np.zeros((len(g.centers), z_axis.count, half.count))
    for k, z in enumerate(z_axis.values):
        radii = np.sqrt((z - p[:, None]) ** 2 + half.values[None, :] ** 2)
        radii = np.maximum(radii, g.r_axis.start)
        samples = sample_last_axis(g.values, g.r_axis, radii[None], order=order)
        out[:, k, :] = np.einsum("p,mpr->mr", w, samples)

    values = np.concatenate([out[..., :0:-1], out], axis=-1)
    rho_axis = UniformAxis(-half.stop, step, 2 * half.count - 1)
    logger.debug(f"Toroidal back-projection onto {z_axis.count} x {rho_axis.count} samples per center")
    return FiltrationPlane(g.centers, z_axis, rho_axis, values)


def riesz_filter(plane: FiltrationPlane, padding_factor: int = 2) -> FiltrationPlane:
    """Multiply the 2D spectrum in (z, ρ) by |ξ2|, the modulus of the ρ-frequency

    :param plane: Plane to filter
    :param padding_factor: Zero-padding in both axes. 1 treats the plane as periodic
    """
    values = plane.values
    n_mu, nz, nr = values.shape
    pad = max(padding_factor, 1)
    padded = np.zeros((n_mu, pad * nz, pad * nr))
    padded[:, :nz, :nr] = values

    steps = (plane.z_axis.step, plane.rho_axis.step)
    origins = (plane.z_axis.start, plane.rho_axis.start)
    xi2 = np.abs(angular_frequencies(pad * nr, plane.rho_axis.step))
    spectrum = fourier_nd(padded, steps, origins, axes=(-2, -1)) * xi2[None, None, :]
    filtered = inverse_fourier_nd(spectrum, steps, origins, axes=(-2, -1))[:, :nz, :nr]

    residue = float(np.linalg.norm(filtered.imag))
    scale = float(np.linalg.norm(filtered.real))
    if residue > IMAGINARY_RESIDUE_TOLERANCE * max(scale, np.finfo(float).tiny):
        raise ImaginaryResidueError(f"Imaginary residue {residue:.3g} exceeds the tolerance (real part {scale:.3g})")
    return plane.with_values(filtered.real)


def torus_to_circle_pair(
    g: ToroidalSinogram, z_axis: UniformAxis | None = None, padding_factor: int = 2, order: int = 1
) -> CirclePairSum:
    """S = CIRCLE_PAIR_SCALE · |ξ2|-filtered R_T^* g, which equals M f(μ, x3, |u - r|) + M f(μ, x3, u + r)

    There is no half factor in front of the filter: R_T carries 1/(2π) and R_T^* integrates over the whole p line, and
    with these normalizations the filtered back-projection equals the two-circle sum. The p samples must cover the
    support of the data.
    """
    filtered = riesz_filter(rt_star(g, z_axis, order=order), padding_factor)
    r_axis, values = filtered.nonnegative()
    values = CIRCLE_PAIR_SCALE * values
    logger.info(f"Two-circle sums on {len(g.centers)} centers x {filtered.z_axis.count} x {r_axis.count} done")
    return CirclePairSum(g.centers, g.u, filtered.z_axis, r_axis, np.array(values))


def two_circle_sum(
    f: SampledVolume, centers: Centers, u: float, x3_axis: UniformAxis, r_axis: UniformAxis, n_alpha: int = 128
) -> NDArray[np.float64]:
    """M f(μ, x3, |u - r|) + M f(μ, x3, u + r) by direct quadrature of the circle integrals

    :return: Array [n_μ][n_x3][n_r]
    """
    mu = centers.points()
    x3 = x3_axis.values
    r = r_axis.values
    inner = circle_integrals(f, mu, x3, np.abs(u - r), n_alpha)
    outer = circle_integrals(f, mu, x3, u + r, n_alpha)
    return inner + outer


def _alternating_sum(
    S: CirclePairSum, r: NDArray, j_inner: int, j_outer: int, single_term: bool
) -> NDArray[np.float64]:
    u = S.u
    inner = r <= u
    out = np.zeros((len(S.centers), S.x3_axis.count, r.size))
    if single_term:
        out[..., ~inner] = S.sample(r[~inner] - u)
        return out
    for j in range(max(j_inner, j_outer) + 1):
        sign = (-1.0) ** j
        args = np.where(inner, (2 * j + 1) * u - r, (2 * j + 1) * u + r)
        active = np.where(inner, j <= j_inner, j <= j_outer)
        if np.any(active):
            out[..., active] += sign * S.sample(args[active])
    return out


def _check_unfolding(S: CirclePairSum, u: float, kind: CenterKind):
    if not u > 0:
        raise GeometryError(f"u must be positive: {u}")
    if not np.isclose(S.u, u):
        raise GeometryError(f"S was computed for u = {S.u}, not {u}")
    if S.centers.kind is not kind:
        raise GeometryError(f"Expected {kind} centers, got {S.centers.kind}")


def unfold_cylinder(
    S: CirclePairSum,
    u: float,
    R: float,
    r_axis: UniformAxis,
    single_term: bool = False,
    j_max: int | None = None,
) -> CircularRadonData:
    """M f for circle centers on the cylinder of radius R

    M f(r) = Σ_{j=0}^{J} (-1)^j S((2j+1)u - r) with J = [R/u + 1/2] for r <= u, and
    M f(r) = Σ_{j=0}^{J} (-1)^j S((2j+1)u + r) with J = [R/u] for r > u.

    :param S: Two-circle sums for circle centers
    :param u: Radius of the central circle of the tori
    :param R: Radius of the cylinder containing the support
    :param r_axis: Output radii (positive)
    :param single_term: Use M f(r) = S(r - u) for r > u and 0 otherwise, valid for R/2 < u < R when the support lies
                        in the cylinder of radius R - u
    :param j_max: Override of both upper limits
    """
    _check_unfolding(S, u, CenterKind.CIRCLE)
    j_inner = int(np.floor(R / u + 0.5)) if j_max is None else j_max
    j_outer = int(np.floor(R / u)) if j_max is None else j_max
    if single_term and not R / 2 < u < R:
        logger.warning(f"Single-term unfolding assumes R/2 < u < R (u={u}, R={R})")
    values = _alternating_sum(S, r_axis.values, j_inner, j_outer, single_term)
    logger.info(f"Cylinder unfolding done (J = {j_inner}/{j_outer})")
    return CircularRadonData(S.centers, S.x3_axis, r_axis, values)


def unfold_plane(
    S: CirclePairSum,
    u: float,
    R: float,
    r_axis: UniformAxis,
    source_parity: Parity = Parity.EVEN,
    j_max: int | None = None,
) -> CircularRadonData:
    """M f for circle centers on the x2-axis, for sources even in x1 supported in the ball of radius R

    Same sums as unfold_cylinder() with the upper limits [(R+u)/2u] for r <= u and [R/2u] for r > u.

    :param source_parity: Parity of the source in x1; only even sources are determined by the data
    """
    if Parity(source_parity) is not Parity.EVEN:
        raise ParityError(f"Planar unfolding requires a source even in x1 (got {source_parity})")
    _check_unfolding(S, u, CenterKind.LINE)
    j_inner = int(np.floor((R + u) / (2 * u))) if j_max is None else j_max
    j_outer = int(np.floor(R / (2 * u))) if j_max is None else j_max
    values = _alternating_sum(S, r_axis.values, j_inner, j_outer, single_term=False)
    logger.info(f"Plane unfolding done (J = {j_inner}/{j_outer})")
    return CircularRadonData(S.centers, S.x3_axis, r_axis, values)
