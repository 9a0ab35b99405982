"""Recovery of M_{r_det}f from detector data and of f from M_{r_det}f

Cylinder: back-project along the axis, integrate over the detector angle and apply the transverse Laplacian. Plane:
solve for the x1-profile of every transverse frequency, or apply the Fourier multiplier |ξ||ξ1| to the planar
back-projection. Sphere: back-project the second t-derivative of t²g. In every geometry f then follows from
M_{r_det}f by dividing the transverse spectrum by 2πJ0(r_det|ξ|).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from scipy import fft

from circular_pat.core import (
    DetectorGeometry,
    DetectorKind,
    Grid3,
    ScalarField3,
    UniformAxis,
    interpolate3_many,
    sample_last_axis,
)
from circular_pat.exceptions import GeometryError, GridError
from circular_pat.forward import (
    MAX_NODES_PER_BATCH,
    CircularMeanMap,
    CylindricalSinogram,
    PlanarSinogram,
    PressureData,
    SphericalSinogram,
    circular_mean_fixed_radius,
    rp_from_pressure,
)
from circular_pat.logging import get_logger
from circular_pat.transforms import (
    angular_frequencies,
    bessel_j0,
    first_difference,
    fourier2,
    fourier3,
    hilbert_along,
    inverse_fourier2,
    inverse_fourier3,
    j0_zeros,
    laplacian2,
    second_difference,
)
from circular_pat.utils import timed

logger = get_logger(__name__)

FILTRATION_NORMALIZATION = 1 / (2 * np.pi)
CYLINDER_NORMALIZATION = -1 / (8 * np.pi**2)
PLANE_NORMALIZATION = 1 / (8 * np.pi**2)
SPHERE_NORMALIZATION = -1 / (8 * np.pi**2)
J0_ZERO_TOLERANCE = 1e-2


def _trapezoid_weights(axis: UniformAxis) -> NDArray[np.float64]:
    w = np.full(axis.count, axis.step)
    if axis.count > 1:
        w[[0, -1]] *= 0.5
    return w


def _grid_axis(grid: Grid3, i: int) -> UniformAxis:
    return UniformAxis(grid.origin[i], grid.spacing[i], grid.counts[i])


# Cylinder


def rp_backprojection(
    g: CylindricalSinogram, x3_axis: UniformAxis, rho_axis: UniformAxis, order: int = 1
) -> NDArray[np.float64]:
    """R_P^# g(Rθ, x3, ρ) = ∫ g(Rθ, z, √((z-x3)²+ρ²)) √((z-x3)²+ρ²) dz

    Trapezoid rule over the sampled z range. Arguments beyond the recorded t range contribute nothing.

    :return: Array [n_θ][n_x3][n_ρ]
    """
    z = g.z_axis.values
    w = _trapezoid_weights(g.z_axis)
    rho = rho_axis.values
    out = np.zeros((g.theta.count, x3_axis.count, rho.size))
    for k, x3 in enumerate(x3_axis.values):
        t = np.sqrt((z[:, None] - x3) ** 2 + rho[None, :] ** 2)
        samples = sample_last_axis(g.values, g.t_axis, t[None], order=order)
        out[:, k, :] = np.einsum("z,azr->ar", w, samples * t)
    logger.debug(f"Axial back-projection onto {x3_axis.count} x {rho.size} samples per angle")
    return out


def circular_means_of_cmm_via_filtration(
    g: CylindricalSinogram, x3_axis: UniformAxis | None = None, padding_factor: int = 2, order: int = 1
) -> NDArray[np.float64]:
    """Circular means of M_{r_det}f about the detector centers, C(θ, x3, t) = (1/(2πt)) H_t ∂_t R_P^# g

    R_P^# g is extended evenly in t before the derivative and the Hilbert transform. The value at t = 0 is
    extrapolated linearly from the first two positive samples.

    :return: Array [n_θ][n_x3][n_t] on the sinogram's t samples
    """
    if g.t_axis.start != 0:
        raise GridError(f"Filtration requires t samples starting at 0: {g.t_axis.start}")
    if g.t_axis.count < 4:
        raise GridError("Filtration requires at least 4 t samples")
    x3_axis = x3_axis or g.z_axis
    h = rp_backprojection(g, x3_axis, g.t_axis, order=order)
    n = g.t_axis.count
    even = np.concatenate([h[..., :0:-1], h], axis=-1)
    derivative = first_difference(even, g.t_axis.step)
    filtered = hilbert_along(derivative, axis=-1, padding_factor=padding_factor)[..., n - 1 :]
    t = g.t_axis.values
    out = np.empty_like(filtered)
    out[..., 1:] = filtered[..., 1:] / t[1:]
    out[..., 0] = 2 * out[..., 1] - out[..., 2]
    return FILTRATION_NORMALIZATION * out


def circle_pair_means_direct(
    f: ScalarField3,
    R: float,
    r_det: float,
    theta: UniformAxis,
    x3_axis: UniformAxis,
    t_axis: UniformAxis,
    n_alpha: int = 128,
    n_beta: int = 128,
) -> NDArray[np.float64]:
    """∫₀^{2π} ∫₀^{2π} f(Rθ⃗ + r_det α⃗ + t β⃗, x3) dβ dα by the product trapezoid rule

    Reference values for circular_means_of_cmm_via_filtration().

    :return: Array [n_θ][n_x3][n_t]
    """
    mu = R * np.stack([np.cos(theta.values), np.sin(theta.values)], axis=-1)
    x3 = x3_axis.values
    t = t_axis.values
    out = np.zeros((mu.shape[0], x3.size, t.size))
    z = np.broadcast_to(x3[None, :, None], out.shape)
    for alpha in 2 * np.pi * np.arange(n_alpha) / n_alpha:
        c1 = (mu[:, 0] + r_det * np.cos(alpha))[:, None, None]
        c2 = (mu[:, 1] + r_det * np.sin(alpha))[:, None, None]
        for beta in 2 * np.pi * np.arange(n_beta) / n_beta:
            p1 = np.broadcast_to(c1 + t * np.cos(beta), out.shape)
            p2 = np.broadcast_to(c2 + t * np.sin(beta), out.shape)
            out += interpolate3_many(f, np.stack([p1, p2, z], axis=-1))
    return out * (2 * np.pi / n_alpha) * (2 * np.pi / n_beta)


def invert_cylinder(g: CylindricalSinogram, target_grid: Grid3, order: int = 1) -> CircularMeanMap:
    """M_{r_det}f(x) = c △_{x1,x2} ∫₀^{2π} R_P^# g(Rθ, x3, |(x1,x2) - Rθ⃗|) dθ

    c = CYLINDER_NORMALIZATION. The angular integral is evaluated on the target grid widened by one node in x1 and x2,
    so the Laplacian is central at every target node.

    The z samples must reach far past the target: truncating R_P^# g to |z - x3| <= W perturbs M_{r_det}f by about
    (1/(4πW²)) ∫ ∂²_{x3}M_{r_det}f (R² + 2|x'|² - |y'|²) dy'. A half-window of 12R keeps this near 1% of the peak,
    with t recorded up to √(W² + (R + max|x'|)²).

    :param g: Cylindrical sinogram
    :param target_grid: Grid inside the open cylinder x1² + x2² < R²
    :param order: Interpolation order in ρ and t
    """
    R = g.R
    x1, x2, _ = target_grid.mesh()
    if np.any(x1**2 + x2**2 >= R**2):
        raise GeometryError(f"The target grid must lie inside the open cylinder of radius R = {R}")

    dx1, dx2, _ = target_grid.spacing
    widened = Grid3(
        (target_grid.counts[0] + 2, target_grid.counts[1] + 2, target_grid.counts[2]),
        target_grid.spacing,
        (target_grid.origin[0] - dx1, target_grid.origin[1] - dx2, target_grid.origin[2]),
    )
    w1, w2, _ = widened.mesh()
    nz, ny, nx = widened.shape
    rho_max = R + float(np.sqrt(w1**2 + w2**2).max())
    rho_axis = UniformAxis.spanning(0.0, rho_max + g.t_axis.step, g.t_axis.step)
    h = rp_backprojection(g, _grid_axis(target_grid, 2), rho_axis, order=order)

    xs1, xs2 = w1[0].ravel(), w2[0].ravel()
    angular = np.zeros((nz, ny * nx))
    for i, theta in enumerate(g.theta.values):
        rho = np.hypot(xs1 - R * np.cos(theta), xs2 - R * np.sin(theta))
        angular += sample_last_axis(h[i], rho_axis, np.broadcast_to(rho, (nz, rho.size)), order=order)
    angular = angular.reshape(widened.shape) * g.theta.step

    values = CYLINDER_NORMALIZATION * laplacian2(angular, (dx1, dx2))[:, 1:-1, 1:-1]
    logger.info(f"Cylinder inversion onto a {target_grid.counts} grid done")
    return CircularMeanMap(target_grid, values, g.r_det)


# Plane


def mp_star(g: PlanarSinogram, target_grid: Grid3, order: int = 1) -> NDArray[np.float64]:
    """M_P^* g(x) = ∫_{ℝ²} g(y, z, √(x1² + (y-x2)² + (z-x3)²)) dy dz

    Trapezoid rule over the sampled detector plane. The integrand depends on x1², so on a grid symmetric in x1 only
    the nodes with x1 <= 0 are computed and mirrored.

    :return: Array shaped like the target grid
    """
    y = g.y_axis.values
    z = g.z_axis.values
    weights = _trapezoid_weights(g.y_axis)[:, None] * _trapezoid_weights(g.z_axis)[None, :]
    x1_axis = target_grid.axis(0)
    nz, ny, nx = target_grid.shape
    _, x2, x3 = target_grid.mesh()
    x2, x3 = x2[:, :, 0].ravel(), x3[:, :, 0].ravel()

    symmetric = target_grid.is_symmetric_x1()
    todo = range((nx + 1) // 2) if symmetric else range(nx)
    batch = max(1, MAX_NODES_PER_BATCH // (y.size * z.size))
    out = np.zeros(target_grid.shape)
    for ix in todo:
        column = np.empty(x2.size)
        for start in range(0, x2.size, batch):
            q2, q3 = x2[start : start + batch], x3[start : start + batch]
            dy2 = (y[:, None, None] - q2[None, None, :]) ** 2
            dz2 = (z[None, :, None] - q3[None, None, :]) ** 2
            t = np.sqrt(x1_axis[ix] ** 2 + dy2 + dz2)
            samples = sample_last_axis(g.values, g.t_axis, t, order=order)
            column[start : start + batch] = np.einsum("yz,yzq->q", weights, samples)
        out[:, :, ix] = column.reshape(nz, ny)
        if symmetric:
            out[:, :, nx - 1 - ix] = out[:, :, ix]
    logger.debug(f"Planar back-projection onto a {target_grid.counts} grid")
    return out


class PlaneMethod(StrEnum):
    """How invert_plane() recovers M_{r_det}f from planar data

    SUPPORT_FIT fits, for every transverse frequency, the x1-profile of M_{r_det}f on the target nodes to the
    transformed data. It only uses t up to the distance between the target and the edge of the detector plane.
    MULTIPLIER applies c|ξ||ξ1| to the 3D spectrum of M_P^* g. It is exact for data on the whole plane and all t, and
    converges slowly in the recorded aperture and t range.
    """

    SUPPORT_FIT = "support-fit"
    MULTIPLIER = "multiplier"


# Gauss-Legendre nodes per interval of the x1-profile basis
PROFILE_GAUSS_NODES = 6


def _cosine_taper(xi_norm: NDArray, cutoff: float) -> NDArray[np.float64]:
    return 0.5 * (1 + np.cos(np.pi * np.minimum(xi_norm / cutoff, 1.0)))


def _edge_window(n_inner: int, pad: int) -> NDArray[np.float64]:
    """1 on the inner nodes and the first half of the padding, then a cosine roll-off to 0 at both ends"""
    w = np.ones(n_inner + 2 * pad)
    ramp = pad - pad // 2
    if ramp > 0:
        rise = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
        w[:ramp] = rise
        w[-ramp:] = rise[::-1]
    return w


def _invert_plane_multiplier(
    g: PlanarSinogram, target_grid: Grid3, taper: bool, order: int, padding_factor: int
) -> NDArray[np.float64]:
    """F⁻¹[c |ξ||ξ1| F(M_P^* g)] with c = PLANE_NORMALIZATION

    M_P^* g is computed on the target grid widened by half its size on every side and rolled off to 0 over the outer
    half of the widening. The ξ1 = 0 plane, where F(M_P^* g) is singular, is extrapolated from ξ1 = ±Δξ1, ±2Δξ1.
    """
    pad = tuple(n // 2 for n in target_grid.counts)
    widened = Grid3(
        tuple(n + 2 * p for n, p in zip(target_grid.counts, pad)),
        target_grid.spacing,
        tuple(o - p * d for o, p, d in zip(target_grid.origin, pad, target_grid.spacing)),
    )
    window = (
        _edge_window(target_grid.counts[2], pad[2])[:, None, None]
        * _edge_window(target_grid.counts[1], pad[1])[None, :, None]
        * _edge_window(target_grid.counts[0], pad[0])[None, None, :]
    )
    back = mp_star(g, widened, order=order) * window

    shape = widened.shape
    n_fft = tuple(fft.next_fast_len(max(padding_factor, 1) * n) for n in shape)
    padded = np.zeros(n_fft)
    padded[: shape[0], : shape[1], : shape[2]] = back

    steps = widened.spacing[::-1]
    origins = widened.origin[::-1]
    xi3, xi2, xi1 = np.meshgrid(*(angular_frequencies(n, d) for n, d in zip(n_fft, steps)), indexing="ij")
    xi_norm = np.sqrt(xi1**2 + xi2**2 + xi3**2)
    multiplier = PLANE_NORMALIZATION * xi_norm * np.abs(xi1)
    if taper:
        multiplier *= _cosine_taper(xi_norm, np.pi / max(steps))

    spectrum = fourier3(padded, steps, origins) * multiplier
    if n_fft[2] >= 5:
        near = 0.5 * (spectrum[..., 1] + spectrum[..., -1])
        far = 0.5 * (spectrum[..., 2] + spectrum[..., -2])
        spectrum[..., 0] = (4 * near - far) / 3
    values = inverse_fourier3(spectrum, steps, origins).real
    (k3, k2, k1), (n3, n2, n1) = pad[::-1], target_grid.shape
    return values[k3 : k3 + n3, k2 : k2 + n2, k1 : k1 + n1]


def plane_usable_t(g: PlanarSinogram, target_grid: Grid3) -> float:
    """Largest t for which every sphere meeting the target box is centered on the recorded detector plane"""
    x2, x3 = target_grid.axis(1), target_grid.axis(2)
    gap = min(x2[0] - g.y_axis.start, g.y_axis.stop - x2[-1], x3[0] - g.z_axis.start, g.z_axis.stop - x3[-1])
    return float(min(gap, g.t_axis.stop))


def _transverse_spectrum(
    g: PlanarSinogram, t_index: NDArray, xi2: NDArray, xi3: NDArray
) -> NDArray[np.complex128]:
    """∫∫ g(y, z, t) e^{-i(ξ2 y + ξ3 z)} dy dz by the trapezoid rule

    :return: Array [n_t][n_ξ3][n_ξ2]
    """
    e2 = np.exp(-1j * np.outer(xi2, g.y_axis.values)) * _trapezoid_weights(g.y_axis)
    e3 = np.exp(-1j * np.outer(xi3, g.z_axis.values)) * _trapezoid_weights(g.z_axis)
    partial = np.tensordot(e2, g.values[..., t_index], axes=(1, 0))
    return np.moveaxis(np.tensordot(e3, partial, axes=(1, 1)), -1, 0)


def _profile_basis(knots: NDArray, s: NDArray) -> NDArray[np.float64]:
    """Piecewise-linear functions of s >= 0 with value δ_jk at knots[k]

    The last knot carries no function: every basis function vanishes from there on. Below the first knot each one
    is constant.

    :return: Array (*s.shape, len(knots) - 1)
    """
    rows = np.eye(knots.size - 1, knots.size)
    return np.stack([np.interp(s, knots, row) for row in rows], axis=-1)


def planar_profile_matrices(k: NDArray, t: NDArray, knots: NDArray) -> NDArray[np.float64]:
    """A[k, t, j] = ∫₀^t φ_j(s) J0(k √(t² - s²)) ds for the basis φ_j of _profile_basis()

    For a source even in x1 with transverse spectrum ĥ(x1; ξ̂), t/(4π) times the transverse spectrum of the planar
    data at |ξ̂| = k equals ∫₀^t ĥ(s; ξ̂) J0(k √(t² - s²)) ds.

    :return: Array (n_k, n_t, len(knots) - 1)
    """
    u, w = np.polynomial.legendre.leggauss(PROFILE_GAUSS_NODES)
    breaks = np.concatenate([[0.0], knots])
    lo = np.minimum(breaks[:-1][None, :], t[:, None])
    hi = np.minimum(breaks[1:][None, :], t[:, None])
    half = 0.5 * (hi - lo)
    s = (lo + half)[..., None] + half[..., None] * u
    ws = half[..., None] * w
    s, ws = s.reshape(t.size, -1), ws.reshape(t.size, -1)
    basis = _profile_basis(knots, s) * ws[..., None]
    rho = np.sqrt(np.maximum(t[:, None] ** 2 - s**2, 0.0))
    kernel = bessel_j0(k[:, None, None] * rho[None])
    return np.einsum("ktq,tqj->ktj", kernel, basis)


def _fit_profiles(
    spectrum: NDArray, k: NDArray, t: NDArray, knots: NDArray, regularization: float
) -> NDArray[np.complex128]:
    """Regularized least-squares profile coefficients for every transverse frequency

    :param spectrum: Right-hand sides [n_t][n_points]
    :param k: |ξ̂| of each point
    :return: Array [n_basis][n_points]
    """
    n_basis = knots.size - 1
    k_unique, inverse = np.unique(np.round(k, 10), return_inverse=True)
    inverse = inverse.reshape(-1)
    out = np.zeros((n_basis, k.size), dtype=np.complex128)
    chunk = max(1, MAX_NODES_PER_BATCH // (t.size * (n_basis + 1) * PROFILE_GAUSS_NODES))
    for start in range(0, k_unique.size, chunk):
        A = planar_profile_matrices(k_unique[start : start + chunk], t, knots)
        normal = np.einsum("ktm,ktn->kmn", A, A)
        scale = np.maximum(np.trace(normal, axis1=1, axis2=2) / n_basis, np.finfo(float).tiny)
        normal += (regularization * scale)[:, None, None] * np.eye(n_basis)
        solver = np.linalg.solve(normal, np.transpose(A, (0, 2, 1)))
        selected = np.flatnonzero((inverse >= start) & (inverse < start + chunk))
        out[:, selected] = np.einsum("pmt,tp->mp", solver[inverse[selected] - start], spectrum[:, selected])
    return out


def _invert_plane_support_fit(
    g: PlanarSinogram, target_grid: Grid3, taper: bool, padding_factor: int, regularization: float
) -> NDArray[np.float64]:
    x1 = target_grid.axis(0)
    dx1, dx2, dx3 = target_grid.spacing
    nodes = np.abs(x1[x1 >= -0.25 * dx1])
    knots = np.append(nodes, nodes[-1] + dx1)
    t_use = plane_usable_t(g, target_grid)
    if not t_use > knots[-1]:
        raise GeometryError(
            f"The detector plane must reach more than {knots[-1]:.4g} past the target grid in x2 and x3, "
            f"with t recorded that far: usable t = {t_use:.4g}"
        )
    t_all = g.t_axis.values
    t_index = np.flatnonzero((t_all > 0) & (t_all <= t_use + 1e-9 * g.t_axis.step))
    t = t_all[t_index]

    nz, ny, _ = target_grid.shape
    n3, n2 = (fft.next_fast_len(max(padding_factor, 1) * n) for n in (nz, ny))
    xi3, xi2 = angular_frequencies(n3, dx3), angular_frequencies(n2, dx2)
    k3, k2 = np.meshgrid(xi3, xi2, indexing="ij")
    resolved = (np.abs(k2) <= np.pi / g.y_axis.step) & (np.abs(k3) <= np.pi / g.z_axis.step)

    spectrum = _transverse_spectrum(g, t_index, xi2, xi3) * (t / (4 * np.pi))[:, None, None]
    profiles = np.zeros((nodes.size, n3, n2), dtype=np.complex128)
    profiles[:, resolved] = _fit_profiles(spectrum[:, resolved], np.hypot(k2, k3)[resolved], t, knots, regularization)
    if taper:
        profiles *= _cosine_taper(np.hypot(k2, k3), np.pi / max(dx2, dx3))

    slices = inverse_fourier2(profiles, (dx3, dx2), target_grid.origin[:0:-1]).real[:, :nz, :ny]
    node_of = np.argmin(np.abs(np.abs(x1)[:, None] - nodes[None, :]), axis=1)
    return np.moveaxis(slices[node_of], 0, -1)


def invert_plane(
    g: PlanarSinogram,
    target_grid: Grid3,
    taper: bool = False,
    order: int = 1,
    padding_factor: int = 2,
    method: PlaneMethod = PlaneMethod.SUPPORT_FIT,
    regularization: float = 1e-6,
) -> CircularMeanMap:
    """M_{r_det}f from planar data of a source even in x1

    Both methods rest on the same Fourier relation: with F(M_P^* g)(ξ) = (4π/|ξ|) ∫₀^∞ t ĝ(ξ̂, t) sin(t|ξ|) dt,
    M_{r_det}f = F⁻¹[(1/(8π²)) |ξ||ξ1| F(M_P^* g)]. See PlaneMethod for how they use it.

    :param g: Planar sinogram of a source even in x1
    :param target_grid: Grid symmetric in x1. With SUPPORT_FIT, M_{r_det}f must vanish beyond its x1 range
    :param taper: Roll the result off with a cosine taper up to the Nyquist frequency
    :param order: Interpolation order in t (MULTIPLIER)
    :param padding_factor: Zero-padding of the FFTs
    :param method: PlaneMethod
    :param regularization: Tikhonov parameter of SUPPORT_FIT, relative to the mean diagonal of the normal matrix
    """
    if not target_grid.is_symmetric_x1():
        raise GridError("Planar inversion requires a target grid symmetric in x1")
    if regularization < 0:
        raise ValueError(f"regularization must be nonnegative: {regularization}")
    match PlaneMethod(method):
        case PlaneMethod.SUPPORT_FIT:
            values = _invert_plane_support_fit(g, target_grid, taper, padding_factor, regularization)
        case PlaneMethod.MULTIPLIER:
            values = _invert_plane_multiplier(g, target_grid, taper, order, padding_factor)
    logger.info(f"Planar inversion ({method}) onto a {target_grid.counts} grid done")
    return CircularMeanMap(target_grid, values, g.r_det)


# Sphere


def invert_sphere(g: SphericalSinogram, target_grid: Grid3, order: int = 1) -> CircularMeanMap:
    """M_{r_det}f(x) = c R Σ_ω w_ω q(ω, |Rω - x|) / |Rω - x| with q = ∂²_t(t² g) and c = SPHERE_NORMALIZATION

    :param g: Spherical sinogram
    :param target_grid: Grid inside the open ball of radius R
    :param order: Interpolation order in t
    """
    R = g.R
    points = np.stack(target_grid.mesh(), axis=-1).reshape(-1, 3)
    if np.any(np.linalg.norm(points, axis=-1) >= R):
        raise GeometryError(f"The target grid must lie inside the open ball of radius R = {R}")

    t = g.t_axis.values
    q = second_difference(t**2 * g.values, g.t_axis.step, axis=-1, edge_order=2)
    centers = g.detector_centers()
    weights = g.weights
    acc = np.zeros(points.shape[0])
    batch = max(1, MAX_NODES_PER_BATCH // points.shape[0])
    for start in range(0, centers.shape[0], batch):
        sl = slice(start, start + batch)
        dist = np.linalg.norm(centers[sl, None, :] - points[None, :, :], axis=-1)
        samples = sample_last_axis(q[sl], g.t_axis, dist, order=order)
        acc += np.sum(weights[sl, None] * samples / dist, axis=0)

    values = SPHERE_NORMALIZATION * R * acc.reshape(target_grid.shape)
    logger.info(f"Sphere inversion onto a {target_grid.counts} grid done")
    return CircularMeanMap(target_grid, values, g.r_det)


# Deconvolution


@dataclass(frozen=True)
class NearZeroShell:
    """Lattice frequencies whose r_det|ξ| falls within the tolerance of the k-th zero of J0"""

    zero_index: int
    xi: float
    frequency_count: int


@dataclass(frozen=True)
class ConditionReport:
    r_det: float
    reg_epsilon: float
    min_abs_j0: float
    near_zero_shells: tuple[NearZeroShell, ...] = field(default_factory=tuple)

    @property
    def is_ill_conditioned(self) -> bool:
        return bool(self.near_zero_shells)

    def summary(self) -> str:
        if not self.near_zero_shells:
            return f"no lattice frequency near a zero of J0 (min |J0| = {self.min_abs_j0:.3g})"
        shells = ", ".join(f"k={s.zero_index} |ξ|={s.xi:.4g} ({s.frequency_count})" for s in self.near_zero_shells)
        return f"frequencies near zeros of J0: {shells}"


def condition_report(xi_norm: NDArray, r_det: float, reg_epsilon: float) -> ConditionReport:
    """Locate the lattice frequencies where the Bessel division is ill-conditioned"""
    arg = r_det * xi_norm
    n_zeros = int(np.ceil(arg.max() / np.pi)) + 2
    shells = []
    for k, zero in enumerate(j0_zeros(n_zeros), start=1):
        count = int(np.count_nonzero(np.abs(arg - zero) <= J0_ZERO_TOLERANCE))
        if count:
            shells.append(NearZeroShell(k, float(zero / r_det), count))
    return ConditionReport(r_det, reg_epsilon, float(np.abs(bessel_j0(arg)).min()), tuple(shells))


def deconvolve_fixed_radius(
    m: CircularMeanMap, reg_epsilon: float = 1e-6, support_radius: float = 0.0
) -> tuple[ScalarField3, ConditionReport]:
    """Recover f from M_{r_det}f slice by slice: f̂ = F J0 / (2π (J0² + ε)) with J0 = J0(r_det|ξ|)

    :param m: Circular means of radius r_det
    :param reg_epsilon: Tikhonov parameter; 0 divides exactly
    :param support_radius: Support radius to attach to the result
    """
    if reg_epsilon < 0:
        raise ValueError(f"reg_epsilon must be nonnegative: {reg_epsilon}")
    grid = m.grid
    steps = (grid.spacing[1], grid.spacing[0])
    origins = (grid.origin[1], grid.origin[0])
    _, ny, nx = grid.shape
    xi2, xi1 = np.meshgrid(angular_frequencies(ny, steps[0]), angular_frequencies(nx, steps[1]), indexing="ij")
    xi_norm = np.hypot(xi1, xi2)
    j0 = bessel_j0(m.r_det * xi_norm)
    report = condition_report(xi_norm, m.r_det, reg_epsilon)
    if report.is_ill_conditioned:
        logger.warning(f"Ill-conditioned deconvolution: {report.summary()}")

    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.where(j0**2 + reg_epsilon > 0, j0 / (2 * np.pi * (j0**2 + reg_epsilon)), 0.0)
    spectrum = fourier2(m.values, steps, origins) * kernel
    values = inverse_fourier2(spectrum, steps, origins).real
    logger.info(f"Bessel deconvolution done (r_det={m.r_det}, ε={reg_epsilon})")
    return ScalarField3(grid, values, support_radius), report


# Pipeline


@dataclass(frozen=True)
class InversionOptions:
    """Options of the inversion chain

    :param reg_epsilon: Tikhonov parameter of the Bessel deconvolution
    :param interpolation_order: 1 (linear) or 3 (cubic)
    :param taper: Cosine taper on the planar result
    :param padding_factor: Zero-padding factor of the FFTs
    :param plane_method: PlaneMethod of the planar inversion
    :param plane_regularization: Relative Tikhonov parameter of PlaneMethod.SUPPORT_FIT
    """

    reg_epsilon: float = 1e-6
    interpolation_order: int = 1
    taper: bool = False
    padding_factor: int = 2
    plane_method: PlaneMethod = PlaneMethod.SUPPORT_FIT
    plane_regularization: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "plane_method", PlaneMethod(self.plane_method))
        if self.reg_epsilon < 0:
            raise ValueError(f"reg_epsilon must be nonnegative: {self.reg_epsilon}")
        if self.plane_regularization < 0:
            raise ValueError(f"plane_regularization must be nonnegative: {self.plane_regularization}")
        if self.interpolation_order not in (1, 3):
            raise ValueError(f"interpolation_order must be 1 or 3: {self.interpolation_order}")
        if self.padding_factor < 1:
            raise ValueError(f"padding_factor must be >= 1: {self.padding_factor}")


@dataclass(frozen=True)
class Reconstruction:
    field: ScalarField3
    circular_means: CircularMeanMap
    condition: ConditionReport
    timings: dict[str, float]


def reconstruct(
    geometry: DetectorGeometry,
    data: PressureData,
    target_grid: Grid3,
    options: InversionOptions = InversionOptions(),
    support_radius: float = 0.0,
) -> Reconstruction:
    """Pressure data -> R_P f -> M_{r_det}f -> f

    :param geometry: Detector geometry the data were measured with
    :param data: Pressure data
    :param target_grid: Reconstruction grid
    :param options: Inversion options
    :param support_radius: Support radius to attach to the reconstructed field
    """
    if data.geometry != geometry:
        raise GeometryError(f"Data geometry {data.geometry} does not match {geometry}")
    timings: dict[str, float] = {}
    order = options.interpolation_order
    with timed("rp_from_pressure", timings):
        g = rp_from_pressure(data)
    with timed("invert", timings):
        match geometry.kind:
            case DetectorKind.CYLINDER:
                means = invert_cylinder(g, target_grid, order=order)
            case DetectorKind.PLANE:
                means = invert_plane(
                    g,
                    target_grid,
                    taper=options.taper,
                    order=order,
                    padding_factor=options.padding_factor,
                    method=options.plane_method,
                    regularization=options.plane_regularization,
                )
            case DetectorKind.SPHERE:
                means = invert_sphere(g, target_grid, order=order)
    with timed("deconvolve", timings):
        f, report = deconvolve_fixed_radius(means, options.reg_epsilon, support_radius)
    return Reconstruction(f, means, report, timings)


def fourier_relation_residual(f: ScalarField3, r_det: float, n_alpha: int = 128, band: float = 0.5) -> float:
    """Relative l2 mismatch between F(M_{r_det}f) and 2πJ0(r_det|ξ|)F(f) below `band` times the Nyquist frequency"""
    means = circular_mean_fixed_radius(f, r_det, n_alpha=n_alpha)
    grid = f.grid
    steps = (grid.spacing[1], grid.spacing[0])
    _, ny, nx = grid.shape
    xi2, xi1 = np.meshgrid(angular_frequencies(ny, steps[0]), angular_frequencies(nx, steps[1]), indexing="ij")
    xi_norm = np.hypot(xi1, xi2)
    low = xi_norm <= band * np.pi / max(steps)
    lhs = fourier2(means.values, steps)[:, low]
    rhs = (2 * np.pi * bessel_j0(r_det * xi_norm) * fourier2(f.values, steps))[:, low]
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))
