"""Special functions, quadrature rules and harmonic-analysis kernels

Fourier convention (used everywhere in this package):

    forward:  F h(ξ) = ∫ h(x) e^{-i x·ξ} dx
    inverse:  h(x)   = (2π)^{-d} ∫ F h(ξ) e^{+i x·ξ} dξ

Discrete transforms are FFTs scaled by the product of the sample steps, with the phase of the first sample's
coordinate applied, on the angular-frequency lattice 2π·fftfreq(n, step).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import fft, special
from scipy.integrate import cumulative_trapezoid, trapezoid

from circular_pat.logging import get_logger

logger = get_logger(__name__)

FOURIER_CONVENTION = "forward e^{-i x·ξ}, inverse (2π)^{-d} e^{+i x·ξ}"


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled 1D profile"""

    values: NDArray[np.float64]
    step: float
    start: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("SampledSignal values must be one-dimensional")
        if not self.step > 0:
            raise ValueError(f"step must be positive: {self.step}")
        if not np.all(np.isfinite(values)):
            raise ValueError("SampledSignal values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def axis(self) -> NDArray[np.float64]:
        return self.start + self.step * np.arange(self.values.size)

    def __len__(self) -> int:
        return self.values.size


def bessel_j0(x: ArrayLike) -> NDArray[np.float64] | float:
    """Bessel function of the first kind of order zero"""
    out = special.j0(x)
    return float(out) if np.ndim(out) == 0 else out


def j0_zeros(count: int) -> NDArray[np.float64]:
    """The first `count` positive zeros of J0"""
    return special.jn_zeros(0, count)


# Hilbert transform


def hilbert_along(values: ArrayLike, axis: int = -1, padding_factor: int = 2) -> NDArray[np.float64]:
    """Discrete Hilbert transform along one axis with the multiplier -i·sgn(ξ), sgn(0) = 0

    :param values: Real samples
    :param axis: Axis to transform along
    :param padding_factor: Zero-pad to at least this multiple of the length. 1 treats the samples as periodic
    """
    h = np.asarray(values, dtype=np.float64)
    n = h.shape[axis]
    n_fft = n if padding_factor <= 1 else fft.next_fast_len(padding_factor * n)
    spectrum = fft.fft(h, n=n_fft, axis=axis)
    multiplier = -1j * np.sign(fft.fftfreq(n_fft))
    shape = [1] * h.ndim
    shape[axis] = n_fft
    out = fft.ifft(spectrum * multiplier.reshape(shape), axis=axis).real
    return np.take(out, np.arange(n), axis=axis)


def hilbert(signal: SampledSignal, padding_factor: int = 2) -> SampledSignal:
    """Hilbert transform of a sampled signal

    :param signal: Signal with at least 4 samples
    :param padding_factor: See hilbert_along()
    """
    if len(signal) < 4:
        raise ValueError("hilbert requires at least 4 samples")
    return SampledSignal(hilbert_along(signal.values, padding_factor=padding_factor), signal.step, signal.start)


# Hankel transform and the Bessel-cosine identity


def hankel0(signal: SampledSignal, eta: float) -> float:
    """Order-zero Hankel transform ∫₀^{r_max} h(t) t J0(tη) dt by the trapezoid rule

    :param signal: Profile sampled on [0, r_max]
    :param eta: Nonnegative frequency
    """
    if signal.start != 0:
        raise ValueError("hankel0 requires a signal starting at t = 0")
    t = signal.axis
    return float(trapezoid(signal.values * t * special.j0(t * eta), dx=signal.step))


def _tail_average(cumulative: NDArray, step: float, window: float, passes: int = 2) -> float:
    """Average a slowly converging oscillatory partial integral over its last oscillation periods"""
    width = max(int(round(window / step)), 1)
    averaged = cumulative
    for _ in range(passes):
        kernel = np.full(width, 1.0 / width)
        averaged = np.convolve(averaged, kernel, mode="valid")
    return float(averaged[-1])


def bateman_identity_check(
    a: float, b: float, xi1: float, rho_max: float, step: float | None = None
) -> tuple[float, float]:
    """Compare ∫₀^∞ J0(a√(ρ²+b²)) cos(ρξ1) dρ with its closed form

    The left-hand side is integrated up to rho_max and the remaining oscillation is removed by averaging the partial
    integrals over the last beat periods 2π/|a - ξ1|.

    :return: (lhs, rhs)
    """
    if not (a > 0 and b >= 0 and xi1 > 0 and xi1 != a):
        raise ValueError("bateman_identity_check requires a > 0, b >= 0, xi1 > 0 and xi1 != a")
    period = 2 * np.pi / abs(a - xi1)
    if step is None:
        step = min(0.01, 2 * np.pi / (a + xi1) / 64)
    if rho_max < 3 * period:
        raise ValueError(f"rho_max must span at least three beat periods ({3 * period:.3g})")
    rho = np.arange(0.0, rho_max + 0.5 * step, step)
    integrand = special.j0(a * np.sqrt(rho**2 + b**2)) * np.cos(rho * xi1)
    partial = cumulative_trapezoid(integrand, dx=step, initial=0.0)
    lhs = _tail_average(partial, step, period)

    if xi1 < a:
        root = np.sqrt(a**2 - xi1**2)
        rhs = float(np.cos(b * root) / root)
    else:
        rhs = 0.0
    return lhs, rhs


# Fourier transforms under FOURIER_CONVENTION


def angular_frequencies(n: int, step: float) -> NDArray[np.float64]:
    """Angular frequency lattice of an n-point FFT with sample step `step`"""
    return 2 * np.pi * fft.fftfreq(n, d=step)


def _normalize_axes(ndim: int, axes: Sequence[int]) -> list[int]:
    return [ax % ndim for ax in axes]


def fourier_nd(
    values: ArrayLike, steps: Sequence[float], origins: Sequence[float] | None = None, axes: Sequence[int] | None = None
) -> NDArray[np.complex128]:
    """Continuous Fourier transform approximated on the FFT lattice

    :param values: Samples; values[k] sits at origins + k*steps along each transformed axis
    :param steps: Sample steps, one per transformed axis
    :param origins: Coordinates of the first sample, one per transformed axis (0 by default)
    :param axes: Axes to transform (the last len(steps) axes by default)
    """
    h = np.asarray(values)
    axes = _normalize_axes(h.ndim, axes if axes is not None else range(-len(steps), 0))
    origins = origins if origins is not None else [0.0] * len(axes)
    spectrum = fft.fftn(h, axes=axes) * float(np.prod(steps))
    return spectrum * _phase(h.shape, axes, steps, origins, sign=-1)


def inverse_fourier_nd(
    spectrum: ArrayLike,
    steps: Sequence[float],
    origins: Sequence[float] | None = None,
    axes: Sequence[int] | None = None,
) -> NDArray[np.complex128]:
    """Inverse of fourier_nd() for the same sample layout"""
    s = np.asarray(spectrum)
    axes = _normalize_axes(s.ndim, axes if axes is not None else range(-len(steps), 0))
    origins = origins if origins is not None else [0.0] * len(axes)
    s = s * _phase(s.shape, axes, steps, origins, sign=+1)
    return fft.ifftn(s, axes=axes) / float(np.prod(steps))


def _phase(shape, axes, steps, origins, sign: int) -> NDArray[np.complex128]:
    phase = np.ones([1] * len(shape), dtype=np.complex128)
    for ax, step, origin in zip(axes, steps, origins):
        if origin == 0:
            continue
        xi = angular_frequencies(shape[ax], step)
        bshape = [1] * len(shape)
        bshape[ax] = shape[ax]
        phase = phase * np.exp(sign * 1j * origin * xi).reshape(bshape)
    return phase


def fourier2(plane: ArrayLike, steps: Sequence[float], origins: Sequence[float] | None = None) -> NDArray:
    """2D Fourier transform over the last two axes"""
    return fourier_nd(plane, steps, origins, axes=(-2, -1))


def inverse_fourier2(spectrum: ArrayLike, steps: Sequence[float], origins: Sequence[float] | None = None) -> NDArray:
    return inverse_fourier_nd(spectrum, steps, origins, axes=(-2, -1))


def fourier3(volume: ArrayLike, steps: Sequence[float], origins: Sequence[float] | None = None) -> NDArray:
    """3D Fourier transform over the last three axes"""
    return fourier_nd(volume, steps, origins, axes=(-3, -2, -1))


def inverse_fourier3(spectrum: ArrayLike, steps: Sequence[float], origins: Sequence[float] | None = None) -> NDArray:
    return inverse_fourier_nd(spectrum, steps, origins, axes=(-3, -2, -1))


# Finite differences


def second_difference(values: ArrayLike, step: float, axis: int = -1, edge_order: int = 1) -> NDArray[np.float64]:
    """Second derivative by central differences; one-sided differences at both ends

    :param edge_order: 1 uses the 3-point stencil of the neighbouring node (exact on quadratics),
                       2 uses the 4-point one-sided stencil (exact on cubics)
    """
    f = np.moveaxis(np.asarray(values, dtype=np.float64), axis, -1)
    n = f.shape[-1]
    if n < 3 or (edge_order == 2 and n < 4):
        raise ValueError("Too few samples for a second difference")
    out = np.empty_like(f)
    out[..., 1:-1] = f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]
    if edge_order == 2:
        out[..., 0] = 2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]
        out[..., -1] = 2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]
    else:
        out[..., 0] = f[..., 0] - 2 * f[..., 1] + f[..., 2]
        out[..., -1] = f[..., -1] - 2 * f[..., -2] + f[..., -3]
    return np.moveaxis(out / step**2, -1, axis)


def first_difference(values: ArrayLike, step: float, axis: int = -1) -> NDArray[np.float64]:
    """First derivative by central differences, second-order one-sided at the ends"""
    return np.gradient(np.asarray(values, dtype=np.float64), step, axis=axis, edge_order=2)


def laplacian2(slices: ArrayLike, spacing: Sequence[float]) -> NDArray[np.float64]:
    """5-point Laplacian over the last two axes (x2, x1)

    :param slices: Array (..., n2, n1) with n1, n2 >= 3
    :param spacing: (Δx1, Δx2)
    """
    f = np.asarray(slices, dtype=np.float64)
    if f.shape[-1] < 3 or f.shape[-2] < 3:
        raise ValueError("laplacian2 requires at least a 3x3 grid")
    dx1, dx2 = spacing
    return second_difference(f, dx1, axis=-1) + second_difference(f, dx2, axis=-2)


def second_derivative_t(signal: SampledSignal) -> SampledSignal:
    """∂²_t (t² h(t)) by central differences"""
    if len(signal) < 5:
        raise ValueError("second_derivative_t requires at least 5 samples")
    t = signal.axis
    return SampledSignal(second_difference(t**2 * signal.values, signal.step, edge_order=2), signal.step, signal.start)


# Quadrature on the unit sphere


@dataclass(frozen=True)
class SphereRule:
    """Directions β (n, 3) on S² with quadrature weights for the unnormalized surface measure"""

    directions: NDArray[np.float64]
    weights: NDArray[np.float64]
    polar: NDArray[np.float64]
    azimuth: NDArray[np.float64]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


@lru_cache(maxsize=32)
def lat_long_rule(n_azimuth: int, n_polar: int) -> SphereRule:
    """Product rule: periodic trapezoid in β1, trapezoid with weight sin β2 on [0, π]

    β = (cos β1 sin β2, sin β1 sin β2, cos β2). The pole nodes carry zero weight and are dropped, so the polar
    nodes are jπ/n_polar for j = 1..n_polar-1. Weights are normalized to the exact total 4π. The directions are
    laid out polar-major: index = j_polar * n_azimuth + k_azimuth.
    """
    if n_azimuth < 3 or n_polar < 2:
        raise ValueError("lat_long_rule requires n_azimuth >= 3 and n_polar >= 2")
    beta1 = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    beta2 = np.pi * np.arange(1, n_polar) / n_polar
    b2, b1 = np.meshgrid(beta2, beta1, indexing="ij")
    directions = np.stack([np.cos(b1) * np.sin(b2), np.sin(b1) * np.sin(b2), np.cos(b2)], axis=-1).reshape(-1, 3)
    w_polar = np.sin(beta2)
    w_polar *= 2.0 / w_polar.sum()
    weights = np.repeat(w_polar, n_azimuth) * (2 * np.pi / n_azimuth)
    for arr in (directions, weights):
        arr.setflags(write=False)
    return SphereRule(directions, weights, beta2, beta1)


def orthonormal_frames(axes: ArrayLike) -> tuple[NDArray, NDArray, NDArray]:
    """Right-handed frames (u, v, a) completing each unit axis a of shape (..., 3)"""
    a = np.asarray(axes, dtype=float)
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    helper = np.where(np.abs(a[..., 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    u = np.cross(helper, a)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.cross(a, u)
    return u, v, a


def cap_rule(
    axes: ArrayLike, cos_gamma_max: ArrayLike, n_polar: int, n_azimuth: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Product rule on spherical caps {β : β·a >= cos γmax}

    Same construction as lat_long_rule() in a frame rotated so the pole is the cap axis a: trapezoid in the polar
    angle γ ∈ [0, γmax] with weight sin γ, periodic trapezoid in the azimuth. Weights are normalized to the exact cap
    measure 2π(1 - cos γmax).

    :param axes: Cap axes (m, 3)
    :param cos_gamma_max: Cosine of the cap half-angle (m,)
    :return: directions (m, n_polar*n_azimuth, 3) and weights (m, n_polar*n_azimuth)
    """
    u, v, a = orthonormal_frames(axes)
    cos_g = np.clip(np.asarray(cos_gamma_max, dtype=float), -1.0, 1.0)
    gamma_max = np.arccos(cos_g)
    frac = np.arange(n_polar + 1) / n_polar
    gamma = gamma_max[:, None] * frac[None, 1:]
    trap = np.ones(n_polar)
    trap[-1] = 0.5
    w_gamma = np.sin(gamma) * trap
    total = w_gamma.sum(axis=1, keepdims=True)
    exact = 2 * np.pi * (1 - cos_g)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        w_gamma = np.where(total > 0, w_gamma * exact / total, 0.0)
    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    w_gamma = w_gamma / n_azimuth

    sin_g, cos_gm = np.sin(gamma)[:, :, None, None], np.cos(gamma)[:, :, None, None]
    cos_p, sin_p = np.cos(phi)[None, None, :, None], np.sin(phi)[None, None, :, None]
    directions = cos_gm * a[:, None, None, :] + sin_g * (
        cos_p * u[:, None, None, :] + sin_p * v[:, None, None, :]
    )
    m = directions.shape[0]
    weights = np.broadcast_to(w_gamma[:, :, None], (m, n_polar, n_azimuth))
    return directions.reshape(m, -1, 3), weights.reshape(m, -1)
