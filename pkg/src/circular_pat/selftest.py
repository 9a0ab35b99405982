"""Numerical self-checks of the identities the inversions rely on, run at small scale"""

from __future__ import annotations

from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np
import tabulate

from circular_pat.config import CYLINDER_Z_WINDOW
from circular_pat.core import Blob, Grid3, PhantomSpec, ScalarField3, UniformAxis, rel_l2_error, sample_phantom
from circular_pat.forward import (
    Centers,
    CylindricalSinogram,
    Quadrature,
    SphericalSinogram,
    circular_mean_fixed_radius,
    detector_integrals,
    rp_cylinder,
    rp_plane,
    toroidal_radon,
)
from circular_pat.logging import get_logger
from circular_pat.pat_inversion import (
    PlaneMethod,
    circle_pair_means_direct,
    circular_means_of_cmm_via_filtration,
    deconvolve_fixed_radius,
    fourier_relation_residual,
    invert_cylinder,
    invert_plane,
    invert_sphere,
)
from circular_pat.torus_inversion import CirclePairSum, torus_to_circle_pair, two_circle_sum, unfold_cylinder
from circular_pat.transforms import SampledSignal, bateman_identity_check, hilbert
from circular_pat.utils import timed

logger = get_logger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float
    wall_ms: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)


@dataclass(frozen=True)
class Check:
    name: str
    tolerance: float
    func: Callable[[], float]


CHECKS: dict[str, Check] = {}


def check(name: str, tolerance: float):
    """Register a function returning an error measure as a self-check"""

    def decorator(f: Callable[[], float]) -> Callable[[], float]:
        CHECKS[name] = Check(name, tolerance, f)
        return f

    return decorator


def _blob_field(grid: Grid3, sigma: float = 0.12, center=(0.05, -0.04, 0.0)):
    return sample_phantom(PhantomSpec((Blob(center, sigma),)), grid)


@check("hilbert", tolerance=1e-10)
def check_hilbert() -> float:
    """H cos = sin on a periodic sample set"""
    t = 2 * np.pi * np.arange(64) / 64
    signal = SampledSignal(np.cos(3 * t), t[1])
    return float(np.max(np.abs(hilbert(signal, padding_factor=1).values - np.sin(3 * t))))


@check("bessel_cosine", tolerance=1e-3)
def check_bessel_cosine() -> float:
    """∫ J0(a√(ρ²+b²)) cos(ρξ1) dρ against its closed form, inside and outside the cutoff ξ1 < a (absolute error)"""
    errors = []
    for a, b, xi1 in ((2.0, 1.0, 1.0), (1.0, 0.0, 2.0)):
        lhs, rhs = bateman_identity_check(a, b, xi1, rho_max=300.0)
        errors.append(abs(lhs - rhs))
    return max(errors)


@check("fourier_relation", tolerance=5e-2)
def check_fourier_relation() -> float:
    """F(M_r f) = 2π J0(r|ξ|) F(f) in the resolved band"""
    grid = Grid3.centered((32, 32, 8), (0.05, 0.05, 0.1))
    return fourier_relation_residual(_blob_field(grid), r_det=0.2, n_alpha=96)


@check("deconvolution", tolerance=5e-2)
def check_deconvolution() -> float:
    """Bessel deconvolution of M_r f recovers f"""
    grid = Grid3.centered((32, 32, 8), (0.05, 0.05, 0.1))
    f = _blob_field(grid)
    recovered, _ = deconvolve_fixed_radius(circular_mean_fixed_radius(f, 0.2, n_alpha=96), reg_epsilon=1e-8)
    return rel_l2_error(recovered, f)


@check("filtration", tolerance=0.1)
def check_filtration() -> float:
    """(1/(2πt)) H_t ∂_t R_P^# R_P f against the direct double circle integral"""
    grid = Grid3.centered((17, 17, 17), (0.06, 0.06, 0.06))
    f = _blob_field(grid, sigma=0.1, center=(0.0, 0.0, 0.0))
    R, r_det = 1.0, 0.2
    theta = UniformAxis.periodic(4)
    z_axis = UniformAxis.spanning(-2.4, 2.4, 0.04)
    t_axis = UniformAxis.spanning(0.0, 2.4, 0.02)
    g = rp_cylinder(f, R, r_det, theta, z_axis, t_axis, Quadrature(cap_polar=16, cap_azimuth=32))
    x3_axis = UniformAxis(0.0, 1.0, 1)
    filtered = circular_means_of_cmm_via_filtration(g, x3_axis)
    direct = circle_pair_means_direct(f, R, r_det, theta, x3_axis, t_axis, n_alpha=48, n_beta=96)
    window = (t_axis.values >= 0.2 * R) & (t_axis.values <= 1.5 * R)
    return rel_l2_error(filtered[..., window], direct[..., window])


@check("two_circle_sum", tolerance=0.1)
def check_two_circle_sum() -> float:
    """|ξ2|-filtered R_T^* R_T f against M f(|u - r|) + M f(u + r)"""
    grid = Grid3.centered((17, 17, 17), (0.06, 0.06, 0.06))
    f = _blob_field(grid, sigma=0.1, center=(0.0, 0.0, 0.0))
    centers = Centers.circle(2, 1.0)
    u = 0.5
    p_axis = UniformAxis.spanning(-2.0, 2.0, 0.04)
    r_axis = UniformAxis.spanning(0.02, 2.2, 0.02)
    g = toroidal_radon(f, centers, u, p_axis, r_axis, n_alpha=64, n_beta=96)
    S = torus_to_circle_pair(g)
    x3_axis = UniformAxis(0.0, 1.0, 1)
    k = int(round(-p_axis.start / p_axis.step))
    reference = two_circle_sum(f, centers, u, x3_axis, S.r_axis, n_alpha=96)
    window = (S.r_axis.values > 0.1) & (S.r_axis.values < 1.5)
    return rel_l2_error(S.values[:, k : k + 1, window], reference[..., window])


@check("telescoping", tolerance=1e-10)
def check_telescoping() -> float:
    """The alternating sums recover a radial profile from its exact two-circle sums"""
    step, u, R = 0.01, 0.25, 1.0
    r_axis = UniformAxis.spanning(0.0, 3.0, step)

    def profile(s):
        s = np.asarray(s, dtype=float)
        return np.where(s < 1.2, np.cos(0.5 * np.pi * s / 1.2) ** 2, 0.0)

    s = r_axis.values
    values = (profile(np.abs(u - s)) + profile(u + s))[None, None, :]
    pair = CirclePairSum(Centers.circle(1, R), u, UniformAxis(0.0, 1.0, 1), r_axis, values)
    out_axis = UniformAxis(step, step, 100)
    unfolded = unfold_cylinder(pair, u, R, out_axis)
    return float(np.max(np.abs(unfolded.values[0, 0] - profile(out_axis.values))))


# Round trips: simulated detector data -> M_{r_det}f, against direct circular means

ROUND_TRIP_QUADRATURE = Quadrature(n_alpha=48, cap_polar=12, cap_azimuth=24)


def centered_blob(grid: Grid3, sigma: float = 0.1, x3: float = 0.0) -> ScalarField3:
    """A blob on the x3-axis, even in x1 and symmetric about the axis"""
    return sample_phantom(PhantomSpec((Blob((0.0, 0.0, x3), sigma),), symmetrize_x1=True), grid)


def cylinder_data(
    f: ScalarField3,
    R: float,
    r_det: float,
    target_grid: Grid3,
    quadrature: Quadrature = ROUND_TRIP_QUADRATURE,
    n_theta: int = 64,
    z_step: float = 0.1,
    t_step: float = 0.025,
) -> CylindricalSinogram:
    """R_P f of a field symmetric about the x3-axis on the default cylinder window

    The data do not depend on the detector angle, so one angle is simulated and repeated n_theta times. The z samples
    span CYLINDER_Z_WINDOW * R on both sides of the target and t reaches every back-projected radius.
    """
    x1, x2, x3 = target_grid.mesh()
    half = CYLINDER_Z_WINDOW * R
    z_axis = UniformAxis.spanning(float(x3.min()) - half, float(x3.max()) + half, z_step)
    rho_max = R + float(np.hypot(x1, x2).max()) + float(np.hypot(*target_grid.spacing[:2]))
    t_axis = UniformAxis.spanning(0.0, float(np.hypot(half, rho_max)) + r_det, t_step)
    one = rp_cylinder(f, R, r_det, UniformAxis.periodic(1), z_axis, t_axis, quadrature)
    values = np.repeat(one.values, n_theta, axis=0)
    return CylindricalSinogram(R, r_det, UniformAxis.periodic(n_theta), z_axis, t_axis, values)


def cylinder_round_trip(
    f: ScalarField3,
    R: float,
    r_det: float,
    target_grid: Grid3,
    quadrature: Quadrature = ROUND_TRIP_QUADRATURE,
    **kwargs,
) -> float:
    """Relative l2 error of invert_cylinder(R_P f) against M_{r_det}f on the target grid"""
    g = cylinder_data(f, R, r_det, target_grid, quadrature, **kwargs)
    expected = circular_mean_fixed_radius(f, r_det, target_grid, quadrature.n_alpha)
    return rel_l2_error(invert_cylinder(g, target_grid), expected)


def plane_round_trip(
    f: ScalarField3,
    r_det: float,
    target_grid: Grid3,
    aperture: float,
    t_max: float,
    detector_step: float = 0.05,
    t_step: float = 0.025,
    quadrature: Quadrature = ROUND_TRIP_QUADRATURE,
    method: PlaneMethod = PlaneMethod.SUPPORT_FIT,
) -> float:
    """Relative l2 error of invert_plane(R_P f) against M_{r_det}f, detectors on [-aperture, aperture]²"""
    axis = UniformAxis.spanning(-aperture, aperture, detector_step)
    g = rp_plane(f, axis, axis, UniformAxis.spanning(0.0, t_max, t_step), r_det, quadrature)
    expected = circular_mean_fixed_radius(f, r_det, target_grid, quadrature.n_alpha)
    return rel_l2_error(invert_plane(g, target_grid, method=method), expected)


def sphere_round_trip(
    f: ScalarField3,
    R: float,
    r_det: float,
    target_grid: Grid3,
    n_azimuth: int = 128,
    n_polar: int = 64,
    t_step: float = 0.02,
    quadrature: Quadrature = ROUND_TRIP_QUADRATURE,
    mask_radius: float | None = None,
) -> float:
    """Relative l2 error of invert_sphere(R_P f) against M_{r_det}f for a field symmetric about the x3-axis

    The data do not depend on the detector azimuth, so one meridian is simulated and repeated.

    :param mask_radius: Compare only on the nodes with |x| <= mask_radius
    """
    polar = np.pi * np.arange(1, n_polar) / n_polar
    meridian = R * np.stack([np.sin(polar), np.zeros_like(polar), np.cos(polar)], axis=-1)
    t_axis = UniformAxis.spanning(0.0, 2 * (R + r_det), t_step)
    column = detector_integrals(f, r_det, meridian, t_axis, quadrature)
    g = SphericalSinogram(R, r_det, n_azimuth, n_polar, t_axis, np.repeat(column, n_azimuth, axis=0))
    expected = circular_mean_fixed_radius(f, r_det, target_grid, quadrature.n_alpha)
    mask = None
    if mask_radius is not None:
        mask = np.linalg.norm(np.stack(target_grid.mesh(), axis=-1), axis=-1) <= mask_radius
    return rel_l2_error(invert_sphere(g, target_grid), expected, mask)


ROUND_TRIP_GRID = Grid3.centered((32, 32, 32), 0.04)


@check("cylinder_round_trip", tolerance=0.1)
def check_cylinder_round_trip() -> float:
    """Cylinder inversion of simulated data recovers M_{r_det}f"""
    return cylinder_round_trip(centered_blob(ROUND_TRIP_GRID), 1.0, 0.15, ROUND_TRIP_GRID)


@check("plane_round_trip", tolerance=0.15)
def check_plane_round_trip() -> float:
    """Planar inversion of simulated data recovers M_{r_det}f of an even source"""
    return plane_round_trip(centered_blob(ROUND_TRIP_GRID), 0.15, ROUND_TRIP_GRID, aperture=1.4, t_max=0.8, t_step=0.02)


@check("sphere_round_trip", tolerance=0.1)
def check_sphere_round_trip() -> float:
    """Spherical inversion of simulated data recovers M_{r_det}f inside the ball"""
    grid = Grid3.centered((32, 32, 32), 0.035)
    return sphere_round_trip(centered_blob(grid), 1.0, 0.15, grid, mask_radius=0.7)


def run_selftest(names: Iterable[str] | None = None) -> list[CheckResult]:
    """Run the registered checks (all by default)"""
    selected = list(names) if names is not None else list(CHECKS)
    unknown = set(selected) - set(CHECKS)
    if unknown:
        raise ValueError(f"Unknown check(s): {', '.join(sorted(unknown))}")
    results = []
    for name in selected:
        c = CHECKS[name]
        with timed(name) as elapsed:
            try:
                error = float(c.func())
            except Exception as e:
                logger.error(f"{type(e).__name__}: {e}", stage=name)
                error = float("nan")
        results.append(CheckResult(name, error, c.tolerance, elapsed["wall_ms"]))
        level = logger.info if results[-1].passed else logger.warning
        level(f"error {error:.3g} (tolerance {c.tolerance:.1g})", stage=name)
    return results


def format_report(results: Iterable[CheckResult]) -> str:
    rows = [
        {
            "check": r.name,
            "error": f"{r.error:.3e}",
            "tolerance": f"{r.tolerance:.1e}",
            "wall_ms": f"{r.wall_ms:.0f}",
            "result": "PASS" if r.passed else "FAIL",
        }
        for r in results
    ]
    return tabulate.tabulate(rows, headers="keys", tablefmt="presto")
