import numpy as np
import pytest

from circular_pat import pat_inversion
from circular_pat.core import (
    Blob,
    DetectorGeometry,
    DetectorKind,
    Grid3,
    PhantomSpec,
    ScalarField3,
    UniformAxis,
    rel_l2_error,
    sample_phantom,
)
from circular_pat.exceptions import GeometryError, GridError
from circular_pat.forward import (
    CircularMeanMap,
    CylindricalSinogram,
    PlanarSinogram,
    Quadrature,
    SphericalSinogram,
    circular_mean_fixed_radius,
    pressure_from_rp,
)
from circular_pat.pat_inversion import (
    ConditionReport,
    InversionOptions,
    circular_means_of_cmm_via_filtration,
    condition_report,
    deconvolve_fixed_radius,
    fourier_relation_residual,
    invert_cylinder,
    invert_plane,
    invert_sphere,
    mp_star,
    PlaneMethod,
    planar_profile_matrices,
    reconstruct,
    rp_backprojection,
)
from circular_pat.selftest import centered_blob, cylinder_data, cylinder_round_trip, plane_round_trip, sphere_round_trip
from circular_pat.transforms import j0_zeros


@pytest.fixture
def deconvolution_field() -> ScalarField3:
    grid = Grid3.centered((32, 32, 4), (0.05, 0.05, 0.1))
    return sample_phantom(PhantomSpec((Blob((0.05, -0.05, 0.0), 0.1),)), grid)


class TestDeconvolution:
    def test_recovers_the_source(self, deconvolution_field):
        means = circular_mean_fixed_radius(deconvolution_field, 0.2, n_alpha=96)
        f, report = deconvolve_fixed_radius(means, reg_epsilon=1e-8, support_radius=0.6)
        assert rel_l2_error(f, deconvolution_field) < 0.05
        assert f.support_radius == 0.6
        assert isinstance(report, ConditionReport)

    def test_fourier_relation(self, deconvolution_field):
        assert fourier_relation_residual(deconvolution_field, 0.2, n_alpha=96) < 0.05

    def test_regularization_damps_the_result(self, deconvolution_field):
        means = circular_mean_fixed_radius(deconvolution_field, 0.2, n_alpha=64)
        sharp, _ = deconvolve_fixed_radius(means, reg_epsilon=1e-8)
        damped, _ = deconvolve_fixed_radius(means, reg_epsilon=1.0)
        assert np.linalg.norm(damped.values) < np.linalg.norm(sharp.values)

    def test_rejects_negative_epsilon(self, deconvolution_field):
        means = CircularMeanMap(deconvolution_field.grid, deconvolution_field.values, 0.2)
        with pytest.raises(ValueError):
            deconvolve_fixed_radius(means, reg_epsilon=-1.0)

    def test_condition_report_finds_zeros_of_j0(self):
        r_det = 0.5
        first_zero = j0_zeros(1)[0]
        xi = np.array([0.0, 1.0, first_zero / r_det, 30.0])
        report = condition_report(xi, r_det, 1e-6)
        assert report.is_ill_conditioned
        assert report.near_zero_shells[0].zero_index == 1
        assert report.near_zero_shells[0].xi == pytest.approx(first_zero / r_det)
        assert report.min_abs_j0 == pytest.approx(0.0, abs=1e-12)
        assert "k=1" in report.summary()

    def test_condition_report_without_zeros(self):
        report = condition_report(np.array([0.0, 0.1]), 0.5, 1e-6)
        assert not report.is_ill_conditioned
        assert "no lattice frequency" in report.summary()


class TestCylinder:
    def test_backprojection_of_constant_data(self):
        theta = UniformAxis.periodic(2)
        z_axis = UniformAxis.spanning(-1.0, 1.0, 0.1)
        t_axis = UniformAxis.spanning(0.0, 3.0, 0.05)
        g = CylindricalSinogram(1.0, 0.1, theta, z_axis, t_axis, np.ones((2, z_axis.count, t_axis.count)))
        x3_axis = UniformAxis(0.0, 0.2, 2)
        rho_axis = UniformAxis(0.0, 0.5, 3)
        out = rp_backprojection(g, x3_axis, rho_axis)
        z = z_axis.values
        w = np.full(z.size, 0.1)
        w[[0, -1]] = 0.05
        for k, x3 in enumerate(x3_axis.values):
            for j, rho in enumerate(rho_axis.values):
                assert out[1, k, j] == pytest.approx(np.sum(w * np.sqrt((z - x3) ** 2 + rho**2)))

    def test_filtration_scales_with_its_normalization(self, mocker, synthetic_sinogram):
        reference = circular_means_of_cmm_via_filtration(synthetic_sinogram)
        mocker.patch.object(pat_inversion, "FILTRATION_NORMALIZATION", 2 * pat_inversion.FILTRATION_NORMALIZATION)
        np.testing.assert_allclose(circular_means_of_cmm_via_filtration(synthetic_sinogram), 2 * reference)

    def test_filtration_requires_t_from_zero(self, synthetic_sinogram):
        shifted = CylindricalSinogram(
            synthetic_sinogram.R,
            synthetic_sinogram.r_det,
            synthetic_sinogram.theta,
            synthetic_sinogram.z_axis,
            UniformAxis(0.1, 0.1, synthetic_sinogram.t_axis.count),
            synthetic_sinogram.values,
        )
        with pytest.raises(GridError):
            circular_means_of_cmm_via_filtration(shifted)

    def test_target_grid_outside_cylinder(self, synthetic_sinogram):
        with pytest.raises(GeometryError):
            invert_cylinder(synthetic_sinogram, Grid3.centered((9, 9, 3), 0.2))

    def test_linear_in_the_data(self, synthetic_sinogram):
        grid = Grid3.centered((5, 5, 3), 0.1)
        once = invert_cylinder(synthetic_sinogram, grid)
        twice = invert_cylinder(synthetic_sinogram.with_values(2 * synthetic_sinogram.values), grid)
        np.testing.assert_allclose(twice.values, 2 * once.values)
        assert once.r_det == synthetic_sinogram.r_det


class TestPlane:
    @pytest.fixture
    def planar_sinogram(self) -> PlanarSinogram:
        y_axis = UniformAxis.spanning(-1.5, 1.5, 0.1)
        z_axis = UniformAxis.spanning(-1.3, 1.3, 0.1)
        t_axis = UniformAxis.spanning(0.0, 1.5, 0.05)
        pulse = np.exp(-((t_axis.values - 0.4) ** 2) / 0.01)
        values = pulse * (1 + 0.3 * np.cos(4 * y_axis.values))[:, None, None] * np.ones((1, z_axis.count, 1))
        return PlanarSinogram(0.1, y_axis, z_axis, t_axis, values)

    def test_mp_star_mirrors_in_x1(self, planar_sinogram):
        symmetric = Grid3.centered((5, 3, 3), 0.1)
        out = mp_star(planar_sinogram, symmetric)
        np.testing.assert_allclose(out, out[..., ::-1])
        # the same nodes computed without the mirror
        shifted = Grid3((3, 3, 3), (0.1, 0.1, 0.1), (0.0, -0.1, -0.1))
        np.testing.assert_allclose(mp_star(planar_sinogram, shifted), out[..., 2:], rtol=1e-12)

    def test_requires_symmetric_grid(self, planar_sinogram):
        with pytest.raises(GridError):
            invert_plane(planar_sinogram, Grid3.centered((4, 3, 3), 0.1, center=(0.05, 0, 0)))

    def test_taper_reduces_high_frequencies(self, planar_sinogram):
        grid = Grid3.centered((9, 9, 5), 0.1)
        plain = invert_plane(planar_sinogram, grid)
        tapered = invert_plane(planar_sinogram, grid, taper=True)
        assert np.linalg.norm(tapered.values) < np.linalg.norm(plain.values)

    def test_support_fit_needs_room_around_the_target(self):
        axis = UniformAxis.spanning(-0.5, 0.5, 0.1)
        t_axis = UniformAxis.spanning(0.0, 1.5, 0.05)
        g = PlanarSinogram(0.1, axis, axis, t_axis, np.ones((axis.count, axis.count, t_axis.count)))
        with pytest.raises(GeometryError):
            invert_plane(g, Grid3.centered((9, 9, 5), 0.1))

    def test_profile_matrices_at_zero_frequency(self):
        A = planar_profile_matrices(np.array([0.0]), np.array([0.05, 0.15, 0.35]), np.array([0.1, 0.2, 0.3]))
        np.testing.assert_allclose(A[0], [[0.05, 0.0], [0.1375, 0.0125], [0.15, 0.1]], rtol=1e-12, atol=1e-15)

    def test_multiplier_method(self, planar_sinogram, subtests):
        grid = Grid3.centered((9, 9, 5), 0.1)
        out = invert_plane(planar_sinogram, grid, method=PlaneMethod.MULTIPLIER)
        with subtests.test("even in x1"):
            np.testing.assert_allclose(out.values, out.values[..., ::-1], atol=1e-10 * np.abs(out.values).max())
        with subtests.test("linear"):
            doubled = planar_sinogram.with_values(2 * planar_sinogram.values)
            twice = invert_plane(doubled, grid, method=PlaneMethod.MULTIPLIER)
            np.testing.assert_allclose(twice.values, 2 * out.values, atol=1e-12 * np.abs(out.values).max())
        with subtests.test("zero data"):
            zero = planar_sinogram.with_values(np.zeros_like(planar_sinogram.values))
            np.testing.assert_array_equal(invert_plane(zero, grid, method="multiplier").values, 0.0)

    def test_rejects_negative_regularization(self, planar_sinogram):
        with pytest.raises(ValueError):
            invert_plane(planar_sinogram, Grid3.centered((9, 9, 5), 0.1), regularization=-1e-3)


class TestSphere:
    def test_target_grid_outside_ball(self):
        t_axis = UniformAxis(0.0, 0.1, 8)
        g = SphericalSinogram(1.0, 0.1, 6, 4, t_axis, np.zeros((18, 8)))
        with pytest.raises(GeometryError):
            invert_sphere(g, Grid3.centered((5, 5, 5), 0.5))


class TestReconstruct:
    def test_geometry_mismatch(self, synthetic_sinogram):
        data = pressure_from_rp(synthetic_sinogram)
        other = DetectorGeometry(DetectorKind.CYLINDER, 0.3, 1.0)
        with pytest.raises(GeometryError):
            reconstruct(other, data, Grid3.centered((5, 5, 3), 0.1))

    def test_stages_and_timings(self, mocker, synthetic_sinogram):
        grid = Grid3.centered((8, 8, 3), 0.1)
        means = CircularMeanMap(grid, np.zeros(grid.shape), synthetic_sinogram.r_det)
        invert = mocker.patch.object(pat_inversion, "invert_cylinder", return_value=means)
        result = reconstruct(synthetic_sinogram.geometry, pressure_from_rp(synthetic_sinogram), grid)
        invert.assert_called_once()
        assert isinstance(invert.call_args.args[0], CylindricalSinogram)
        assert set(result.timings) == {"rp_from_pressure", "invert", "deconvolve"}
        assert result.circular_means is means
        np.testing.assert_array_equal(result.field.values, 0.0)

    def test_options_validation(self):
        with pytest.raises(ValueError):
            InversionOptions(reg_epsilon=-1)
        with pytest.raises(ValueError):
            InversionOptions(interpolation_order=2)
        with pytest.raises(ValueError):
            InversionOptions(padding_factor=0)
        with pytest.raises(ValueError):
            InversionOptions(plane_method="fourier")
        with pytest.raises(ValueError):
            InversionOptions(plane_regularization=-1e-6)
        assert InversionOptions(plane_method="multiplier").plane_method is PlaneMethod.MULTIPLIER




QUICK = Quadrature(n_alpha=32, cap_polar=12, cap_azimuth=24)


class TestRoundTrip:
    """Inversion of simulated data against M_{r_det}f of the source"""

    def test_cylinder_small(self):
        f = centered_blob(Grid3.centered((21, 21, 21), 0.05))
        grid = Grid3.centered((9, 9, 5), 0.05)
        assert cylinder_round_trip(f, 1.0, 0.15, grid, QUICK, n_theta=48) < 0.1

    @pytest.mark.slow
    @pytest.mark.parametrize(("R", "t_step"), [(1.0, 0.025), (2.0, 0.04)], ids=["R=1", "R=2"])
    def test_cylinder(self, R, t_step):
        f = centered_blob(Grid3.centered((25, 25, 25), 0.05))
        grid = Grid3.centered((17, 17, 9), 0.05)
        assert cylinder_round_trip(f, R, 0.15, grid, t_step=t_step) < 0.1

    @pytest.mark.slow
    def test_plane(self):
        f = centered_blob(Grid3.centered((25, 25, 25), 0.05))
        grid = Grid3.centered((21, 17, 13), 0.05)
        assert plane_round_trip(f, 0.15, grid, aperture=1.4, t_max=1.0) < 0.15

    @pytest.mark.slow
    def test_sphere(self):
        f = centered_blob(Grid3.centered((25, 25, 25), 0.05))
        grid = Grid3.centered((17, 17, 9), 0.05)
        assert sphere_round_trip(f, 1.0, 0.15, grid) < 0.1


@pytest.mark.slow
def test_reconstruct_separates_two_sources():
    grid = Grid3.centered((21, 21, 29), 0.05)
    spec = PhantomSpec((Blob((0.0, 0.0, -0.3), 0.1), Blob((0.0, 0.0, 0.3), 0.1)), symmetrize_x1=True)
    f = sample_phantom(spec, grid)
    g = cylinder_data(f, 1.0, 0.1, grid)
    result = reconstruct(g.geometry, pressure_from_rp(g), grid, InversionOptions(reg_epsilon=1e-3))
    assert rel_l2_error(result.field, f) <= 0.15

    x1, x2, x3 = grid.mesh()
    dx1, dx2, dx3 = grid.spacing
    for sign in (-1, 1):
        idx = np.argmax(np.where(sign * x3 > 0, result.field.values, -np.inf))
        assert abs(x3.flat[idx] - sign * 0.3) <= dx3 + 1e-9
        assert np.hypot(x1.flat[idx], x2.flat[idx]) <= np.hypot(dx1, dx2) + 1e-9
