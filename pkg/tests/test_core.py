import numpy as np
import pytest

from circular_pat.core import (
    SUPPORT_SIGMAS,
    Blob,
    DetectorGeometry,
    DetectorKind,
    Grid3,
    Parity,
    PhantomSpec,
    ScalarField3,
    UniformAxis,
    interpolate3,
    interpolate3_many,
    rel_l2_error,
    sample_last_axis,
    sample_phantom,
    support_radius_of,
    transverse_support_radius_of,
)
from circular_pat.exceptions import GridError, ParityError


class TestUniformAxis:
    def test_spanning_includes_stop(self):
        axis = UniformAxis.spanning(0.0, 1.0, 0.25)
        assert axis.count == 5
        np.testing.assert_allclose(axis.values, [0, 0.25, 0.5, 0.75, 1.0])
        assert axis.stop == pytest.approx(1.0)

    def test_periodic_excludes_period(self):
        axis = UniformAxis.periodic(4)
        np.testing.assert_allclose(axis.values, [0, np.pi / 2, np.pi, 3 * np.pi / 2])

    @pytest.mark.parametrize(("start", "step", "count"), [(0.0, 0.0, 3), (0.0, -1.0, 3), (0.0, 1.0, 0)])
    def test_invalid(self, start, step, count):
        with pytest.raises(GridError):
            UniformAxis(start, step, count)


class TestGrid3:
    def test_centered_layout(self):
        grid = Grid3.centered((5, 4, 3), (0.1, 0.2, 0.3))
        assert grid.shape == (3, 4, 5)
        np.testing.assert_allclose(grid.axis(0), [-0.2, -0.1, 0.0, 0.1, 0.2])
        np.testing.assert_allclose(grid.axis(1), [-0.3, -0.1, 0.1, 0.3])
        x1, x2, x3 = grid.mesh()
        assert x1.shape == grid.shape
        assert x1[0, 0, 1] - x1[0, 0, 0] == pytest.approx(0.1)
        assert x3[1, 0, 0] - x3[0, 0, 0] == pytest.approx(0.3)

    def test_symmetry_in_x1(self):
        assert Grid3.centered((6, 3, 3), 0.1).is_symmetric_x1()
        assert not Grid3.centered((6, 3, 3), 0.1, center=(0.05, 0, 0)).is_symmetric_x1()

    @pytest.mark.parametrize(("counts", "spacing"), [((1, 4, 4), 0.1), ((4, 4, 4), 0.0), ((4, 4, 4), np.inf)])
    def test_invalid(self, counts, spacing):
        with pytest.raises(GridError):
            Grid3.centered(counts, spacing)


class TestScalarField3:
    def test_rejects_wrong_shape_and_non_finite_values(self, small_grid):
        with pytest.raises(GridError):
            ScalarField3(small_grid, np.zeros((2, 2, 2)))
        values = np.zeros(small_grid.shape)
        values[0, 0, 0] = np.nan
        with pytest.raises(GridError):
            ScalarField3(small_grid, values)

    def test_accepts_flat_values(self, small_grid):
        field = ScalarField3(small_grid, np.arange(small_grid.size, dtype=float))
        assert field.values.shape == small_grid.shape
        assert field.values[0, 0, 1] == 1.0

    def test_values_are_read_only(self, blob_field):
        with pytest.raises(ValueError):
            blob_field.values[0, 0, 0] = 1.0

    def test_parity_flag_is_checked(self, small_grid):
        x1, x2, _ = small_grid.mesh()
        ScalarField3(small_grid, x1**2 + x2, parity_x1=Parity.EVEN)
        ScalarField3(small_grid, x1 * x2, parity_x1=Parity.ODD)
        with pytest.raises(ParityError):
            ScalarField3(small_grid, x1, parity_x1=Parity.EVEN)

    def test_support_radius(self, small_grid):
        assert support_radius_of(ScalarField3.zeros(small_grid)) == 0.0
        assert support_radius_of(ScalarField3(small_grid, np.ones(small_grid.shape), support_radius=0.3)) == 0.3
        values = np.zeros(small_grid.shape)
        values[3, 8, 8] = 1.0
        x1, x2, x3 = small_grid.mesh()
        radius = np.sqrt(x1[3, 8, 8] ** 2 + x2[3, 8, 8] ** 2 + x3[3, 8, 8] ** 2)
        estimate = support_radius_of(ScalarField3(small_grid, values))
        assert estimate == pytest.approx(radius + np.linalg.norm(small_grid.spacing))

    def test_transverse_support_radius(self, small_grid):
        values = np.zeros(small_grid.shape)
        values[5, 8, 8] = 1.0
        x1, x2, _ = small_grid.mesh()
        estimate = transverse_support_radius_of(ScalarField3(small_grid, values))
        assert estimate == pytest.approx(np.hypot(x1[5, 8, 8], x2[5, 8, 8]) + np.hypot(0.05, 0.05))
        assert transverse_support_radius_of(ScalarField3(small_grid, values, support_radius=0.01)) == 0.01
        declared = ScalarField3(small_grid, values, support_radius=2.0, transverse_support_radius=0.2)
        assert transverse_support_radius_of(declared) == 0.2
        assert transverse_support_radius_of(ScalarField3.zeros(small_grid)) == 0.0
        with pytest.raises(GridError):
            ScalarField3(small_grid, values, transverse_support_radius=-1.0)


class TestPhantom:
    def test_sampling_is_linear(self, small_grid):
        a, b = Blob((0.05, 0.0, 0.0), 0.08), Blob((-0.1, 0.05, 0.1), 0.12, amplitude=-0.5)
        one, other = (sample_phantom(PhantomSpec((blob,)), small_grid).values for blob in (a, b))
        both = sample_phantom(PhantomSpec((a, b)), small_grid).values
        np.testing.assert_allclose(both, one + other, rtol=1e-12, atol=1e-15)
        doubled = sample_phantom(PhantomSpec((Blob(a.center, a.sigma, amplitude=2.0),)), small_grid).values
        np.testing.assert_allclose(doubled, 2 * one, rtol=1e-12)

    def test_support_radius(self):
        spec = PhantomSpec((Blob((0.3, 0.4, 0.0), 0.1),))
        assert spec.support_radius == pytest.approx(0.5 + SUPPORT_SIGMAS * 0.1)
        assert PhantomSpec().support_radius == 0.0

    def test_transverse_support_radius_ignores_x3(self):
        spec = PhantomSpec((Blob((0.3, 0.0, 0.9), 0.1), Blob((0.0, -0.2, -0.5), 0.05)))
        assert spec.transverse_support_radius == pytest.approx(0.3 + SUPPORT_SIGMAS * 0.1)
        field = sample_phantom(spec, Grid3.centered((5, 5, 5), 0.1))
        assert field.transverse_support_radius == spec.transverse_support_radius
        assert field.support_radius == spec.support_radius

    def test_symmetrized_phantom_is_even(self):
        grid = Grid3.centered((8, 5, 5), 0.1)
        spec = PhantomSpec((Blob((0.15, 0.0, 0.0), 0.1), Blob((0.0, 0.1, 0.0), 0.1)), symmetrize_x1=True)
        assert len(spec.effective_blobs()) == 3
        field = sample_phantom(spec, grid)
        assert field.parity_x1 is Parity.EVEN
        np.testing.assert_array_equal(field.values, field.values[..., ::-1])

    def test_symmetrize_requires_symmetric_grid(self):
        grid = Grid3.centered((8, 5, 5), 0.1, center=(0.05, 0, 0))
        with pytest.raises(GridError):
            sample_phantom(PhantomSpec((Blob((0.1, 0, 0), 0.1),), symmetrize_x1=True), grid)

    def test_sampled_matches_analytic(self, small_grid):
        spec = PhantomSpec((Blob((0.05, 0.0, 0.1), 0.1, amplitude=2.0),))
        field = sample_phantom(spec, small_grid)
        points = np.stack(small_grid.mesh(), axis=-1)
        np.testing.assert_allclose(field.values, spec.evaluate(points))
        assert field.values.max() <= 2.0


def test_detector_geometry():
    assert DetectorGeometry(DetectorKind.PLANE, 0.1, R=3.0).R is None
    with pytest.raises(ValueError):
        DetectorGeometry(DetectorKind.CYLINDER, 0.1)
    with pytest.raises(ValueError):
        DetectorGeometry("sphere", 0.0, 1.0)


class TestInterpolation:
    def test_trilinear_is_exact_on_linear_functions(self, small_grid):
        field = ScalarField3.from_function(small_grid, lambda x1, x2, x3: 1 + 2 * x1 - x2 + 0.5 * x3)
        points = np.array([[0.013, -0.101, 0.07], [0.2, 0.1, -0.2]])
        expected = 1 + 2 * points[:, 0] - points[:, 1] + 0.5 * points[:, 2]
        np.testing.assert_allclose(interpolate3_many(field, points), expected, atol=1e-12)
        assert interpolate3(field, points[0]) == pytest.approx(expected[0])

    def test_outside_is_zero(self, small_grid):
        field = ScalarField3(small_grid, np.ones(small_grid.shape))
        assert interpolate3(field, [10.0, 0.0, 0.0]) == 0.0

    def test_sample_last_axis_broadcasts_queries(self):
        axis = UniformAxis(0.0, 0.5, 5)
        values = np.stack([axis.values, 2 * axis.values])[:, None, :]
        out = sample_last_axis(values, axis, np.array([0.25, 1.75, 5.0]))
        np.testing.assert_allclose(out, [[[0.25, 1.75, 0.0]], [[0.5, 3.5, 0.0]]])


class TestRelL2Error:
    def test_values(self):
        assert rel_l2_error([1.0, 1.0], [1.0, 1.0]) == 0.0
        assert rel_l2_error([2.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_zero_reference_reports_norm(self):
        assert rel_l2_error([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5.0)

    def test_mask(self):
        assert rel_l2_error([1.0, 9.0], [1.0, 0.0], mask=[True, False]) == 0.0

    def test_grid_mismatch(self, small_grid, blob_field):
        other = ScalarField3.zeros(Grid3.centered((16, 16, 6), 0.05))
        with pytest.raises(GridError):
            rel_l2_error(blob_field, other)
