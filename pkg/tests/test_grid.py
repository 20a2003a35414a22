# This file is part of besov_mollifiers.
#
# Developed for the LSST Data Management System.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.


import math
import unittest

from hypothesis import given, settings, strategies as st
import numpy
import numpy.testing

from besov.exception import ConfigError, GridMismatchError, ResolutionError
from besov.grid import AnalyticKind, GridFunction, GridSpec, cell_mass, convolve, dual_exponent, lp_norm, \
    parse_exponent, rescale_kernel, sample_analytic


class GridSpecTest(unittest.TestCase):
    def test_geometry(self):
        spec = GridSpec(dim=1, extent=16.0, points_per_axis=4096)
        self.assertEqual(spec.spacing, 2.0**-7)
        self.assertEqual(spec.shape, (4096,))
        self.assertEqual(spec.axis()[spec.origin_index], 0.0)
        self.assertEqual(spec.axis()[0], -16.0)
        self.assertAlmostEqual(spec.nyquist, math.pi * 128)

    def test_two_dimensions(self):
        spec = GridSpec(dim=2, extent=2.0, points_per_axis=16)
        x, y = spec.coordinates()
        self.assertEqual(x.shape, (16, 16))
        self.assertEqual(spec.cell_volume, 0.0625)
        numpy.testing.assert_array_equal(x[:, 0], spec.axis())
        numpy.testing.assert_array_equal(y[0, :], spec.axis())
        self.assertEqual(spec.radius()[8, 8], 0.0)

    def test_frequencies(self):
        spec = GridSpec(dim=1, extent=math.pi, points_per_axis=64)
        (freqs,) = spec.frequencies()
        self.assertAlmostEqual(freqs[1], 1.0, places=12)
        self.assertAlmostEqual(float(numpy.abs(freqs).max()), spec.nyquist)

    def test_refined(self):
        spec = GridSpec(dim=2, extent=4.0, points_per_axis=32)
        refined = spec.refined()
        self.assertEqual(refined.points_per_axis, 64)
        self.assertEqual(refined.extent, spec.extent)

    def test_invalid(self):
        for kwargs in [{"dim": 3, "extent": 1.0, "points_per_axis": 16},
                       {"dim": 1, "extent": 0.0, "points_per_axis": 16},
                       {"dim": 1, "extent": math.inf, "points_per_axis": 16},
                       {"dim": 1, "extent": 1.0, "points_per_axis": 8},
                       {"dim": 1, "extent": 1.0, "points_per_axis": 48},
                       ]:
            with self.subTest(**kwargs), self.assertRaises(ConfigError):
                GridSpec(**kwargs)


class GridFunctionTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=1.0, points_per_axis=16)

    def test_immutable(self):
        source = numpy.ones(16)
        f = GridFunction(self.spec, source)
        source[0] = 5.0
        self.assertEqual(f.values[0], 1.0)
        with self.assertRaises(ValueError):
            f.values[0] = 2.0

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            GridFunction(self.spec, numpy.ones(8))
        with self.assertRaises(ConfigError):
            GridFunction(self.spec, numpy.full(16, numpy.nan))

    def test_arithmetic(self):
        f = GridFunction(self.spec, numpy.arange(16.0), label="ramp")
        g = GridFunction(self.spec, numpy.ones(16))
        numpy.testing.assert_array_equal((f - g).values, numpy.arange(16.0) - 1.0)
        numpy.testing.assert_array_equal((f + g).values, numpy.arange(16.0) + 1.0)
        numpy.testing.assert_array_equal(f.scaled(2.0).values, 2.0 * numpy.arange(16.0))
        self.assertEqual(f.scaled(2.0).label, "ramp")

        other = GridFunction(GridSpec(dim=1, extent=2.0, points_per_axis=16), numpy.ones(16))
        with self.assertRaises(GridMismatchError):
            f - other


class ExponentTest(unittest.TestCase):
    def test_parse(self):
        self.assertEqual(parse_exponent(2), 2.0)
        self.assertEqual(parse_exponent("inf"), math.inf)
        self.assertEqual(parse_exponent("Infinity"), math.inf)
        with self.assertRaises(ValueError):
            parse_exponent(0.5)
        with self.assertRaises(ValueError):
            parse_exponent("two")

    def test_dual(self):
        self.assertEqual(dual_exponent(1.0), math.inf)
        self.assertEqual(dual_exponent(math.inf), 1.0)
        self.assertEqual(dual_exponent(2.0), 2.0)
        self.assertAlmostEqual(dual_exponent(3.0), 1.5)


class LpNormTest(unittest.TestCase):
    def test_constant(self):
        for dim in (1, 2):
            spec = GridSpec(dim=dim, extent=1.0, points_per_axis=64)
            f = GridFunction(spec, numpy.ones(spec.shape))
            with self.subTest(dim=dim):
                self.assertAlmostEqual(lp_norm(f, 2), 2.0 ** (dim / 2.0), places=12)
                self.assertEqual(lp_norm(f, "inf"), 1.0)

    def test_zero(self):
        spec = GridSpec(dim=1, extent=1.0, points_per_axis=16)
        for p in (1, 2, 7.5, "inf"):
            self.assertEqual(lp_norm(GridFunction(spec, numpy.zeros(16)), p), 0.0)

    def test_gaussian(self):
        spec = GridSpec(dim=1, extent=16.0, points_per_axis=4096)
        f = GridFunction(spec, numpy.exp(-0.5 * spec.axis() ** 2))
        self.assertAlmostEqual(lp_norm(f, 1), math.sqrt(2.0 * math.pi), delta=1e-8)
        self.assertAlmostEqual(lp_norm(f, 2), math.pi**0.25, delta=1e-8)

    def test_large_exponent(self):
        spec = GridSpec(dim=1, extent=1.0, points_per_axis=16)
        f = GridFunction(spec, numpy.full(16, 1e10))
        self.assertTrue(math.isfinite(lp_norm(f, 200)))

    def test_invalid(self):
        spec = GridSpec(dim=1, extent=1.0, points_per_axis=16)
        with self.assertRaises(ValueError):
            lp_norm(GridFunction(spec, numpy.ones(16)), 0.5)


class ConvolveTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=4.0, points_per_axis=1024)

    def test_delta_identity(self):
        delta = numpy.zeros(self.spec.shape)
        delta[self.spec.origin_index] = 1.0 / self.spec.spacing
        f = GridFunction(self.spec, numpy.exp(-self.spec.axis() ** 2) * numpy.cos(3.0 * self.spec.axis()))
        for method in ("fft", "direct"):
            with self.subTest(method=method):
                result = convolve(f, GridFunction(self.spec, delta), method)
                numpy.testing.assert_allclose(result.values, f.values, atol=1e-12)

    def test_boxes_make_hat(self):
        box = sample_analytic(AnalyticKind.CUBE, {"lo": -0.5, "hi": 0.5}, self.spec)
        hat = convolve(box, box)
        x = self.spec.axis()
        self.assertAlmostEqual(hat.values[self.spec.origin_index], 1.0, delta=0.01)
        self.assertAlmostEqual(float(numpy.interp(0.5, x, hat.values)), 0.5, delta=0.01)
        numpy.testing.assert_allclose(hat.values[numpy.abs(x) > 1.0 + 2 * self.spec.spacing], 0.0, atol=1e-12)
        self.assertAlmostEqual(cell_mass(hat), 1.0, places=12)

    def test_fft_matches_direct(self):
        rng = numpy.random.default_rng(42)
        for spec in (GridSpec(dim=1, extent=2.0, points_per_axis=128),
                     GridSpec(dim=2, extent=2.0, points_per_axis=16)):
            f = GridFunction(spec, rng.normal(size=spec.shape))
            g = GridFunction(spec, rng.normal(size=spec.shape))
            with self.subTest(dim=spec.dim):
                fast = convolve(f, g, "fft").values
                slow = convolve(f, g, "direct").values
                numpy.testing.assert_allclose(fast, slow, rtol=0, atol=1e-10 * numpy.abs(slow).max())

    def test_mismatch(self):
        f = GridFunction(self.spec, numpy.ones(self.spec.shape))
        g = GridFunction(self.spec.refined(), numpy.ones(2 * self.spec.points_per_axis))
        with self.assertRaises(GridMismatchError):
            convolve(f, g)

    def test_unknown_method(self):
        f = GridFunction(self.spec, numpy.ones(self.spec.shape))
        with self.assertRaises(ValueError):
            convolve(f, f, "winograd")

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2]))
    def test_commutative(self, seed, dim):
        rng = numpy.random.default_rng(seed)
        spec = GridSpec(dim=dim, extent=1.0, points_per_axis=32)
        f = GridFunction(spec, rng.normal(size=spec.shape))
        g = GridFunction(spec, rng.normal(size=spec.shape))
        numpy.testing.assert_allclose(convolve(f, g).values, convolve(g, f).values,
                                      rtol=0, atol=1e-12 * numpy.abs(convolve(f, g).values).max())

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.0, 2.0, math.inf]))
    def test_young_inequality(self, seed, p):
        rng = numpy.random.default_rng(seed)
        spec = GridSpec(dim=1, extent=3.0, points_per_axis=64)
        f = GridFunction(spec, rng.normal(size=spec.shape))
        g = GridFunction(spec, rng.normal(size=spec.shape))
        self.assertLessEqual(lp_norm(convolve(f, g), p), lp_norm(f, p) * lp_norm(g, 1) * (1 + 1e-12))


class RescaleKernelTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=8.0, points_per_axis=1024)
        self.gaussian = sample_analytic(AnalyticKind.GAUSSIAN, {"variance": 0.5}, self.spec)

    def test_identity(self):
        self.assertIs(rescale_kernel(self.gaussian, 1.0), self.gaussian)

    def test_invalid_scale(self):
        for epsilon in (0.0, -0.5, 1.5):
            with self.subTest(epsilon=epsilon), self.assertRaises(ValueError):
                rescale_kernel(self.gaussian, epsilon)
        with self.assertRaises(ValueError):
            rescale_kernel(self.gaussian, 0.5, interpolation="quintic")

    def test_matches_analytic(self):
        for interpolation in ("cubic", "nearest"):
            with self.subTest(interpolation=interpolation):
                rescaled = rescale_kernel(self.gaussian, 0.25, interpolation)
                expected = sample_analytic(AnalyticKind.GAUSSIAN, {"variance": 0.5}, self.spec, scale=0.25)
                self.assertLess(lp_norm(rescaled - expected, 1), 1e-2)
                self.assertAlmostEqual(cell_mass(rescaled), 1.0, delta=1e-3)

    def test_nearest_conserves_mass(self):
        box = sample_analytic(AnalyticKind.CUBE, {"lo": 0.0, "hi": 1.0}, self.spec)
        rescaled = rescale_kernel(box, 0.125, "nearest")
        self.assertAlmostEqual(cell_mass(rescaled), cell_mass(box), places=12)

    def test_two_dimensions(self):
        spec = GridSpec(dim=2, extent=4.0, points_per_axis=128)
        kernel = sample_analytic(AnalyticKind.GAUSSIAN, {"variance": 0.125}, spec)
        rescaled = rescale_kernel(kernel, 0.5)
        self.assertAlmostEqual(cell_mass(rescaled), 1.0, delta=1e-3)
        self.assertAlmostEqual(rescaled.values[64, 64], 4.0 * kernel.values[64, 64], delta=1e-6)

    def test_under_resolved(self):
        with self.assertRaises(ResolutionError):
            rescale_kernel(self.gaussian, 2.0**-9)


class SampleAnalyticTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=4.0, points_per_axis=256)

    def test_unit_mass(self):
        for kind, params in [("gaussian", {"variance": 0.0625, "center": 0.5}),
                             ("cube", {"lo": -0.3, "hi": 0.45}),
                             ("bump", {"radius": 1.0}),
                             ]:
            with self.subTest(kind=kind):
                self.assertAlmostEqual(cell_mass(sample_analytic(kind, params, self.spec)), 1.0, delta=1e-6)

    def test_cube_coverage(self):
        cube = sample_analytic(AnalyticKind.CUBE, {"lo": 0.0, "hi": 1.0}, self.spec)
        x = self.spec.axis()
        self.assertEqual(cube.values[x == 0.5][0], 1.0)
        self.assertEqual(cube.values[x == 0.0][0], 0.5)
        self.assertEqual(cube.values[x == -0.5][0], 0.0)
        self.assertAlmostEqual(cell_mass(cube), 1.0, places=14)

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            sample_analytic("triangle", {}, self.spec)
        with self.assertRaises(ConfigError):
            sample_analytic("cube", {"lo": 1.0, "hi": 0.0}, self.spec)
        with self.assertRaises(ConfigError):
            sample_analytic("gaussian", {"variance": 1.0}, self.spec)  # 8 sigma does not fit in [-4, 4)
