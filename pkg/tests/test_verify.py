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
import os
import unittest
import unittest.mock
import xml.etree.ElementTree as ElementTree

from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
import numpy
import numpy.testing

from besov.caching import EvaluationCache
from besov.exception import ConfigError, GridMismatchError
from besov.grid import GridSpec
from besov.kernels import CubeKernel, GaussianKernel, MomentOrder, engineered_mixture
from besov.littlewood_paley import BesovParams, build_filter_bank
from besov.rate import EpsilonGrid
from besov.verify import CheckResult, EquivalenceReport, FunctionFamily, SuiteSettings, TaylorCheck, \
    default_eta, equivalence_experiment, experiment_summary, generate_function, junit_xml, norm_ratio, \
    one_sided_experiment, operator_norm_estimate, run_suite, schur_bound, standard_battery, standard_family, \
    suite_summary, taylor_rate_check, threads_from_environment, transfer_kernel


class ThreadsFromEnvironmentTest(unittest.TestCase):
    def test_values(self):
        with unittest.mock.patch.dict(os.environ, {"BESOV_THREADS": "3"}):
            self.assertEqual(threads_from_environment(), 3)
        with unittest.mock.patch.dict(os.environ, {"BESOV_THREADS": ""}):
            self.assertGreaterEqual(threads_from_environment(), 1)

    def test_invalid(self):
        for value in ("0", "-2", "many"):
            with self.subTest(value=value), unittest.mock.patch.dict(os.environ, {"BESOV_THREADS": value}):
                with self.assertRaises(ConfigError):
                    threads_from_environment()


class GenerateFunctionTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=16.0, points_per_axis=1024)

    def test_kinds(self):
        gaussian = generate_function(self.spec, {"kind": "gaussian", "variance": 2.0})
        self.assertEqual(gaussian.id, "gaussian(var=2)")
        self.assertEqual(gaussian.function.label, "gaussian(var=2)")
        self.assertIsNone(gaussian.known_smoothness)
        self.assertEqual(gaussian.function.values[self.spec.origin_index], 1.0)

        bump = generate_function(self.spec, {"kind": "power_bump", "alpha": 0.5, "id": "cusp"})
        self.assertEqual(bump.id, "cusp")
        self.assertEqual(bump.known_smoothness, 1.0)
        self.assertEqual(bump.function.values[self.spec.origin_index], 0.0)

        band = generate_function(self.spec, {"kind": "band_limited", "seed": 3})
        self.assertAlmostEqual(numpy.abs(band.function.values).max(), 1.0)
        again = generate_function(self.spec, {"kind": "band_limited", "seed": 3})
        numpy.testing.assert_array_equal(band.function.values, again.function.values)

        lacunary = generate_function(self.spec, {"kind": "lacunary", "alpha": 1.5})
        self.assertEqual(lacunary.known_smoothness, 1.5)

        zero = generate_function(self.spec, {"kind": "zero"})
        self.assertFalse(numpy.any(zero.function.values))

    def test_power_bump_smoothness_2d(self):
        spec = GridSpec(dim=2, extent=8.0, points_per_axis=64)
        member = generate_function(spec, {"kind": "power_bump", "alpha": 0.3})
        self.assertAlmostEqual(member.known_smoothness, 1.3)

    def test_malformed(self):
        for descriptor in [{"kind": "gaussian", "width": 1.0},
                           {"kind": "power_bump"},
                           {"kind": "sawtooth"},
                           {"alpha": 0.5},
                           {"kind": "lacunary", "alpha": "rough"},
                           "gaussian",
                           ]:
            with self.subTest(descriptor=descriptor), self.assertRaises(ConfigError):
                generate_function(self.spec, descriptor)


class FunctionFamilyTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=16.0, points_per_axis=256)

    def test_standard(self):
        family = standard_family(self.spec, seed=5)
        self.assertEqual(len(family.members), 10)
        ids = [m.id for m in family.members]
        self.assertEqual(len(set(ids)), 10)
        self.assertIn("band_limited(seed=6)", ids)

        refined = family.refined()
        self.assertEqual(refined.spec.points_per_axis, 512)
        self.assertEqual([m.id for m in refined.members], ids)
        self.assertEqual([m.known_smoothness for m in refined.members],
                         [m.known_smoothness for m in family.members])

    def test_duplicate_ids(self):
        with self.assertRaises(ConfigError):
            FunctionFamily(self.spec, ({"kind": "zero"}, {"kind": "zero"}))

    def test_grid_mismatch(self):
        member = generate_function(self.spec.refined(), {"kind": "zero"})
        with self.assertRaises(GridMismatchError):
            FunctionFamily(self.spec, (), (member,))

    def test_default_eta(self):
        eta = default_eta(self.spec)
        self.assertEqual(eta.label, "eta")
        self.assertAlmostEqual(eta.spec.cell_volume * eta.values.sum(), math.sqrt(2.0 * math.pi))


class StandardBatteryTest(unittest.TestCase):
    def test_members(self):
        for dim in (1, 2):
            with self.subTest(dim=dim):
                battery = standard_battery(dim)
                self.assertEqual(set(battery), {"centered-cube", "shifted-cube", "gaussian", "bump",
                                                "engineered-k0=1", "engineered-k0=2", "engineered-k0=3",
                                                "sign-changing"})
                self.assertTrue(all(k.dim == dim for k in battery.values()))
                self.assertFalse(battery["sign-changing"].is_nonnegative)


class NormRatioTest(unittest.TestCase):
    def test_values(self):
        self.assertEqual(norm_ratio(2.0, 1.0, 3.0, 2.0), 1.0)
        self.assertEqual(norm_ratio(2.0, 1.0, 4.0, math.inf), 0.5)
        self.assertTrue(math.isnan(norm_ratio(0.0, 0.0, 0.0, 2.0)))
        self.assertEqual(norm_ratio(1.0, 0.0, 0.0, 1.0), math.inf)


class EquivalenceReportTest(unittest.TestCase):
    def _report(self, ratios, admissible=None):
        return EquivalenceReport(experiment="test", kernel_id="k", params=BesovParams(s=1.0), ratios=ratios,
                                 cap=10.0, admissible=admissible)

    def test_bounded(self):
        report = self._report({"a": 0.5, "b": 2.0, "c": 1.0})
        self.assertEqual(report.spread, 4.0)
        self.assertTrue(report.bounded)
        self.assertTrue(report.passed)
        self.assertFalse(self._report({"a": 0.5, "b": 2.0}, admissible=False).passed)
        self.assertEqual(report.to_json()["ratios"], {"a": 0.5, "b": 2.0, "c": 1.0})

    def test_unbounded(self):
        self.assertFalse(self._report({"a": 0.01, "b": 2.0}).bounded)
        self.assertEqual(self._report({"a": 0.0, "b": 2.0}).spread, math.inf)
        self.assertEqual(self._report({"a": math.inf, "b": 2.0}).spread, math.inf)

    def test_empty(self):
        report = self._report({})
        self.assertEqual(report.spread, 1.0)
        self.assertTrue(math.isnan(report.min_ratio))


class ExperimentTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=16.0, points_per_axis=1024)
        self.family = FunctionFamily(self.spec, (
            {"kind": "gaussian", "variance": 0.5, "id": "narrow"},
            {"kind": "gaussian", "variance": 1.0, "id": "unit"},
            {"kind": "gaussian", "variance": 2.0, "center": 1.0, "id": "wide"},
            {"kind": "zero", "id": "zero"},
        ))
        self.bank = build_filter_bank(self.spec)
        self.grid = EpsilonGrid(j_max=5, samples_per_block=4)
        self.battery = standard_battery(1)

    def test_equivalence(self):
        report = equivalence_experiment(self.family, self.battery["gaussian"], BesovParams(s=0.7), self.bank,
                                        self.grid, cache=EvaluationCache(256))
        self.assertEqual(report.experiment, "equivalence")
        self.assertTrue(report.admissible)
        # Vanishing members carry no ratio.
        self.assertEqual(set(report.ratios), {"narrow", "unit", "wide"})
        self.assertTrue(all(0.0 < r < math.inf for r in report.ratios.values()))
        self.assertTrue(report.passed)

    def test_inadmissible(self):
        report = equivalence_experiment(self.family, self.battery["shifted-cube"], BesovParams(s=1.5),
                                        self.bank, self.grid)
        self.assertFalse(report.admissible)
        self.assertFalse(report.passed)

    def test_one_sided(self):
        report = one_sided_experiment(self.family, self.battery["sign-changing"], BesovParams(s=0.5),
                                      self.bank, self.grid)
        self.assertEqual(report.experiment, "one-sided")
        self.assertIsNone(report.admissible)
        self.assertEqual(report.cap, 1000.0)
        self.assertTrue(report.bounded)
        self.assertTrue(report.passed)

    def test_grid_mismatch(self):
        bank = build_filter_bank(self.spec.refined())
        with self.assertRaises(GridMismatchError):
            one_sided_experiment(self.family, self.battery["gaussian"], BesovParams(s=0.5), bank, self.grid)


class SchurTest(unittest.TestCase):
    @settings(max_examples=50, deadline=None)
    @given(matrix=arrays(numpy.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                         elements=st.one_of(st.just(0.0), st.floats(0.01, 10.0))),
           p=st.one_of(st.sampled_from([1.0, 2.0, math.inf]), st.floats(1.1, 6.0)))
    def test_dominates_estimate(self, matrix, p):
        bound = schur_bound(matrix, p)
        self.assertLessEqual(operator_norm_estimate(matrix, p), bound.bound * (1.0 + 1e-9) + 1e-12)

    def test_exact_ends(self):
        matrix = numpy.array([[1.0, 2.0], [0.0, 3.0]])
        self.assertEqual(schur_bound(matrix, 1).bound, 5.0)
        self.assertEqual(operator_norm_estimate(matrix, 1), 5.0)
        self.assertEqual(schur_bound(matrix, "inf").bound, 3.0)
        self.assertEqual(operator_norm_estimate(matrix, "inf"), 3.0)
        bound = schur_bound(matrix, 2)
        self.assertEqual((bound.m1, bound.m2), (3.0, 5.0))
        self.assertAlmostEqual(bound.bound, math.sqrt(15.0))

    def test_spectral_norm(self):
        matrix = numpy.random.default_rng(42).uniform(size=(10, 10))
        self.assertAlmostEqual(operator_norm_estimate(matrix, 2) / numpy.linalg.norm(matrix, 2), 1.0,
                               places=8)

    def test_invalid(self):
        for matrix in ([[1.0, -1.0]], [[math.nan]], [1.0, 2.0], [[]]):
            with self.subTest(matrix=matrix), self.assertRaises(ValueError):
                schur_bound(matrix, 2)

    def test_transfer_kernel(self):
        numpy.testing.assert_allclose(transfer_kernel([1.0, 0.5], 1.0, 3),
                                      [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])


class TaylorRateCheckTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.spec = GridSpec(dim=1, extent=16.0, points_per_axis=4096)
        self.eta = default_eta(self.spec)

    def test_slopes(self):
        for kernel, k0 in [(CubeKernel(dim=1, lo=-0.5, hi=0.5), 2), (CubeKernel(dim=1, lo=0.0, hi=1.0), 1),
                           (GaussianKernel(dim=1, variance=1.0), 2), (engineered_mixture(3, 1), 3)]:
            with self.subTest(kernel=kernel.kernel_id):
                check = taylor_rate_check(kernel, self.eta, EpsilonGrid())
                self.assertEqual(check.predicted_k0, k0)
                self.assertLessEqual(abs(check.slope - k0), 0.15)
                self.assertTrue(check.passed)
                self.assertGreater(check.constant_estimate, 0.0)

    def test_infinite_order(self):
        check = TaylorCheck(kernel_id="k", slope=6.0, predicted_k0=MomentOrder.INFINITE,
                            constant_estimate=math.nan, tolerance=0.15)
        self.assertFalse(check.passed)
        self.assertEqual(check.to_json()["predicted_k0"], "infinity")


class RunSuiteTest(unittest.TestCase):
    def test_infrastructure(self):
        results = run_suite(name_filter="infrastructure", threads=2)
        self.assertEqual([r.name for r in results], ["infrastructure/fft-vs-direct",
                                                     "infrastructure/partition-of-unity",
                                                     "infrastructure/power-law-fit"])
        self.assertTrue(all(r.passed for r in results), [r.detail for r in results])

    def test_dichotomy(self):
        results = run_suite(name_filter="dichotomy/", threads=2)
        self.assertEqual(len(results), 32)
        self.assertIn("dichotomy/engineered-k0=3@s=3.5", [r.name for r in results])
        self.assertIn("dichotomy/second-eta/shifted-cube@s=0.5", [r.name for r in results])
        self.assertTrue(all(r.passed for r in results), [(r.name, r.detail) for r in results if not r.passed])

    def test_functional_refinement(self):
        results = run_suite(name_filter="functional/refinement/", threads=2)
        self.assertEqual(len(results), 8)
        self.assertTrue(all(r.passed for r in results), [(r.name, r.detail) for r in results if not r.passed])

    def test_two_dimensional(self):
        suite_settings = SuiteSettings(dim=2, extra_kernels=(
            {"kind": "cube", "lo": 0.0, "hi": 2.0, "name": "wide-box"},
        ))
        self.assertEqual(suite_settings.taylor_grid, GridSpec(dim=2, extent=16.0, points_per_axis=256))
        for name in ("taylor/wide-box", "taylor/centered-cube"):
            with self.subTest(check=name):
                results = run_suite(suite_settings, name_filter=name, threads=1)
                self.assertEqual([r.name for r in results], [name])
                self.assertTrue(results[0].passed, results[0].detail)
                self.assertEqual(results[0].detail["predicted_k0"], 1 if name == "taylor/wide-box" else 2)

    def test_dimension_mismatch(self):
        with self.assertRaises(ConfigError):
            SuiteSettings(dim=2, extra_kernels=(CubeKernel(dim=1, lo=0.0, hi=1.0),))
        with self.assertRaises(ConfigError):
            SuiteSettings(dim=2, family_grid=GridSpec(dim=1, extent=16.0, points_per_axis=1024))
        with self.assertRaises(ConfigError):
            SuiteSettings(dim=4)

    def test_moments(self):
        results = run_suite(name_filter="moments/", threads=1)
        self.assertEqual(len(results), 2)
        self.assertTrue(all(r.passed for r in results), [r.detail for r in results])

    def test_extra_kernels(self):
        suite_settings = SuiteSettings(extra_kernels=(
            {"kind": "cube", "lo": 0.0, "hi": 2.0, "name": "wide-box"},
            {"kind": "mixture", "weights": [0.5], "components": [{"kind": "bump"}]},
        ))
        results = run_suite(suite_settings, name_filter="kernels/", threads=1)
        self.assertEqual([r.name for r in results], ["kernels/extra-0", "kernels/extra-1"])
        self.assertTrue(results[0].passed)
        self.assertEqual(results[0].detail, {"kernel_id": "wide-box", "k0": 1})
        self.assertFalse(results[1].passed)
        self.assertIn("KernelHypothesisError", results[1].detail["error"])

    def test_filter_matches_nothing(self):
        self.assertEqual(run_suite(name_filter="no-such-check", threads=1), [])


class ReportingTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        report = {"kernel_id": "gaussian", "params": {"s": 0.5, "p": 2.0, "q": 2.0}, "min_ratio": 0.5,
                  "max_ratio": 2.0}
        self.results = [
            CheckResult("taylor/gaussian", True, {"kernel_id": "gaussian", "empirical_slope": 2.01,
                                                  "predicted_k0": 2}, 0.25),
            CheckResult("one-sided/gaussian@s=0.5", False, {"report": report, "refinement_change": 0.2}, 1.5),
            CheckResult("infrastructure/power-law-fit", True, {}, 0.001),
        ]

    def test_suite_summary(self):
        table = suite_summary(self.results)
        self.assertEqual(table.colnames, ["check", "verdict", "duration"])
        self.assertEqual(list(table["verdict"]), ["PASS", "FAIL", "PASS"])

    def test_experiment_summary(self):
        table = experiment_summary(self.results)
        self.assertEqual(len(table), 1)
        row = table[0]
        self.assertEqual(row["kernel_id"], "gaussian")
        self.assertEqual(row["k0"], 2)
        self.assertEqual(row["slope"], 2.01)
        self.assertEqual(row["verdict"], "FAIL")
        self.assertEqual(len(experiment_summary(self.results[2:])), 0)

    def test_junit(self):
        suite = ElementTree.fromstring(junit_xml(self.results))
        self.assertEqual(suite.get("tests"), "3")
        self.assertEqual(suite.get("failures"), "1")
        cases = suite.findall("testcase")
        self.assertEqual([c.get("classname") for c in cases], ["taylor", "one-sided", "infrastructure"])
        self.assertIsNotNone(cases[1].find("failure"))
        self.assertIsNone(cases[0].find("failure"))
