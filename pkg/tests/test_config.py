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


import dataclasses
import json
import os
import tempfile
import unittest
import unittest.mock

from besov.exception import ConfigError
from shared.config import DEFAULTS, BesovSection, EpsilonGridSection, EtaTestSection, GridSection, \
    RunConfig, apply_overrides, parse_override


class ParseOverrideTest(unittest.TestCase):
    def test_values(self):
        self.assertEqual(parse_override("besov.s=1.5"), (["besov", "s"], 1.5))
        self.assertEqual(parse_override("besov.q=inf"), (["besov", "q"], "inf"))
        self.assertEqual(parse_override('kernel={"kind": "bump"}'), (["kernel"], {"kind": "bump"}))
        self.assertEqual(parse_override("output=null"), (["output"], None))
        self.assertEqual(parse_override("output=out/run=1"), (["output"], "out/run=1"))

    def test_malformed(self):
        for override in ("besov.s", "=1", "besov..s=1", ".s=2"):
            with self.subTest(override=override), self.assertRaises(ConfigError):
                parse_override(override)


class ApplyOverridesTest(unittest.TestCase):
    def test_apply(self):
        document = {"besov": {"s": 0.7, "p": 2}, "output": None}
        result = apply_overrides(document, ["besov.s=1.5", "output=results", "besov.s=2.5"])
        self.assertEqual(result, {"besov": {"s": 2.5, "p": 2}, "output": "results"})
        self.assertEqual(document["besov"]["s"], 0.7)

    def test_missing_path(self):
        for override in ("besov.r=1", "bessel.s=1", "output.dir=x"):
            with self.subTest(override=override), self.assertRaises(ConfigError):
                apply_overrides({"besov": {"s": 0.7}, "output": None}, [override])


class RunConfigTest(unittest.TestCase):
    def test_defaults(self):
        config = RunConfig({})
        self.assertEqual(config.grid, GridSection(dim=1, extent=16.0, points_per_axis=1024))
        self.assertEqual(config.kernel, {"kind": "gaussian", "variance": 1.0})
        self.assertEqual(config.besov, BesovSection(s=0.7, p=2, q=2))
        self.assertEqual(config.epsilon_grid, EpsilonGridSection(j_max=8, samples_per_block=4))
        self.assertEqual(config.eta_test, EtaTestSection(s=1.5, levels=16, samples=4, tail_share=0.01))
        self.assertEqual(config.moments.fractional, (0.5, 1.0, 1.5))
        self.assertIsNone(config.moments.tolerance)
        self.assertEqual(config.rate_profile.fit_range, (2.0**-7, 2.0**-2))
        self.assertEqual(config.verify.extra_kernels, ())
        self.assertIsNone(config.output)
        self.assertEqual(config.to_json(), DEFAULTS)

    def test_partial_sections(self):
        config = RunConfig({"grid": {"points_per_axis": 2048}, "besov": {"q": "Infinity", "p": 1.0}})
        self.assertEqual(config.grid.points_per_axis, 2048)
        self.assertEqual(config.grid.extent, 16.0)
        self.assertEqual(config.besov, BesovSection(s=0.7, p=1, q="inf"))

    def test_opaque_sections(self):
        config = RunConfig({"kernel": {"kind": "cube", "lo": 0, "hi": 1}, "function": "data/f.bgf",
                            "output": "results"})
        self.assertEqual(config.kernel, {"kind": "cube", "lo": 0, "hi": 1})
        self.assertEqual(config.function, "data/f.bgf")
        self.assertEqual(config.output, "results")

    def test_read_only(self):
        config = RunConfig({"output": "results"})
        with self.assertRaises(dataclasses.FrozenInstanceError):
            config.grid.dim = 2
        with self.assertRaises(dataclasses.FrozenInstanceError):
            config.besov.s = 2.0
        with self.assertRaises(AttributeError):
            config.output = "elsewhere"
        self.assertEqual(config.to_json()["output"], "results")

    def test_to_json_is_a_copy(self):
        config = RunConfig({})
        config.to_json()["besov"]["s"] = 3.0
        self.assertEqual(config.to_json()["besov"]["s"], 0.7)
        self.assertEqual(DEFAULTS["besov"]["s"], 0.7)

    def test_invalid(self):
        for document in [{"bessel": {}},
                         {"besov": {"s": 1.0, "r": 2}},
                         {"besov": {"p": "huge"}},
                         {"besov": 1.5},
                         {"grid": {"dim": "two"}},
                         {"kernel": {"variance": 1.0}},
                         {"kernel": 3},
                         {"eta_test": {"tail_share": 1.5}},
                         {"rate_profile": {"fit_range": [0.5]}},
                         {"rate_profile": {"fit_range": [0.0, 0.5]}},
                         {"moments": {"fractional": "0.5"}},
                         {"verify": {"extra_kernels": {"kind": "bump"}}},
                         {"output": 42},
                         ["besov"],
                         ]:
            with self.subTest(document=document), self.assertRaises(ConfigError):
                RunConfig(document)

    def test_from_document(self):
        config = RunConfig.from_document({"besov": {"s": 1.0}}, ["besov.q=\"inf\"", "eta_test.levels=8",
                                                                 'kernel={"kind": "bump"}'])
        self.assertEqual(config.besov, BesovSection(s=1.0, p=2, q="inf"))
        self.assertEqual(config.eta_test.levels, 8)
        self.assertEqual(config.kernel, {"kind": "bump"})
        with self.assertRaises(ConfigError):
            RunConfig.from_document({}, ["eta_test.depth=8"])


class RunConfigFileTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def _write(self, name, text):
        path = os.path.join(self.directory.name, name)
        with open(path, "w", encoding="utf-8") as file:
            file.write(text)
        return path

    def test_json(self):
        path = self._write("run.json", json.dumps({"besov": {"s": 1.5}, "kernel": "kernels/box.json"}))
        config = RunConfig.from_file(path, ["besov.p=1"])
        self.assertEqual(config.besov, BesovSection(s=1.5, p=1, q=2))
        self.assertEqual(config.base_dir, self.directory.name)
        self.assertEqual(config.resolve_path(config.kernel),
                         os.path.join(self.directory.name, "kernels", "box.json"))

    def test_yaml(self):
        path = self._write("run.yaml", "besov:\n  s: 2.5\n  q: inf\nverify:\n  extra_kernels:\n"
                                       "    - {kind: cube, lo: 0, hi: 1}\n")
        config = RunConfig.from_file(path)
        self.assertEqual(config.besov.q, "inf")
        self.assertEqual(config.verify.extra_kernels, ({"kind": "cube", "lo": 0, "hi": 1},))

    def test_empty_yaml(self):
        self.assertEqual(RunConfig.from_file(self._write("empty.yml", "")).to_json(), DEFAULTS)

    def test_shipped_defaults(self):
        path = os.path.join(os.path.dirname(__file__), os.pardir, "etc", "besov_default.yaml")
        self.assertEqual(RunConfig.from_file(path).to_json(), DEFAULTS)

    def test_resolve_path(self):
        config = RunConfig({}, base_dir=self.directory.name)
        self.assertEqual(config.resolve_path("/abs/f.bgf"), "/abs/f.bgf")
        with unittest.mock.patch.dict(os.environ, {"BESOV_DATA": "/data"}):
            self.assertEqual(config.resolve_path("${BESOV_DATA}/f.bgf"), "/data/f.bgf")

    def test_unreadable(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_file(os.path.join(self.directory.name, "missing.json"))
        with self.assertRaises(ConfigError):
            RunConfig.from_file(self._write("bad.json", "{besov: 1"))
        with self.assertRaises(ConfigError):
            RunConfig.from_file(self._write("bad.yaml", "besov: [1, 2"))
