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


import json
import math
import os
import struct
import tempfile
import unittest

import astropy.table
import numpy
import numpy.testing

from besov.exception import ConfigError
from besov.grid import GridFunction, GridSpec
from besov.littlewood_paley import BesovParams
from shared.gridio import BGF1_MAGIC, dumps_report, read_bgf1, read_csv_grid, read_grid_function, \
    write_bgf1, write_report, write_table


class GridFileTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)
        spec = GridSpec(dim=2, extent=3.5, points_per_axis=16)
        self.function = GridFunction(spec, numpy.random.default_rng(7).normal(size=spec.shape), label="noise")

    def _path(self, name):
        return os.path.join(self.directory.name, name)

    def test_bgf1(self):
        path = self._path("noise.bgf")
        write_bgf1(self.function, path)
        with open(path, "rb") as file:
            data = file.read()
        self.assertEqual(len(data), 32 + 8 * 256)
        self.assertEqual(data[:4], BGF1_MAGIC)
        self.assertEqual(struct.unpack_from("<I", data, 4), (1,))
        self.assertEqual(data[8:16], bytes(8))

        restored = read_bgf1(path)
        self.assertEqual(restored.spec, self.function.spec)
        numpy.testing.assert_array_equal(restored.values, self.function.values)
        self.assertEqual(restored.label, "noise.bgf")
        self.assertEqual(read_grid_function(path, label="f").label, "f")

    def test_bgf1_corrupt(self):
        path = self._path("noise.bgf")
        write_bgf1(self.function, path)
        with open(path, "rb") as file:
            data = file.read()
        variants = {"magic": b"BGF2" + data[4:],
                    "version": data[:4] + struct.pack("<I", 2) + data[8:],
                    "truncated": data[:-8],
                    "header": data[:20],
                    "grid": data[:16] + struct.pack("<IId", 1, 24, 1.0) + bytes(8 * 24),
                    }
        for name, content in variants.items():
            with self.subTest(variant=name):
                with open(path, "wb") as file:
                    file.write(content)
                with self.assertRaises(ConfigError):
                    read_bgf1(path)
        with self.assertRaises(ConfigError):
            read_bgf1(self._path("missing.bgf"))

    def test_csv(self):
        path = self._path("noise.csv")
        numpy.savetxt(path, self.function.values, delimiter=",", fmt="%.17g")
        restored = read_grid_function(path, extent=3.5)
        self.assertEqual(restored.spec, self.function.spec)
        numpy.testing.assert_array_equal(restored.values, self.function.values)

        line = self._path("line.csv")
        numpy.savetxt(line, numpy.arange(32.0), fmt="%g")
        self.assertEqual(read_csv_grid(line, 1.0).spec, GridSpec(dim=1, extent=1.0, points_per_axis=32))

    def test_csv_invalid(self):
        with self.assertRaises(ConfigError):
            read_grid_function(self._path("noise.csv"))
        path = self._path("wide.csv")
        numpy.savetxt(path, numpy.zeros((16, 32)), delimiter=",")
        with self.assertRaises(ConfigError):
            read_csv_grid(path, 1.0)
        path = self._path("text.csv")
        with open(path, "w") as file:
            file.write("a,b\n")
        with self.assertRaises(ConfigError):
            read_csv_grid(path, 1.0)
        path = self._path("odd.csv")
        numpy.savetxt(path, numpy.zeros(20))
        with self.assertRaises(ConfigError):
            read_csv_grid(path, 1.0)


class DumpsReportTest(unittest.TestCase):
    def test_deterministic(self):
        text = dumps_report({"b": 0.1, "a": [1, 2.5], "c": {"z": None, "y": True}})
        self.assertEqual(text, '{\n  "a": [\n    1,\n    2.5\n  ],\n  "b": 0.1,\n  "c": {\n'
                               '    "y": true,\n    "z": null\n  }\n}\n')

    def test_round_trip_floats(self):
        values = [1.0 / 3.0, 2.0**-40, 6.02214076e23, -0.0]
        self.assertEqual(json.loads(dumps_report(values)), values)

    def test_special_values(self):
        report = json.loads(dumps_report({"up": math.inf, "down": -math.inf, "nan": math.nan,
                                          "f32": numpy.float32(0.5), "i64": numpy.int64(3),
                                          "flag": numpy.bool_(False), "array": numpy.array([1.0, numpy.inf]),
                                          "pair": (1, 2)}))
        self.assertEqual(report, {"up": "inf", "down": "-inf", "nan": "nan", "f32": 0.5, "i64": 3,
                                  "flag": False, "array": [1.0, "inf"], "pair": [1, 2]})

    def test_to_json(self):
        self.assertEqual(json.loads(dumps_report(BesovParams(s=1.0, q="inf"))),
                         {"s": 1.0, "p": 2.0, "q": "inf"})

    def test_unsupported(self):
        with self.assertRaises(TypeError):
            dumps_report({"handle": object()})


class WriteOutputTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def test_report(self):
        directory = os.path.join(self.directory.name, "out")
        path = write_report({"value": 1.5}, directory, "besov_norm")
        self.assertEqual(path, os.path.join(directory, "besov_norm.json"))
        with open(path) as file:
            self.assertEqual(json.load(file), {"value": 1.5})
        with open(os.path.join(directory, "besov_norm.meta.json")) as file:
            meta = json.load(file)
        self.assertEqual(meta["file"], "besov_norm.json")
        self.assertIn("created", meta)
        self.assertIn("numpy", meta["versions"])

    def test_table(self):
        table = astropy.table.Table({"epsilon": [1.0, 0.5], "deviation": [0.25, 0.0625]}, meta={"p": 2.0})
        path = write_table(table, self.directory.name, "profile")
        self.assertEqual(table.meta, {"p": 2.0})
        restored = astropy.table.Table.read(path, format="ascii.csv")
        self.assertEqual(restored.colnames, ["epsilon", "deviation"])
        numpy.testing.assert_array_equal(restored["deviation"], [0.25, 0.0625])
        with open(os.path.join(self.directory.name, "profile.meta.json")) as file:
            self.assertEqual(json.load(file)["meta"], {"p": 2.0})
