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

import concurrent.futures
import unittest

from besov.caching import EvaluationCache, EvaluationKey


class EvaluationCacheTest(unittest.TestCase):
    def setUp(self):
        super().setUp()

        self.keys = [EvaluationKey("gaussian(var=1)", "centered-cube", 2.0, 2.0**-j) for j in range(6)]

    def _cache(self, size):
        # Variable seed gives better coverage of edge cases.
        return EvaluationCache(size, seed=abs(hash(self.id())))

    def test_constructor_initial_state(self):
        cache = self._cache(3)

        self.assertFalse(cache)
        self.assertEqual(len(cache), 0)
        self.assertEqual(list(cache), [])
        self.assertEqual(cache.max_size, 3)

    def test_constructor_nonnegative(self):
        with self.assertRaises(ValueError):
            EvaluationCache(-1)
        EvaluationCache(0)

    def test_add(self):
        cache = self._cache(3)

        self.assertEqual(cache.add(self.keys[0], 0.5), 0.5)
        self.assertIn(self.keys[0], cache)
        self.assertEqual(cache[self.keys[0]], 0.5)

        # Idempotent: first value wins
        self.assertEqual(cache.add(self.keys[0], 0.25), 0.5)
        self.assertEqual(cache[self.keys[0]], 0.5)
        self.assertEqual(len(cache), 1)

    def test_eviction(self):
        cache = self._cache(3)
        for i, key in enumerate(self.keys):
            cache.add(key, float(i))
            self.assertLessEqual(len(cache), 3)
            # The newest entry is never evicted
            self.assertIn(key, cache)
        self.assertEqual(len(cache), 3)
        for key in cache:
            self.assertEqual(cache[key], float(self.keys.index(key)))

    def test_zero_size(self):
        cache = self._cache(0)
        self.assertEqual(cache.add(self.keys[0], 1.5), 1.5)
        self.assertNotIn(self.keys[0], cache)

    def test_get_or_compute(self):
        cache = self._cache(3)
        calls = []

        def compute():
            calls.append(1)
            return 0.125

        self.assertEqual(cache.get_or_compute(self.keys[1], compute), 0.125)
        self.assertEqual(cache.get_or_compute(self.keys[1], compute), 0.125)
        self.assertEqual(len(calls), 1)
        self.assertEqual((cache.hits, cache.misses), (1, 1))

    def test_key_fields(self):
        cache = self._cache(4)
        cache.add(self.keys[0], 1.0)
        self.assertNotIn(EvaluationKey("gaussian(var=1)", "centered-cube", 1.0, 1.0), cache)
        self.assertNotIn(EvaluationKey("gaussian(var=1)", "centered-cube", 2.0, 1.0, dilation=0.5), cache)
        self.assertIn(EvaluationKey("gaussian(var=1)", "centered-cube", 2.0, 1.0, dilation=1.0), cache)

    def test_threads(self):
        cache = self._cache(4)
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as executor:
            results = list(executor.map(lambda i: cache.add(self.keys[i % 2], float(i)), range(40)))
        self.assertEqual(len(cache), 2)
        for i, stored in enumerate(results):
            self.assertEqual(stored, cache[self.keys[i % 2]])

    def test_threaded_counts(self):
        cache = self._cache(4)
        calls = 400
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as executor:
            results = list(executor.map(
                lambda i: cache.get_or_compute(self.keys[i % 3], lambda: float(i % 3)), range(calls)))
        self.assertEqual(cache.hits + cache.misses, calls)
        self.assertGreaterEqual(cache.misses, 3)
        self.assertEqual(results, [float(i % 3) for i in range(calls)])
