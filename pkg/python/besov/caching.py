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

__all__ = ["EvaluationKey", "EvaluationCache"]


import collections.abc
import dataclasses
import logging
import threading
from typing import Callable

import numpy


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)
# Per-lookup messages are very noisy.
_log_trace = logging.getLogger("TRACE1.lsst." + __name__)
_log_trace.setLevel(logging.CRITICAL)  # Turn off by default.


@dataclasses.dataclass(frozen=True)
class EvaluationKey:
    """Identifies one residual norm ``||f - f*rho_eps||_p``.

    ``dilation`` distinguishes evaluations of the dilated kernel
    ``rho_delta``; it is 1 for plain evaluations.
    """

    function_id: str
    kernel_id: str
    p: float
    epsilon: float
    dilation: float = 1.0


class EvaluationCache(collections.abc.Mapping):
    """A bounded, thread-safe cache of residual norms.

    Entries beyond ``max_size`` are evicted at random, without considering
    usage or insertion order. Insertions are idempotent: a key that is already
    present keeps its first value, so concurrent workers computing the same
    entry cannot make the cache inconsistent.

    Parameters
    ----------
    max_size : `int`
        The maximum number of entries.
    seed : `int`, optional
        A seed for the random evictions.
    """

    def __init__(self, max_size: int, *, seed: int | None = None):
        if max_size < 0:
            raise ValueError(f"Maximum size must be nonnegative, gave {max_size}.")
        self._max_size = max_size
        self._impl = {}
        self._rng = numpy.random.default_rng(seed)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def max_size(self) -> int:
        """The maximum number of entries (`int`, read-only)."""
        return self._max_size

    def __getitem__(self, key: EvaluationKey) -> float:
        return self._impl[key]

    def __iter__(self) -> collections.abc.Iterator[EvaluationKey]:
        return iter(list(self._impl))

    def __len__(self) -> int:
        return len(self._impl)

    def _evict(self, target: dict, desired: int) -> list:
        """Remove random entries from ``target`` until at most ``desired``
        remain, returning the removed keys.
        """
        if len(target) <= desired:
            return []
        keys = list(target)
        chosen = self._rng.choice(len(keys), len(keys) - desired, replace=False, shuffle=False)
        evicted = [keys[i] for i in chosen]
        for key in evicted:
            del target[key]
        return evicted

    def add(self, key: EvaluationKey, value: float) -> float:
        """Insert an entry unless the key is already present.

        Parameters
        ----------
        key : `EvaluationKey`
            The key.
        value : `float`
            The value to store.

        Returns
        -------
        stored : `float`
            The value held by the cache for ``key`` after the call.
        """
        with self._lock:
            if key in self._impl:
                return self._impl[key]
            if self.max_size == 0:
                return value
            # Copy-and-swap so that readers never see a partial update.
            temp = dict(self._impl)
            evicted = self._evict(temp, self.max_size - 1)
            temp[key] = value
            self._impl = temp
        if evicted:
            _log_trace.debug("Evicted %d entries.", len(evicted))
        return value

    def get_or_compute(self, key: EvaluationKey, compute: Callable[[], float]) -> float:
        """Return the cached value for ``key``, computing it if absent.

        ``compute`` runs outside the lock, so two threads may compute the same
        entry; only the first result is kept. Every call counts as exactly
        one hit or one miss.
        """
        with self._lock:
            found = key in self._impl
            if found:
                self.hits += 1
                value = self._impl[key]
            else:
                self.misses += 1
        if found:
            return value
        return self.add(key, compute())
