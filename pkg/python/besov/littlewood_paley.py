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


__all__ = ["smoothstep", "FilterBank", "BesovParams", "LPDecomposition", "BesovValue",
           "MeanZeroFilter", "GaussianDerivative", "PsiFilter",
           "build_filter_bank", "lp_decompose", "besov_seminorm", "besov_norm", "partition_residual",
           "CONVERGED_SHARE",
           ]


import abc
import dataclasses
import functools
import logging
import math

import numpy
import scipy.fft
import scipy.integrate

from .exception import ConfigError, GridMismatchError, ResolutionError
from .grid import GridFunction, GridSpec, lp_norm, parse_exponent


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)


CONVERGED_SHARE = 0.05
"""A truncated Besov sum counts as converged if its last term contributes
less than this share (`float`).
"""

_PSI_RAMP = (0.8, 0.95)
_PSI_PLATEAU_END = 4.2
_PSI_CUTOFF = 5.0
_TABLE_SIZE = 1 << 16


@functools.lru_cache
def _smoothstep_table():
    u = numpy.linspace(0.0, 1.0, _TABLE_SIZE + 1)
    density = numpy.zeros_like(u)
    inner = (u > 0.0) & (u < 1.0)
    density[inner] = numpy.exp(-1.0 / (u[inner] * (1.0 - u[inner])))
    cumulative = scipy.integrate.cumulative_trapezoid(density, u, initial=0.0)
    cumulative /= cumulative[-1]
    cumulative.setflags(write=False)
    return u, cumulative


def smoothstep(u):
    """The normalized integral of ``exp(-1/(t(1-t)))`` from 0 to ``u``.

    Exactly 0 for ``u <= 0`` and exactly 1 for ``u >= 1``; smooth and
    monotone in between.
    """
    table_u, table_g = _smoothstep_table()
    return numpy.interp(u, table_u, table_g, left=0.0, right=1.0)


def _transition(r, a, b):
    """Radial profile equal to 1 for ``r <= a`` and 0 for ``r >= b``."""
    return 1.0 - smoothstep((numpy.asarray(r, dtype=float) - a) / (b - a))


@dataclasses.dataclass(frozen=True, kw_only=True)
class BesovParams:
    """The indices of a Besov space ``B^s_{p,q}``.

    Parameters
    ----------
    s : `float`
        The smoothness, positive.
    p, q : `float` or `str`
        The integrability exponents, in [1, inf]; ``"inf"`` is accepted.
    """

    s: float
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0):
            raise ConfigError(f"Smoothness must be positive, got {self.s}.")
        try:
            object.__setattr__(self, "p", parse_exponent(self.p))
            object.__setattr__(self, "q", parse_exponent(self.q))
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def with_s(self, s: float) -> "BesovParams":
        return dataclasses.replace(self, s=s)

    def to_json(self) -> dict:
        return {"s": self.s, "p": self.p, "q": self.q}


@dataclasses.dataclass(frozen=True, kw_only=True)
class FilterBank:
    """A smooth inhomogeneous Littlewood-Paley partition on one grid.

    ``zeta_hat`` is 1 on ``|xi| <= 1 + delta_in`` and 0 on
    ``|xi| >= 2 - delta_out``; band ``j >= 1`` is
    ``zeta_hat(2^-j xi) - zeta_hat(2^(1-j) xi)``, supported in
    ``2^(j-1)(1 + delta_in) < |xi| < 2^j (2 - delta_out)``.

    Use `build_filter_bank` to construct.
    """

    spec: GridSpec
    delta_in: float = 0.1
    delta_out: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.delta_in and 0.0 <= self.delta_out and self.delta_in + self.delta_out < 1.0):
            raise ConfigError(f"Need delta_in, delta_out >= 0 with sum < 1, got {self.delta_in}, "
                              f"{self.delta_out}.")
        if self.levels_max < 3:
            raise ResolutionError(f"Grid {self.spec} resolves only {self.levels_max} dyadic bands; "
                                  "need at least 3.")

    @property
    def levels_max(self) -> int:
        """The finest band ``J``, fixed by the Nyquist frequency (`int`)."""
        return int(math.floor(math.log2(self.spec.nyquist / 4.0)))

    @property
    def transition(self) -> tuple[float, float]:
        """The radii where ``zeta_hat`` leaves 1 and reaches 0."""
        return 1.0 + self.delta_in, 2.0 - self.delta_out

    def profile(self, r):
        """Evaluate ``zeta_hat`` at radii ``r``."""
        return _transition(r, *self.transition)

    def phi_profile(self, r, j: int = 1):
        """Evaluate band ``j``'s multiplier at radii ``r``."""
        if j < 1:
            raise ValueError(f"Bands are numbered from 1, got {j}.")
        r = numpy.asarray(r, dtype=float)
        return self.profile(r * 2.0 ** (-j)) - self.profile(r * 2.0 ** (1 - j))

    def psi_profile(self, r):
        """Evaluate ``psi_hat``, equal to 1 on the support of band 1's
        generator and 0 at the origin, at radii ``r``.
        """
        r = numpy.asarray(r, dtype=float)
        rising = smoothstep((r - _PSI_RAMP[0]) / (_PSI_RAMP[1] - _PSI_RAMP[0]))
        return rising * _transition(r, _PSI_PLATEAU_END, _PSI_CUTOFF)

    @functools.cached_property
    def _radius(self):
        return self.spec.frequency_radius()

    def zeta_hat(self) -> numpy.ndarray:
        """``zeta_hat`` on the grid's FFT frequencies."""
        return self.profile(self._radius)

    def phi_hat(self, j: int) -> numpy.ndarray:
        """Band ``j``'s multiplier on the grid's FFT frequencies."""
        return self.phi_profile(self._radius, j)

    def band_hat(self, j: int) -> numpy.ndarray:
        """The multiplier producing piece ``j`` (``zeta_hat`` for 0)."""
        return self.zeta_hat() if j == 0 else self.phi_hat(j)

    def psi_hat(self) -> numpy.ndarray:
        """``psi_hat`` on the grid's FFT frequencies."""
        return self.psi_profile(self._radius)

    def psi_filter(self) -> "PsiFilter":
        """Return ``psi`` as a mean-zero analytic filter."""
        return PsiFilter(bank=self)

    def describe(self) -> dict:
        return {"delta_in": self.delta_in, "delta_out": self.delta_out, "levels_max": self.levels_max}


def build_filter_bank(spec: GridSpec, delta_in: float = 0.1, delta_out: float = 0.1) -> FilterBank:
    """Build the Littlewood-Paley filter bank for a grid.

    Parameters
    ----------
    spec : `GridSpec`
        The grid.
    delta_in, delta_out : `float`, optional
        The margins of ``zeta_hat``'s transition inside ``[1, 2]``.

    Returns
    -------
    bank : `FilterBank`
        The bank.

    Raises
    ------
    ResolutionError
        Raised if the grid resolves fewer than 3 bands.
    """
    bank = FilterBank(spec=spec, delta_in=delta_in, delta_out=delta_out)
    _log.debug("Built filter bank with J=%d on %s.", bank.levels_max, spec)
    return bank


def partition_residual(bank: FilterBank, radii) -> numpy.ndarray:
    """Return ``|zeta_hat + sum_j phi_hat_j - 1|`` at radii ``r <= 2^J``."""
    radii = numpy.asarray(radii, dtype=float)
    total = bank.profile(radii)
    for j in range(1, bank.levels_max + 1):
        total = total + bank.phi_profile(radii, j)
    return numpy.abs(total - 1.0)


@dataclasses.dataclass(frozen=True)
class LPDecomposition:
    """The pieces ``f_0, ..., f_J`` of a function."""

    pieces: tuple[GridFunction, ...]
    bank: FilterBank

    def reconstruct(self) -> GridFunction:
        """Return the sum of the pieces."""
        return self.pieces[0].with_values(sum(piece.values for piece in self.pieces))


def _check_bank(f, bank):
    if f.spec != bank.spec:
        raise GridMismatchError(f"Function on {f.spec} but filter bank on {bank.spec}.")


def lp_decompose(f: GridFunction, bank: FilterBank) -> LPDecomposition:
    """Split a function into its Littlewood-Paley pieces.

    Parameters
    ----------
    f : `GridFunction`
        The function.
    bank : `FilterBank`
        The filter bank, on the same grid.

    Returns
    -------
    decomposition : `LPDecomposition`
        ``f_0 = f * zeta`` and ``f_j = f * phi_{2^(1-j)}`` for
        ``1 <= j <= J``.
    """
    _check_bank(f, bank)
    spectrum = scipy.fft.fftn(f.values)
    pieces = []
    for j in range(bank.levels_max + 1):
        values = scipy.fft.ifftn(spectrum * bank.band_hat(j)).real
        pieces.append(f.with_values(values, label=f"{f.label}[{j}]"))
    return LPDecomposition(tuple(pieces), bank)


@dataclasses.dataclass(frozen=True, kw_only=True)
class BesovValue:
    """A truncated Besov-type sum and its truncation diagnostic.
    """

    value: float
    terms: tuple[float, ...]
    last_share: float

    @property
    def converged(self) -> bool:
        """Whether the last term's share is below `CONVERGED_SHARE`."""
        return self.last_share < CONVERGED_SHARE

    def to_json(self) -> dict:
        return {"value": self.value, "last_term_share": self.last_share, "converged": self.converged,
                "levels": len(self.terms) - 1}


def _lq_sum(terms, q):
    """Return the lq norm of ``terms`` and the share of the last term."""
    terms = numpy.asarray(terms, dtype=float)
    peak = terms.max() if terms.size else 0.0
    if peak == 0.0:
        return 0.0, 0.0
    if math.isinf(q):
        return float(peak), float(terms[-1] / peak)
    powers = (terms / peak) ** q
    total = powers.sum()
    return float(peak * total ** (1.0 / q)), float(powers[-1] / total)


def besov_seminorm(f: GridFunction, bank: FilterBank, params: BesovParams) -> BesovValue:
    """Compute ``(sum_j (2^(sj) ||f_j||_p)^q)^(1/q)`` up to the bank's ``J``.

    Parameters
    ----------
    f : `GridFunction`
        The function.
    bank : `FilterBank`
        The filter bank.
    params : `BesovParams`
        The indices; ``q = inf`` takes the supremum.

    Returns
    -------
    seminorm : `BesovValue`
        The truncated sum with its per-level terms and last-term share.
    """
    decomposition = lp_decompose(f, bank)
    terms = tuple(2.0 ** (params.s * j) * lp_norm(piece, params.p)
                  for j, piece in enumerate(decomposition.pieces))
    value, share = _lq_sum(terms, params.q)
    return BesovValue(value=value, terms=terms, last_share=share)


def besov_norm(f: GridFunction, bank: FilterBank, params: BesovParams) -> BesovValue:
    """Compute ``(||f||_p^q + |f|^q)^(1/q)``, the maximum for ``q = inf``.

    The returned terms and last-term share are those of the seminorm.
    """
    seminorm = besov_seminorm(f, bank, params)
    value, _ = _lq_sum([lp_norm(f, params.p), seminorm.value], params.q)
    return dataclasses.replace(seminorm, value=value)


class MeanZeroFilter(abc.ABC):
    """A filter ``psi`` with ``int psi = 0``, known through its transform.
    """

    dim: int

    @property
    @abc.abstractmethod
    def filter_id(self) -> str:
        """A provenance identifier (`str`)."""

    @abc.abstractmethod
    def symbol(self, axes) -> numpy.ndarray:
        """Evaluate ``psi_hat`` on a tensor grid of angular frequencies."""

    @property
    def mean(self) -> float:
        """``int psi = psi_hat(0)`` (`float`)."""
        return float(abs(self.symbol([numpy.zeros(1)] * self.dim).ravel()[0]))


@dataclasses.dataclass(frozen=True, kw_only=True)
class GaussianDerivative(MeanZeroFilter):
    """The partial derivative of a normal density along one axis."""

    dim: int
    axis: int = 0
    variance: float = 1.0

    @property
    def filter_id(self):
        return f"d{self.axis}-gaussian(var={self.variance:g})"

    def symbol(self, axes):
        mesh = numpy.meshgrid(*axes, indexing="ij")
        return 1j * mesh[self.axis] * numpy.exp(-0.5 * self.variance * sum(w**2 for w in mesh))


@dataclasses.dataclass(frozen=True, kw_only=True)
class PsiFilter(MeanZeroFilter):
    """The radial filter ``psi`` of a filter bank."""

    bank: FilterBank

    @property
    def dim(self):
        return self.bank.spec.dim

    @property
    def filter_id(self):
        return f"psi(delta_in={self.bank.delta_in:g};delta_out={self.bank.delta_out:g})"

    def symbol(self, axes):
        mesh = numpy.meshgrid(*axes, indexing="ij")
        return self.bank.psi_profile(numpy.sqrt(sum(w**2 for w in mesh))).astype(complex)
