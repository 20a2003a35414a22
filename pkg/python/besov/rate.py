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


__all__ = ["EpsilonGrid", "RateProfile", "FunctionalValue", "EtaTestReport", "DecayFit",
           "KeylemReport", "DEVIATION_FLOOR",
           "mollifier_residual", "rate_profile", "mollifier_functional", "eta_test", "decay_exponent",
           "keylem_diagnostic", "uniform_keylem",
           ]


import dataclasses
import functools
import logging
import math

import astropy.table
import numpy
import scipy.fft
import scipy.stats

from .caching import EvaluationCache, EvaluationKey
from .exception import ConfigError, RegressionError
from .grid import GridFunction, GridSpec, cell_mass, convolve, lp_norm, parse_exponent, rescale_kernel
from .kernels import MollifierSpec
from .littlewood_paley import BesovParams, MeanZeroFilter


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)
_log_trace = logging.getLogger("TRACE1.lsst." + __name__)
_log_trace.setLevel(logging.CRITICAL)  # Turn off by default.


DEVIATION_FLOOR = 1e-13
"""Deviations below this value are roundoff, and count as zero (`float`).
"""

_MIN_FIT_POINTS = 5
_MEAN_ZERO_TOLERANCE = 1e-10


@dataclasses.dataclass(frozen=True, kw_only=True)
class EpsilonGrid:
    """Geometric sampling of ``eps`` in (0, 1], ``m`` points per dyadic
    block ``[2^(-j-1), 2^-j]``.

    Parameters
    ----------
    j_max : `int`
        The number of blocks, at least 3.
    samples_per_block : `int`
        The number ``m`` of points per block, at least 1.
    """

    j_max: int = 8
    samples_per_block: int = 4

    def __post_init__(self):
        if self.j_max < 3:
            raise ConfigError(f"An epsilon grid needs at least 3 blocks, got {self.j_max}.")
        if self.samples_per_block < 1:
            raise ConfigError(f"Need at least one sample per block, got {self.samples_per_block}.")

    @property
    def smallest(self) -> float:
        return 2.0 ** -self.j_max

    def sample_points(self) -> numpy.ndarray:
        """Return ``2^(-j - i/m)`` for every block and ``2^-j_max``,
        strictly decreasing from 1.
        """
        m = self.samples_per_block
        exponents = numpy.arange(self.j_max * m + 1) / m
        return 2.0 ** -exponents

    def block_nodes(self, j: int) -> numpy.ndarray:
        """Return the log-midpoints ``2^(-j - (i + 1/2)/m)`` of block ``j``.
        """
        m = self.samples_per_block
        return 2.0 ** -(j + (numpy.arange(m) + 0.5) / m)

    def nodes(self) -> numpy.ndarray:
        """Return the log-midpoints of all blocks, decreasing."""
        return numpy.concatenate([self.block_nodes(j) for j in range(self.j_max)])

    def refined(self) -> "EpsilonGrid":
        """Return the grid with twice as many samples per block."""
        return dataclasses.replace(self, samples_per_block=2 * self.samples_per_block)


def _from_spectrum(spectrum, spec):
    """Sample a function on the grid from its Fourier transform on the FFT
    frequencies.
    """
    # x_0 = -L, so each mode carries a phase of (-1)^k.
    signs = [(-1.0) ** numpy.rint(scipy.fft.fftfreq(spec.points_per_axis) * spec.points_per_axis)
             for _ in range(spec.dim)]
    phase = functools.reduce(numpy.multiply.outer, signs)
    return scipy.fft.ifftn(spectrum * phase).real / spec.cell_volume


def _frequency_axes(spec):
    freqs = 2.0 * math.pi * scipy.fft.fftfreq(spec.points_per_axis, d=spec.spacing)
    return [freqs] * spec.dim


class _Residuals:
    """Evaluates ``||f - f*rho_eps||_p`` for one function and kernel,
    reusing the function's spectrum.
    """

    def __init__(self, f, rho, p, *, dilation=1.0, cache=None, interpolation="cubic"):
        if rho.dim != f.spec.dim:
            raise ConfigError(f"Kernel {rho.kernel_id} has dimension {rho.dim}, function has "
                              f"{f.spec.dim}.")
        self.f = f
        self.rho = rho
        self.p = parse_exponent(p)
        self.dilation = dilation
        self.cache = cache
        self.interpolation = interpolation
        if rho.is_analytic:
            self._spectrum = scipy.fft.fftn(f.values)
            self._axes = _frequency_axes(f.spec)
        elif dilation != 1.0:
            raise ValueError("Dilations are only supported for analytic kernels.")

    def residual(self, epsilon: float) -> GridFunction:
        if self.rho.is_analytic:
            scale = epsilon * self.dilation
            multiplier = self.rho.deficit([scale * a for a in self._axes])
            return self.f.with_values(scipy.fft.ifftn(self._spectrum * multiplier).real)
        rho_eps = rescale_kernel(self.rho.function, epsilon, self.interpolation)
        return self.f - convolve(self.f, rho_eps)

    def norm(self, epsilon: float) -> float:
        compute = lambda: lp_norm(self.residual(epsilon), self.p)  # noqa: E731
        if self.cache is None or not self.f.label:
            return compute()
        key = EvaluationKey(self.f.label, self.rho.kernel_id, self.p, float(epsilon), self.dilation)
        return self.cache.get_or_compute(key, compute)


def mollifier_residual(f: GridFunction, rho: MollifierSpec, epsilon: float) -> GridFunction:
    """Compute ``f - f*rho_eps``.

    Analytic kernels act as the exact multiplier ``rho_hat(eps xi)``, so any
    ``eps > 0`` is allowed. Sampled kernels are dilated on the grid and are
    subject to `besov.grid.rescale_kernel`'s resolution limits.

    Parameters
    ----------
    f : `GridFunction`
        The function.
    rho : `MollifierSpec`
        The kernel.
    epsilon : `float`
        The scale.

    Returns
    -------
    residual : `GridFunction`
        The residual.

    Raises
    ------
    ResolutionError
        Raised if a sampled kernel cannot be represented at ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError(f"Scale must be positive, got {epsilon}.")
    return _Residuals(f, rho, 1.0).residual(epsilon)


@dataclasses.dataclass(frozen=True, kw_only=True)
class RateProfile:
    """Residual norms ``||f - f*rho_eps||_p`` at decreasing ``eps``."""

    epsilons: tuple[float, ...]
    deviations: tuple[float, ...]
    p: float
    kernel_id: str = ""
    function_id: str = ""

    def __post_init__(self):
        eps = numpy.asarray(self.epsilons, dtype=float)
        dev = numpy.asarray(self.deviations, dtype=float)
        if eps.shape != dev.shape or eps.ndim != 1:
            raise ConfigError("A rate profile needs one deviation per epsilon.")
        if numpy.any(numpy.diff(eps) >= 0):
            raise ConfigError("Profile epsilons must be strictly decreasing.")
        if numpy.any(eps <= 0) or numpy.any(dev < 0) or not numpy.all(numpy.isfinite(dev)):
            raise ConfigError("Profile epsilons must be positive and deviations finite and nonnegative.")
        object.__setattr__(self, "epsilons", tuple(float(e) for e in eps))
        object.__setattr__(self, "deviations", tuple(float(d) for d in dev))

    def to_table(self) -> astropy.table.Table:
        """Return the profile as a two-column table for CSV export."""
        table = astropy.table.Table([self.epsilons, self.deviations], names=("epsilon", "deviation"),
                                    meta={"p": self.p, "kernel_id": self.kernel_id,
                                          "function_id": self.function_id})
        for column in table.columns.values():
            column.format = ".17g"
        return table

    @classmethod
    def from_table(cls, table: astropy.table.Table, p=2.0, kernel_id="", function_id="") -> "RateProfile":
        """Rebuild a profile from a table with ``epsilon`` and ``deviation``
        columns.
        """
        try:
            eps, dev = table["epsilon"], table["deviation"]
        except KeyError as e:
            raise ConfigError(f"A profile table needs 'epsilon' and 'deviation' columns: {e}") from e
        return cls(epsilons=tuple(eps), deviations=tuple(dev), p=parse_exponent(p),
                   kernel_id=kernel_id, function_id=function_id)


def rate_profile(f: GridFunction, rho: MollifierSpec, p, grid: EpsilonGrid, *,
                 cache: EvaluationCache | None = None) -> RateProfile:
    """Compute ``||f - f*rho_eps||_p`` at every sample point of a grid.

    Parameters
    ----------
    f : `GridFunction`
        The function.
    rho : `MollifierSpec`
        The kernel.
    p : `float` or `str`
        The exponent.
    grid : `EpsilonGrid`
        The sample points.
    cache : `besov.caching.EvaluationCache`, optional
        A cache shared with other computations on the same function.

    Returns
    -------
    profile : `RateProfile`
        The residual norms, all computed the same way.

    Raises
    ------
    ResolutionError
        Raised if a sampled kernel cannot be represented at the smallest
        ``eps``.
    """
    residuals = _Residuals(f, rho, p, cache=cache)
    epsilons = grid.sample_points()
    deviations = [residuals.norm(e) for e in epsilons]
    return RateProfile(epsilons=tuple(epsilons), deviations=tuple(deviations), p=residuals.p,
                       kernel_id=rho.kernel_id, function_id=f.label)


@dataclasses.dataclass(frozen=True, kw_only=True)
class FunctionalValue:
    """The rate functional ``int_0^1 eps^(-sq-1) ||f - f*rho_eps||_p^q deps``
    (``sup_eps eps^-s ||f - f*rho_eps||_p`` for ``q = inf``).
    """

    value: float
    block_terms: tuple[float, ...]
    tail_share: float
    form: str

    def to_json(self) -> dict:
        return {"value": self.value, "tail_share": self.tail_share, "form": self.form,
                "blocks": len(self.block_terms)}


def _floor(values):
    values = numpy.asarray(values, dtype=float)
    return numpy.where(values < DEVIATION_FLOOR, 0.0, values)


def _power_law_cell(log_width, beta):
    """Return ``int eps^(beta-1) deps / eps_c^beta`` over a cell of log-width
    ``log_width`` centered (geometrically) at ``eps_c``.
    """
    half = 0.5 * beta * log_width
    with numpy.errstate(invalid="ignore", divide="ignore"):
        exact = 2.0 * numpy.sinh(half) / beta
    return numpy.where(numpy.abs(half) < 1e-8, log_width, exact)


def _local_slopes(nodes, deviations):
    """Log-log slopes of the deviations at each node, 0 where undefined."""
    log_eps = numpy.log(nodes)
    with numpy.errstate(divide="ignore"):
        log_dev = numpy.log(deviations)
    valid = numpy.isfinite(log_dev)
    if valid.sum() < 2:
        return numpy.zeros_like(nodes)
    slopes = numpy.zeros_like(nodes)
    for i in range(len(nodes)):
        lo, hi = max(i - 1, 0), min(i + 1, len(nodes) - 1)
        if valid[lo] and valid[hi] and lo != hi:
            slopes[i] = (log_dev[hi] - log_dev[lo]) / (log_eps[hi] - log_eps[lo])
    return slopes


def _block_shares(blocks, q):
    blocks = numpy.asarray(blocks, dtype=float)
    total = blocks.max() if math.isinf(q) else blocks.sum()
    share = float(blocks[-1] / total) if total > 0 else 0.0
    return float(total), share


def mollifier_functional(f: GridFunction, rho: MollifierSpec, params: BesovParams, grid: EpsilonGrid,
                         form: str = "geometric", *, cache: EvaluationCache | None = None,
                         dilation: float = 1.0) -> FunctionalValue:
    """Approximate ``int_0^1 eps^(-sq-1) ||f - f*rho_eps||_p^q deps``.

    Parameters
    ----------
    f : `GridFunction`
        The function.
    rho : `MollifierSpec`
        The kernel.
    params : `BesovParams`
        The indices. For ``q = inf`` the functional is
        ``sup_eps eps^-s ||f - f*rho_eps||_p`` over the nodes.
    grid : `EpsilonGrid`
        The dyadic blocks.
    form : {"geometric", "dyadic"}
        "geometric" uses ``m`` log-midpoint nodes per block, integrating the
        weight exactly against a local power-law fit of the deviation.
        "dyadic" uses the block-sum identity
        ``sum_j 2^(sjq) int_{1/2}^1 D(2^-j t)^q t^(-sq-1) dt`` with
        ``m``-point Gauss-Legendre quadrature in ``t``.
    cache : `besov.caching.EvaluationCache`, optional
        A cache of residual norms.
    dilation : `float`, optional
        Evaluate the functional of the dilated kernel ``rho_delta``.

    Returns
    -------
    functional : `FunctionalValue`
        The value, per-block contributions and the last block's share.
    """
    residuals = _Residuals(f, rho, params.p, cache=cache, dilation=dilation)
    s, q, m = params.s, params.q, grid.samples_per_block
    match form:
        case "geometric":
            nodes = grid.nodes()
            deviations = _floor([residuals.norm(e) for e in nodes])
            if math.isinf(q):
                weighted = nodes ** -s * deviations
                blocks = weighted.reshape(grid.j_max, m).max(axis=1)
            else:
                slopes = _local_slopes(nodes, deviations)
                cells = _power_law_cell(math.log(2.0) / m, q * (slopes - s))
                terms = deviations**q * nodes ** (-s * q) * cells
                blocks = terms.reshape(grid.j_max, m).sum(axis=1)
        case "dyadic":
            t, w = numpy.polynomial.legendre.leggauss(m)
            t, w = 0.75 + 0.25 * t, 0.25 * w
            blocks = []
            for j in range(grid.j_max):
                deviations = _floor([residuals.norm(2.0 ** -j * x) for x in t])
                if math.isinf(q):
                    blocks.append(float(numpy.max((2.0 ** -j * t) ** -s * deviations)))
                else:
                    weighted = numpy.sum(w * deviations**q * t ** (-s * q - 1))
                    blocks.append(2.0 ** (s * j * q) * float(weighted))
        case _:
            raise ValueError(f"Unknown functional form {form!r}.")
    value, share = _block_shares(blocks, q)
    _log_trace.debug("Functional of %s with %s: %g (tail share %.3g).", f.label, rho.kernel_id, value, share)
    return FunctionalValue(value=value, block_terms=tuple(float(b) for b in blocks), tail_share=share,
                           form=form)


@dataclasses.dataclass(frozen=True, kw_only=True)
class EtaTestReport:
    """Partial sums ``S_eps(J) = sum_{j<=J} 2^(sj) ||eta - eta*rho_{2^-j eps}||_1``.

    ``block_terms[i][j]`` is the ``j``-th summand at ``epsilons[i]`` and
    ``partial_sums[i][J]`` the running sum through ``J``. Deviations below
    `DEVIATION_FLOOR` are zeroed; ``resolved_levels[i]`` counts the levels
    before the first such deviation, and only those enter the verdict.
    """

    s: float
    kernel_id: str
    epsilons: tuple[float, ...]
    block_terms: tuple[tuple[float, ...], ...]
    resolved_levels: tuple[int, ...]
    tail_share_limit: float

    @property
    def partial_sums(self) -> tuple[tuple[float, ...], ...]:
        return tuple(tuple(numpy.cumsum(terms)) for terms in self.block_terms)

    @property
    def tail_shares(self) -> tuple[float, ...]:
        """The last resolved block's share of the resolved sum at each ``eps``."""
        shares = []
        for terms, resolved in zip(self.block_terms, self.resolved_levels):
            total = sum(terms[:resolved])
            shares.append(float(terms[resolved - 1] / total) if resolved > 0 and total > 0 else 0.0)
        return tuple(shares)

    @property
    def resolution_limited(self) -> bool:
        """Whether the floor cut the levels short at any ``eps``."""
        return any(resolved < len(terms) for terms, resolved in zip(self.block_terms, self.resolved_levels))

    @property
    def converged(self) -> bool:
        """Whether the last block is below the share limit at every ``eps``.
        """
        return all(share < self.tail_share_limit for share in self.tail_shares)

    def block_averages(self) -> numpy.ndarray:
        """Return the summands averaged over ``eps``, one per level."""
        return numpy.mean(numpy.asarray(self.block_terms), axis=0)

    def to_json(self) -> dict:
        return {"s": self.s, "kernel_id": self.kernel_id, "epsilons": list(self.epsilons),
                "partial_sums": [list(sums) for sums in self.partial_sums],
                "tail_shares": list(self.tail_shares), "resolved_levels": list(self.resolved_levels),
                "converged": self.converged}


def eta_test(rho: MollifierSpec, eta: GridFunction, s: float, levels: int = 16, samples: int = 4,
             tail_share: float = 0.01) -> EtaTestReport:
    """Test the summability of ``2^(sj) ||eta - eta*rho_{2^-j eps}||_1``.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    eta : `GridFunction`
        The test function; its discrete integral must not vanish.
    s : `float`
        The smoothness, positive.
    levels : `int`, optional
        The last level ``J``.
    samples : `int`, optional
        The number ``m`` of ``eps`` values ``2^(-i/m)`` in (1/2, 1].
    tail_share : `float`, optional
        The sums count as converged if the last block is below this share at
        every ``eps``.

    Returns
    -------
    report : `EtaTestReport`
        The summands and the convergence verdict.

    Raises
    ------
    ValueError
        Raised if ``eta`` has zero discrete integral.
    """
    if not s > 0:
        raise ValueError(f"Smoothness must be positive, got {s}.")
    if abs(cell_mass(eta)) < _MEAN_ZERO_TOLERANCE:
        raise ValueError("The test function must have a nonzero integral.")
    residuals = _Residuals(eta, rho, 1.0)
    epsilons = 2.0 ** -(numpy.arange(samples) / samples)
    block_terms = []
    resolved_levels = []
    for epsilon in epsilons:
        deviations = _floor([residuals.norm(2.0 ** -j * epsilon) for j in range(levels + 1)])
        unresolved = numpy.flatnonzero(deviations == 0.0)
        resolved_levels.append(int(unresolved[0]) if unresolved.size else levels + 1)
        block_terms.append(tuple(float(d) for d in 2.0 ** (s * numpy.arange(levels + 1)) * deviations))
    report = EtaTestReport(s=s, kernel_id=rho.kernel_id, epsilons=tuple(float(e) for e in epsilons),
                           block_terms=tuple(block_terms), resolved_levels=tuple(resolved_levels),
                           tail_share_limit=tail_share)
    if report.resolution_limited:
        _log.info("Eta test of %s at s=%g judged on the first %d of %d levels; finer ones are below %g.",
                  rho.kernel_id, s, min(resolved_levels), levels + 1, DEVIATION_FLOOR)
    _log.debug("Eta test of %s at s=%g: converged=%s.", rho.kernel_id, s, report.converged)
    return report


@dataclasses.dataclass(frozen=True, kw_only=True)
class DecayFit:
    """A least-squares fit of ``log deviation`` against ``log eps``."""

    slope: float
    intercept: float
    r_squared: float
    points: int

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def decay_exponent(profile: RateProfile, fit_range=(2.0**-7, 2.0**-2)) -> DecayFit:
    """Estimate the decay rate of a profile.

    Parameters
    ----------
    profile : `RateProfile`
        The profile.
    fit_range : `tuple` [`float`, `float`], optional
        The inclusive range of ``eps`` to fit.

    Returns
    -------
    fit : `DecayFit`
        The slope (the empirical rate), intercept and ``r^2``.

    Raises
    ------
    RegressionError
        Raised if fewer than 5 points in range lie above `DEVIATION_FLOOR`.
    """
    lo, hi = sorted(fit_range)
    eps = numpy.asarray(profile.epsilons)
    dev = numpy.asarray(profile.deviations)
    usable = (eps >= lo) & (eps <= hi) & (dev > DEVIATION_FLOOR)
    if usable.sum() < _MIN_FIT_POINTS:
        raise RegressionError(f"Only {usable.sum()} points of {profile.function_id or 'the profile'} lie in "
                              f"[{lo:g}, {hi:g}] above the floor; need {_MIN_FIT_POINTS}.")
    result = scipy.stats.linregress(numpy.log(eps[usable]), numpy.log(dev[usable]))
    return DecayFit(slope=float(result.slope), intercept=float(result.intercept),
                    r_squared=float(result.rvalue**2), points=int(usable.sum()))


@dataclasses.dataclass(frozen=True, kw_only=True)
class KeylemReport:
    """The norms ``||rho * psi_eps||_1`` along decreasing ``eps``."""

    kernel_id: str
    filter_id: str
    epsilons: tuple[float, ...]
    values: tuple[float, ...]

    @property
    def decrease_fraction(self) -> float:
        """The fraction of consecutive steps where the norm decreases."""
        values = numpy.asarray(self.values)
        if len(values) < 2:
            return 0.0
        return float(numpy.mean(numpy.diff(values) < 0))

    def to_json(self) -> dict:
        return {"kernel_id": self.kernel_id, "filter_id": self.filter_id,
                "epsilons": list(self.epsilons), "values": list(self.values),
                "decrease_fraction": self.decrease_fraction}


def _kernel_spectrum(rho, spec, dilation=1.0):
    if rho.is_analytic:
        return rho.symbol([dilation * a for a in _frequency_axes(spec)])
    if dilation != 1.0:
        raise ValueError("Dilations are only supported for analytic kernels.")
    signs = [(-1.0) ** numpy.rint(scipy.fft.fftfreq(spec.points_per_axis) * spec.points_per_axis)
             for _ in range(spec.dim)]
    phase = functools.reduce(numpy.multiply.outer, signs)
    return spec.cell_volume * phase * scipy.fft.fftn(rho.sample(spec).values)


def _keylem_values(rho, psi, grid, spec, dilation=1.0):
    epsilons = grid.sample_points()
    if isinstance(psi, GridFunction):
        spec = psi.spec
        if abs(cell_mass(psi)) >= _MEAN_ZERO_TOLERANCE:
            raise ValueError(f"The filter must have zero integral, got {cell_mass(psi):.3g}.")
        if not numpy.any(psi.values):
            return epsilons, numpy.zeros_like(epsilons), "zero"
        if dilation != 1.0:
            raise ValueError("Dilations need an analytic filter.")
        kernel = rho.sample(spec)
        values = [lp_norm(convolve(kernel, rescale_kernel(psi, e)), 1) for e in epsilons]
        return epsilons, numpy.asarray(values), psi.label or "sampled"
    if not isinstance(psi, MeanZeroFilter):
        raise TypeError(f"Expected a GridFunction or a MeanZeroFilter, got {psi!r}.")
    if spec is None:
        raise ValueError("An analytic filter needs a grid to be evaluated on.")
    if abs(psi.mean) >= _MEAN_ZERO_TOLERANCE:
        raise ValueError(f"The filter must have zero integral, got {psi.mean:.3g}.")
    axes = _frequency_axes(spec)
    rho_hat = _kernel_spectrum(rho, spec, dilation)
    spectra = (rho_hat * psi.symbol([e * a for a in axes]) for e in epsilons)
    values = [lp_norm(GridFunction(spec, _from_spectrum(spectrum, spec)), 1) for spectrum in spectra]
    return epsilons, numpy.asarray(values), psi.filter_id


def keylem_diagnostic(rho: MollifierSpec, psi, grid: EpsilonGrid,
                      spec: GridSpec | None = None) -> KeylemReport:
    """Track ``||rho * psi_eps||_1`` as ``eps`` decreases.

    For any integrable ``rho`` and integrable ``psi`` with zero integral, the
    norm tends to 0.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    psi : `GridFunction` or `besov.littlewood_paley.MeanZeroFilter`
        The filter. Grid samples are dilated on their own grid; analytic
        filters are evaluated spectrally on ``spec``.
    grid : `EpsilonGrid`
        The scales.
    spec : `GridSpec`, optional
        The grid for analytic filters.

    Returns
    -------
    report : `KeylemReport`
        The norms and the fraction of consecutive decreases.

    Raises
    ------
    ValueError
        Raised if ``psi`` has a nonzero integral.
    ResolutionError
        Raised if grid samples of ``psi`` cannot be dilated far enough.
    """
    epsilons, values, filter_id = _keylem_values(rho, psi, grid, spec)
    return KeylemReport(kernel_id=rho.kernel_id, filter_id=filter_id,
                        epsilons=tuple(float(e) for e in epsilons), values=tuple(float(v) for v in values))


def uniform_keylem(rho: MollifierSpec, psi: MeanZeroFilter, grid: EpsilonGrid, spec: GridSpec,
                   dilations=(0.5, 0.625, 0.75, 0.875, 1.0)) -> KeylemReport:
    """Track ``sup_delta ||rho_delta * psi_eps||_1`` over dilations
    ``delta`` in [1/2, 1].

    Parameters are as for `keylem_diagnostic`; ``rho`` must be analytic.
    """
    if not rho.is_analytic:
        raise ValueError("Uniform diagnostics need an analytic kernel.")
    rows = [_keylem_values(rho, psi, grid, spec, dilation)[1] for dilation in dilations]
    values = numpy.max(numpy.asarray(rows), axis=0)
    return KeylemReport(kernel_id=f"{rho.kernel_id}[delta in {min(dilations):g}..{max(dilations):g}]",
                        filter_id=psi.filter_id, epsilons=tuple(float(e) for e in grid.sample_points()),
                        values=tuple(float(v) for v in values))
