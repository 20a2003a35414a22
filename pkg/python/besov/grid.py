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


__all__ = ["GridSpec", "GridFunction", "AnalyticKind", "parse_exponent", "dual_exponent",
           "lp_norm", "cell_mass", "convolve", "rescale_kernel", "sample_analytic",
           "SUPPORT_THRESHOLD",
           ]


import dataclasses
import enum
import functools
import logging
import math
import numbers

import numpy
import scipy.fft
import scipy.integrate
import scipy.interpolate

from .exception import ConfigError, GridMismatchError, ResolutionError


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)
_log_trace = logging.getLogger("TRACE1.lsst." + __name__)
_log_trace.setLevel(logging.CRITICAL)  # Turn off by default.


SUPPORT_THRESHOLD = 1e-12
"""Samples below this fraction of the peak do not count as support (`float`).
"""

_MIN_SUPPORT_POINTS = 4
_MASS_TOLERANCE = 1e-3
_GAUSSIAN_TRUNCATION = 8.0


def parse_exponent(p):
    """Convert an integrability exponent to a `float` in [1, inf].

    Parameters
    ----------
    p : `float` or `str`
        The exponent. The strings ``"inf"`` and ``"infinity"`` (any case)
        denote infinity.

    Returns
    -------
    p : `float`
        The exponent; infinity is exactly `math.inf`.

    Raises
    ------
    ValueError
        Raised if ``p`` is not a number in [1, inf].
    """
    if isinstance(p, str):
        if p.strip().lower() in {"inf", "infinity", "+inf"}:
            return math.inf
        try:
            p = float(p)
        except ValueError as e:
            raise ValueError(f"Not an exponent: {p!r}.") from e
    if not isinstance(p, numbers.Real) or math.isnan(p):
        raise ValueError(f"Not an exponent: {p!r}.")
    p = float(p)
    if p < 1.0:
        raise ValueError(f"Exponent must be at least 1, got {p}.")
    return p


def dual_exponent(p):
    """Return the Hölder conjugate p' with 1/p + 1/p' = 1.
    """
    p = parse_exponent(p)
    if p == 1.0:
        return math.inf
    elif math.isinf(p):
        return 1.0
    else:
        return p / (p - 1.0)


@dataclasses.dataclass(frozen=True, kw_only=True)
class GridSpec:
    """A uniform periodic grid on [-L, L)^n.

    Sample ``i`` along an axis sits at ``-L + i*h``, so the origin is sample
    ``N // 2``.

    Parameters
    ----------
    dim : `int`
        The dimension, 1 or 2.
    extent : `float`
        The half-width ``L`` of the domain.
    points_per_axis : `int`
        The number of samples ``N`` along each axis, a power of two, at
        least 16.

    Raises
    ------
    ConfigError
        Raised if any parameter is out of range.
    """

    dim: int
    extent: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"Only dimensions 1 and 2 are supported, got {self.dim}.")
        if not (isinstance(self.extent, numbers.Real) and math.isfinite(self.extent) and self.extent > 0):
            raise ConfigError(f"Extent must be positive and finite, got {self.extent}.")
        n = self.points_per_axis
        if not isinstance(n, numbers.Integral) or n < 16 or (n & (n - 1)) != 0:
            raise ConfigError(f"Points per axis must be a power of two >= 16, got {n}.")
        object.__setattr__(self, "extent", float(self.extent))
        object.__setattr__(self, "points_per_axis", int(n))

    @property
    def spacing(self) -> float:
        """The sample spacing ``h = 2L/N`` (`float`, read-only)."""
        return 2.0 * self.extent / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        """The volume ``h^n`` of one grid cell (`float`, read-only)."""
        return self.spacing ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        """The shape of a sample array (`tuple` [`int`], read-only)."""
        return (self.points_per_axis,) * self.dim

    @property
    def nyquist(self) -> float:
        """The largest representable angular frequency ``pi/h`` (`float`)."""
        return math.pi / self.spacing

    @property
    def origin_index(self) -> int:
        """The per-axis index of the sample at the origin (`int`)."""
        return self.points_per_axis // 2

    def axis(self) -> numpy.ndarray:
        """Return the sample coordinates along one axis."""
        return -self.extent + self.spacing * numpy.arange(self.points_per_axis)

    def coordinates(self) -> tuple[numpy.ndarray, ...]:
        """Return ij-indexed coordinate arrays, one per axis."""
        axis = self.axis()
        return tuple(numpy.meshgrid(*([axis] * self.dim), indexing="ij"))

    def radius(self) -> numpy.ndarray:
        """Return ``|x|`` at every sample."""
        return numpy.sqrt(sum(c**2 for c in self.coordinates()))

    def frequencies(self) -> tuple[numpy.ndarray, ...]:
        """Return ij-indexed angular frequency arrays in FFT order.
        """
        freqs = 2.0 * math.pi * scipy.fft.fftfreq(self.points_per_axis, d=self.spacing)
        return tuple(numpy.meshgrid(*([freqs] * self.dim), indexing="ij"))

    def frequency_radius(self) -> numpy.ndarray:
        """Return ``|xi|`` on the FFT grid."""
        return numpy.sqrt(sum(w**2 for w in self.frequencies()))

    def refined(self) -> "GridSpec":
        """Return the grid with twice as many points on the same domain."""
        return dataclasses.replace(self, points_per_axis=2 * self.points_per_axis)

    def describe(self) -> dict:
        """Return a JSON-friendly summary of this grid."""
        return {"dim": self.dim, "extent": self.extent, "points_per_axis": self.points_per_axis}


@dataclasses.dataclass(frozen=True, eq=False)
class GridFunction:
    """Finite real samples of a function on a `GridSpec`.

    The sample array is copied and write-protected on construction.

    Parameters
    ----------
    spec : `GridSpec`
        The grid the samples live on.
    values : array-like
        An array of shape ``spec.shape``.
    label : `str`, optional
        A provenance identifier.

    Raises
    ------
    ConfigError
        Raised if ``values`` has the wrong shape or non-finite entries.
    """

    spec: GridSpec
    values: numpy.ndarray
    label: str = ""

    def __post_init__(self):
        values = numpy.array(self.values, dtype=float, copy=True)
        if values.shape != self.spec.shape:
            raise ConfigError(f"Expected samples of shape {self.spec.shape}, got {values.shape}.")
        if not numpy.all(numpy.isfinite(values)):
            raise ConfigError("Grid function samples must be finite.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values, label=None) -> "GridFunction":
        """Return a function on the same grid with new samples."""
        return GridFunction(self.spec, values, self.label if label is None else label)

    def scaled(self, factor: float) -> "GridFunction":
        """Return ``factor`` times this function."""
        return self.with_values(factor * self.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return self.with_values(self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return self.with_values(self.values + other.values)


def _check_same_grid(f, g):
    if f.spec != g.spec:
        raise GridMismatchError(f"Operands live on different grids: {f.spec} vs {g.spec}.")


def lp_norm(f: GridFunction, p) -> float:
    """Compute the discrete Lp norm of a grid function.

    Parameters
    ----------
    f : `GridFunction`
        The function.
    p : `float` or `str`
        The exponent, in [1, inf].

    Returns
    -------
    norm : `float`
        ``(h^n sum |f_i|^p)^(1/p)``, or ``max |f_i|`` if ``p`` is infinite.

    Raises
    ------
    ValueError
        Raised if ``p < 1``.
    """
    p = parse_exponent(p)
    magnitude = numpy.abs(f.values)
    if math.isinf(p):
        return float(magnitude.max())
    peak = magnitude.max()
    if peak == 0.0:
        return 0.0
    # Scale by the peak to keep large p from overflowing.
    total = f.spec.cell_volume * numpy.sum((magnitude / peak) ** p)
    return float(peak * total ** (1.0 / p))


def cell_mass(f: GridFunction) -> float:
    """Return the discrete integral ``h^n sum f_i``."""
    return float(f.spec.cell_volume * numpy.sum(f.values))


def convolve(f: GridFunction, g: GridFunction, method: str = "fft") -> GridFunction:
    """Periodic convolution discretizing ``int f(x - y) g(y) dy``.

    Parameters
    ----------
    f, g : `GridFunction`
        The operands, on the same grid.
    method : {"fft", "direct"}
        The algorithm. "direct" is quadratic in the number of samples and
        exists as an oracle for small grids.

    Returns
    -------
    conv : `GridFunction`
        The convolution, with the origin at sample ``N // 2``.

    Raises
    ------
    GridMismatchError
        Raised if the operands live on different grids.
    ValueError
        Raised if ``method`` is unknown.
    """
    _check_same_grid(f, g)
    spec = f.spec
    match method:
        case "fft":
            values = _convolve_fft(f.values, g.values)
        case "direct":
            values = _convolve_direct(f.values, g.values)
        case _:
            raise ValueError(f"Unknown convolution method {method!r}.")
    return GridFunction(spec, spec.cell_volume * values, label=f"({f.label})*({g.label})")


def _convolve_fft(a, b):
    shape = a.shape
    circular = scipy.fft.irfftn(scipy.fft.rfftn(a) * scipy.fft.rfftn(b), s=shape)
    # Sample N/2 is the origin, so a circular result must be re-centered.
    return numpy.roll(circular, [n // 2 for n in shape], axis=tuple(range(a.ndim)))


def _convolve_direct(a, b):
    n = a.shape[0]
    i = numpy.arange(n)
    index = (i[:, None] - i[None, :] + n // 2) % n
    if a.ndim == 1:
        return a[index] @ b
    result = numpy.zeros_like(a)
    for k1 in range(n):
        rows = a[(i - k1 + n // 2) % n, :]
        # rows[:, index] has shape (N, N, N): [i1, i2, k2].
        result += numpy.einsum("abk,k->ab", rows[:, index], b[k1])
    return result


def rescale_kernel(rho: GridFunction, epsilon: float, interpolation: str = "cubic") -> GridFunction:
    """Compute samples of ``rho_eps(x) = eps^-n rho(x/eps)``.

    Parameters
    ----------
    rho : `GridFunction`
        The kernel samples.
    epsilon : `float`
        The scale, in (0, 1].
    interpolation : {"cubic", "nearest"}
        How to evaluate ``rho`` between samples. "cubic" evaluates a tensor
        cubic spline (zero outside the domain). "nearest" integrates the
        piecewise-constant interpolant exactly over each target cell; it
        conserves mass exactly and never smears a jump over more than one
        cell.

    Returns
    -------
    rescaled : `GridFunction`
        The rescaled kernel. ``rho`` itself if ``epsilon == 1``.

    Raises
    ------
    ValueError
        Raised if ``epsilon`` is outside (0, 1] or ``interpolation`` is
        unknown.
    ResolutionError
        Raised if fewer than 4 samples per axis carry the rescaled support,
        or if the discrete mass drifts by more than 1e-3 relative.
    """
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"Scale must lie in (0, 1], got {epsilon}.")
    if epsilon == 1.0:
        return rho
    spec = rho.spec
    match interpolation:
        case "cubic":
            values = _rescale_cubic(rho.values, spec, epsilon)
        case "nearest":
            values = _rescale_cell_average(rho.values, spec, epsilon)
        case _:
            raise ValueError(f"Unknown interpolation {interpolation!r}.")

    _check_support(values, epsilon)
    original = cell_mass(rho)
    rescaled = spec.cell_volume * values.sum()
    scale = max(abs(original), spec.cell_volume * numpy.abs(rho.values).sum())
    if abs(rescaled - original) > _MASS_TOLERANCE * scale:
        raise ResolutionError(f"Rescaling to eps={epsilon:g} changed the mass from {original:.6g} "
                              f"to {rescaled:.6g}; refine the grid.")
    _log_trace.debug("Rescaled %s to eps=%g (%s).", rho.label, epsilon, interpolation)
    return GridFunction(spec, values, label=f"{rho.label}@{epsilon:.6g}")


def _check_support(values, epsilon):
    peak = numpy.abs(values).max()
    if peak == 0.0:
        raise ResolutionError(f"Kernel vanishes on the grid at eps={epsilon:g}.")
    carrying = numpy.abs(values) > SUPPORT_THRESHOLD * peak
    for axis in range(values.ndim):
        others = tuple(a for a in range(values.ndim) if a != axis)
        count = int(numpy.count_nonzero(carrying.any(axis=others) if others else carrying))
        if count < _MIN_SUPPORT_POINTS:
            raise ResolutionError(f"Only {count} samples carry the kernel at eps={epsilon:g} along axis "
                                  f"{axis}; need at least {_MIN_SUPPORT_POINTS}.")


def _rescale_cubic(values, spec, epsilon):
    axis = spec.axis()
    targets = axis / epsilon
    outside = (targets < axis[0]) | (targets > axis[-1])
    result = values
    for dim in range(values.ndim):
        spline = scipy.interpolate.CubicSpline(axis, result, axis=dim, extrapolate=False)
        result = spline(targets)
        result = numpy.nan_to_num(result, nan=0.0)
        index = [slice(None)] * values.ndim
        index[dim] = outside
        result[tuple(index)] = 0.0
    return result * epsilon ** (-values.ndim)


def _rescale_cell_average(values, spec, epsilon):
    h = spec.spacing
    edges = numpy.append(spec.axis() - 0.5 * h, spec.axis()[-1] + 0.5 * h)
    lower = (spec.axis() - 0.5 * h) / epsilon
    upper = (spec.axis() + 0.5 * h) / epsilon
    result = values
    for dim in range(values.ndim):
        # Cumulative integral of the piecewise-constant interpolant at the edges.
        cumulative = numpy.concatenate(
            [numpy.zeros_like(numpy.take(result, [0], axis=dim)), h * numpy.cumsum(result, axis=dim)],
            axis=dim)
        result = (_piecewise_linear(cumulative, edges, upper, dim)
                  - _piecewise_linear(cumulative, edges, lower, dim)) / h
    return result


def _piecewise_linear(table, edges, points, axis):
    """Evaluate a piecewise linear function tabulated at uniform ``edges``
    along ``axis`` of ``table``, clamping outside the table.
    """
    step = edges[1] - edges[0]
    position = numpy.clip((points - edges[0]) / step, 0.0, len(edges) - 1)
    index = numpy.minimum(numpy.floor(position).astype(int), len(edges) - 2)
    fraction = position - index
    shape = [1] * table.ndim
    shape[axis] = len(points)
    fraction = fraction.reshape(shape)
    return (numpy.take(table, index, axis=axis) * (1.0 - fraction)
            + numpy.take(table, index + 1, axis=axis) * fraction)


class AnalyticKind(enum.Enum):
    """The analytic kernel families that can be sampled on a grid."""

    GAUSSIAN = "gaussian"
    CUBE = "cube"
    BUMP = "bump"


@functools.lru_cache
def bump_normalization(dim: int) -> float:
    """Return the integral of ``exp(-1/(1-|x|^2))`` over the unit ball."""
    profile = lambda t: math.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1.0 else 0.0  # noqa: E731
    if dim == 1:
        value, _ = scipy.integrate.quad(profile, -1.0, 1.0, epsabs=1e-15, epsrel=1e-14)
    else:
        value, _ = scipy.integrate.quad(lambda t: 2.0 * math.pi * t * profile(t), 0.0, 1.0,
                                        epsabs=1e-15, epsrel=1e-14)
    return value


def _as_vector(value, dim, name):
    array = numpy.broadcast_to(numpy.asarray(value, dtype=float), (dim,)).copy()
    if not numpy.all(numpy.isfinite(array)):
        raise ConfigError(f"Parameter {name} must be finite, got {value}.")
    return array


def sample_analytic(kind, params, spec: GridSpec, scale: float = 1.0) -> GridFunction:
    """Sample a unit-mass analytic kernel, optionally at scale ``eps``.

    Parameters
    ----------
    kind : `AnalyticKind` or `str`
        The kernel family.
    params : mapping [`str`]
        For GAUSSIAN: ``variance`` and optional ``center``. For CUBE: ``lo``
        and ``hi`` (scalars or per-axis sequences). For BUMP: ``radius`` and
        optional ``center``.
    spec : `GridSpec`
        The grid to sample on.
    scale : `float`, optional
        Sample ``eps^-n rho(x/eps)`` instead of ``rho``.

    Returns
    -------
    kernel : `GridFunction`
        The samples. Cube edge cells are weighted by their exact coverage
        fraction; Gaussians are truncated at 8 standard deviations.

    Raises
    ------
    ConfigError
        Raised if ``kind`` is unknown, a parameter is invalid, or the support
        does not fit inside the domain.
    """
    try:
        kind = AnalyticKind(kind) if not isinstance(kind, AnalyticKind) else kind
    except ValueError as e:
        raise ConfigError(f"Unknown analytic kernel kind {kind!r}.") from e
    if not scale > 0.0:
        raise ValueError(f"Scale must be positive, got {scale}.")
    dim = spec.dim
    lo_domain, hi_domain = -spec.extent, spec.extent - spec.spacing

    match kind:
        case AnalyticKind.GAUSSIAN:
            variance = float(params["variance"])
            if variance <= 0:
                raise ConfigError(f"Variance must be positive, got {variance}.")
            sigma = scale * math.sqrt(variance)
            center = scale * _as_vector(params.get("center", 0.0), dim, "center")
            _check_inside(center - _GAUSSIAN_TRUNCATION * sigma, center + _GAUSSIAN_TRUNCATION * sigma,
                          lo_domain, hi_domain)
            offsets = [c - x0 for c, x0 in zip(spec.coordinates(), center)]
            r2 = sum(o**2 for o in offsets)
            values = numpy.exp(-0.5 * r2 / sigma**2) / (2.0 * math.pi * sigma**2) ** (dim / 2.0)
            values[r2 > (_GAUSSIAN_TRUNCATION * sigma) ** 2] = 0.0
        case AnalyticKind.CUBE:
            lo = scale * _as_vector(params["lo"], dim, "lo")
            hi = scale * _as_vector(params["hi"], dim, "hi")
            if numpy.any(hi <= lo):
                raise ConfigError(f"Cube needs lo < hi, got lo={lo}, hi={hi}.")
            _check_inside(lo, hi, lo_domain - 0.5 * spec.spacing, spec.extent - 0.5 * spec.spacing)
            factors = [_coverage(spec, a, b) / (b - a) for a, b in zip(lo, hi)]
            values = functools.reduce(numpy.multiply.outer, factors)
        case AnalyticKind.BUMP:
            radius = scale * float(params["radius"])
            if radius <= 0:
                raise ConfigError(f"Radius must be positive, got {radius}.")
            center = scale * _as_vector(params.get("center", 0.0), dim, "center")
            _check_inside(center - radius, center + radius, lo_domain, hi_domain)
            r2 = sum((c - x0) ** 2 for c, x0 in zip(spec.coordinates(), center)) / radius**2
            values = numpy.zeros(spec.shape)
            inside = r2 < 1.0
            values[inside] = numpy.exp(-1.0 / (1.0 - r2[inside]))
            values /= bump_normalization(dim) * radius**dim
    label = f"{kind.value}@{scale:.6g}" if scale != 1.0 else kind.value
    return GridFunction(spec, values, label=label)


def _check_inside(lo, hi, lo_domain, hi_domain):
    if numpy.any(lo < lo_domain) or numpy.any(hi > hi_domain):
        raise ConfigError(f"Kernel support [{lo}, {hi}] does not fit in the domain "
                          f"[{lo_domain}, {hi_domain}].")


def _coverage(spec, lo, hi):
    """Return the fraction of each cell ``[x_i - h/2, x_i + h/2]`` that lies
    in ``[lo, hi]``.
    """
    h = spec.spacing
    left = spec.axis() - 0.5 * h
    overlap = numpy.clip(numpy.minimum(left + h, hi) - numpy.maximum(left, lo), 0.0, None)
    return overlap / h
