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


__all__ = ["MollifierSpec", "GaussianKernel", "CubeKernel", "BumpKernel", "MixtureKernel",
           "SampledKernel", "MomentOrder", "MomentTensor", "MomentReport", "AdmissibilityVerdict",
           "MASS_TOLERANCE", "K_MAX",
           "moment_tensor", "smallest_nonzero_moment", "fractional_moment", "moment_report",
           "classify_admissibility", "engineered_mixture", "necessity_lower_bound", "load_kernel",
           ]


import abc
import collections.abc
import dataclasses
import enum
import functools
import itertools
import logging
import math
import os

import numpy
import scipy.special

from .exception import BesovError, ConfigError, GridMismatchError, KernelHypothesisError
from .grid import AnalyticKind, GridFunction, GridSpec, SUPPORT_THRESHOLD, bump_normalization, \
    cell_mass, sample_analytic


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)


MASS_TOLERANCE = 1e-10
"""Allowed deviation of a kernel's mass from 1 (`float`).
"""

K_MAX = 6
"""The largest moment order that is ever computed (`int`).
"""


def _axes_mesh(axes):
    return numpy.meshgrid(*axes, indexing="ij")


def _one_minus_sinc(x):
    """Compute ``1 - sin(x)/x`` without cancellation near zero."""
    x = numpy.asarray(x, dtype=float)
    x2 = x * x
    with numpy.errstate(invalid="ignore", divide="ignore"):
        direct = 1.0 - numpy.sin(x) / x
    series = x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    return numpy.where(numpy.abs(x) < 0.1, series, direct)


def _one_minus_phase(a):
    """Compute ``1 - exp(-i a)`` without cancellation near zero."""
    return 2.0 * numpy.sin(0.5 * a) ** 2 + 1j * numpy.sin(a)


def _vector(value, dim, name):
    if isinstance(value, collections.abc.Sequence) and not isinstance(value, str):
        if len(value) != dim:
            raise ConfigError(f"{name} needs {dim} entries, got {value}.")
        vector = tuple(float(v) for v in value)
    else:
        try:
            vector = (float(value),) * dim
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name} must be a number or a list of numbers, got {value!r}.") from e
    if not all(math.isfinite(v) for v in vector):
        raise ConfigError(f"{name} must be finite, got {value}.")
    return vector


class MomentOrder(enum.Enum):
    """Markers for moment orders that are not integers."""

    INFINITE = "infinity"
    """No nonzero moment exists up to the computed order."""

    def __float__(self):
        return math.inf


@dataclasses.dataclass(frozen=True, kw_only=True)
class MollifierSpec(abc.ABC):
    """An integrable kernel with unit mass.

    Analytic kernels expose their Fourier transform
    ``rho_hat(w) = int rho(y) exp(-i w.y) dy`` through `symbol` and the
    accurately computed ``1 - rho_hat`` through `deficit`, so that a dilated
    kernel can act on grid data as an exact multiplier at any scale.

    Parameters
    ----------
    dim : `int`
        The dimension, 1 or 2.
    name : `str`, optional
        An identifier overriding the generated `kernel_id`.
    """

    dim: int
    name: str = ""

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"Only dimensions 1 and 2 are supported, got {self.dim}.")

    @property
    @abc.abstractmethod
    def kind(self) -> str:
        """The descriptor kind of this kernel (`str`, read-only)."""

    @property
    def kernel_id(self) -> str:
        """A provenance identifier (`str`, read-only)."""
        return self.name or self._default_id()

    @abc.abstractmethod
    def _default_id(self) -> str:
        """Generate an identifier from the kernel's parameters."""

    @property
    def is_analytic(self) -> bool:
        """Whether `symbol` and `deficit` are available (`bool`)."""
        return True

    @property
    @abc.abstractmethod
    def is_nonnegative(self) -> bool:
        """Whether the kernel is pointwise nonnegative (`bool`)."""

    @property
    @abc.abstractmethod
    def support_diameter(self) -> float:
        """A length scale of the kernel, used to scale moment tolerances
        (`float`). For Gaussians this is the diameter of the three-sigma
        ball around the origin.
        """

    @property
    def mass(self) -> float:
        """The integral of the kernel (`float`)."""
        return 1.0

    def symbol(self, axes):
        """Evaluate the Fourier transform on a tensor grid of frequencies.

        Parameters
        ----------
        axes : sequence [`numpy.ndarray`]
            One 1D array of angular frequencies per axis.

        Returns
        -------
        rho_hat : `numpy.ndarray` [`complex`]
            The transform, of shape ``tuple(len(a) for a in axes)``.
        """
        raise NotImplementedError(f"{self.kind} kernels have no closed-form transform.")

    def deficit(self, axes):
        """Evaluate ``1 - rho_hat`` on a tensor grid of frequencies.

        See `symbol` for the parameters. The result is accurate in relative
        terms near the origin, where ``rho_hat`` is close to 1.
        """
        raise NotImplementedError(f"{self.kind} kernels have no closed-form transform.")

    @abc.abstractmethod
    def sample(self, spec: GridSpec, scale: float = 1.0) -> GridFunction:
        """Sample ``eps^-n rho(x/eps)`` on a grid."""

    def closed_moment(self, alpha: tuple[int, ...]) -> float | None:
        """Return the raw moment ``int y^alpha rho(y) dy`` from a closed form,
        or `None` if none is known.
        """
        return None

    @abc.abstractmethod
    def describe(self) -> dict:
        """Return the kernel descriptor that recreates this kernel."""


def _gaussian_raw_moment(order, center, sigma):
    """Raw moment of a 1D normal distribution."""
    return sum(math.comb(order, i) * center ** (order - i) * sigma**i * _double_factorial(i - 1)
               for i in range(0, order + 1, 2))


def _double_factorial(m):
    return math.prod(range(m, 0, -2)) if m > 0 else 1


@dataclasses.dataclass(frozen=True, kw_only=True)
class GaussianKernel(MollifierSpec):
    """An isotropic normal density.

    Parameters
    ----------
    variance : `float`
        The per-axis variance.
    center : `tuple` [`float`], optional
        The mean; defaults to the origin.
    """

    variance: float
    center: tuple[float, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ConfigError(f"Variance must be positive, got {self.variance}.")
        object.__setattr__(self, "center", _vector(self.center or 0.0, self.dim, "center"))

    @property
    def kind(self):
        return "gaussian"

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def _default_id(self):
        center = ",".join(f"{c:g}" for c in self.center)
        return f"gaussian(var={self.variance:g};center={center})"

    @property
    def is_nonnegative(self):
        return True

    @property
    def support_diameter(self):
        return 2.0 * (math.hypot(*self.center) + 3.0 * self.sigma)

    def symbol(self, axes):
        mesh = _axes_mesh(axes)
        phase = sum(c * w for c, w in zip(self.center, mesh))
        return numpy.exp(-1j * phase - 0.5 * self.variance * sum(w**2 for w in mesh))

    def deficit(self, axes):
        mesh = _axes_mesh(axes)
        a = -0.5 * self.variance * sum(w**2 for w in mesh)
        b = -sum(c * w for c, w in zip(self.center, mesh))
        # 1 - exp(a + ib), split to avoid cancellation.
        real = -(numpy.expm1(a) * numpy.cos(b) - 2.0 * numpy.sin(0.5 * b) ** 2)
        return real - 1j * numpy.exp(a) * numpy.sin(b)

    def sample(self, spec, scale=1.0):
        return sample_analytic(AnalyticKind.GAUSSIAN, {"variance": self.variance, "center": self.center},
                               spec, scale)

    def closed_moment(self, alpha):
        return math.prod(_gaussian_raw_moment(m, c, self.sigma) for m, c in zip(alpha, self.center))

    def describe(self):
        return {"kind": self.kind, "variance": self.variance, "center": list(self.center)}


@dataclasses.dataclass(frozen=True, kw_only=True)
class CubeKernel(MollifierSpec):
    """The normalized indicator of a box ``prod [lo_a, hi_a]``.

    Parameters
    ----------
    lo, hi : `tuple` [`float`]
        The box corners; a scalar applies to every axis.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "lo", _vector(self.lo, self.dim, "lo"))
        object.__setattr__(self, "hi", _vector(self.hi, self.dim, "hi"))
        if any(h <= lo for lo, h in zip(self.lo, self.hi)):
            raise ConfigError(f"Cube needs lo < hi, got {self.lo} and {self.hi}.")

    @property
    def kind(self):
        return "cube"

    @property
    def is_centered(self) -> bool:
        """Whether the box is symmetric about the origin (`bool`)."""
        return all(lo == -hi for lo, hi in zip(self.lo, self.hi))

    def _default_id(self):
        return "cube(" + ";".join(f"{lo:g}..{hi:g}" for lo, hi in zip(self.lo, self.hi)) + ")"

    @property
    def is_nonnegative(self):
        return True

    @property
    def support_diameter(self):
        return math.hypot(*(hi - lo for lo, hi in zip(self.lo, self.hi)))

    def symbol(self, axes):
        factors = []
        for w, lo, hi in zip(axes, self.lo, self.hi):
            center, width = 0.5 * (lo + hi), hi - lo
            factors.append(numpy.exp(-1j * w * center) * (1.0 - _one_minus_sinc(0.5 * w * width)))
        return functools.reduce(numpy.multiply.outer, factors)

    def deficit(self, axes):
        per_axis = []
        for w, lo, hi in zip(axes, self.lo, self.hi):
            center, width = 0.5 * (lo + hi), hi - lo
            phase = w * center
            per_axis.append(_one_minus_phase(phase)
                            + numpy.exp(-1j * phase) * _one_minus_sinc(0.5 * w * width))
        if self.dim == 1:
            return per_axis[0]
        d1, d2 = per_axis
        return d1[:, None] + d2[None, :] - d1[:, None] * d2[None, :]

    def sample(self, spec, scale=1.0):
        return sample_analytic(AnalyticKind.CUBE, {"lo": self.lo, "hi": self.hi}, spec, scale)

    def closed_moment(self, alpha):
        return math.prod((hi ** (m + 1) - lo ** (m + 1)) / ((m + 1) * (hi - lo))
                         for m, lo, hi in zip(alpha, self.lo, self.hi))

    def describe(self):
        return {"kind": self.kind, "lo": list(self.lo), "hi": list(self.hi)}


@functools.lru_cache
def _legendre_nodes(order):
    return numpy.polynomial.legendre.leggauss(order)


@dataclasses.dataclass(frozen=True, kw_only=True)
class BumpKernel(MollifierSpec):
    """The normalized smooth bump ``exp(-1/(1 - |x - c|^2/r^2))``.

    The transform and moments are computed with tensor Gauss-Legendre
    quadrature over the bounding box of the ball.

    Parameters
    ----------
    radius : `float`
        The support radius ``r``.
    center : `tuple` [`float`], optional
        The center ``c``; defaults to the origin.
    """

    radius: float
    center: tuple[float, ...] = ()

    _MIN_NODES = 128

    def __post_init__(self):
        super().__post_init__()
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ConfigError(f"Radius must be positive, got {self.radius}.")
        object.__setattr__(self, "center", _vector(self.center or 0.0, self.dim, "center"))

    @property
    def kind(self):
        return "bump"

    def _default_id(self):
        center = ",".join(f"{c:g}" for c in self.center)
        return f"bump(r={self.radius:g};center={center})"

    @property
    def is_nonnegative(self):
        return True

    @property
    def support_diameter(self):
        return 2.0 * (math.hypot(*self.center) + self.radius)

    def _quadrature(self, max_frequency=0.0):
        """Return per-axis nodes and the tensor of normalized weights.
        """
        order = max(self._MIN_NODES, int(math.ceil(max_frequency * self.radius)) + 32)
        t, w = _legendre_nodes(order)
        nodes = [c + self.radius * t for c in self.center]
        if self.dim == 1:
            r2 = t**2
        else:
            r2 = t[:, None] ** 2 + t[None, :] ** 2
        weights = numpy.zeros(r2.shape)
        inside = r2 < 1.0
        weights[inside] = numpy.exp(-1.0 / (1.0 - r2[inside]))
        weights *= w if self.dim == 1 else numpy.multiply.outer(w, w)
        return nodes, weights / weights.sum()

    def symbol(self, axes):
        nodes, weights = self._quadrature(max(numpy.abs(a).max() for a in axes))
        phases = [numpy.exp(-1j * numpy.multiply.outer(a, y)) for a, y in zip(axes, nodes)]
        if self.dim == 1:
            return phases[0] @ weights
        return phases[0] @ weights @ phases[1].T

    def deficit(self, axes):
        nodes, weights = self._quadrature(max(numpy.abs(a).max() for a in axes))
        deficits = [_one_minus_phase(numpy.multiply.outer(a, y)) for a, y in zip(axes, nodes)]
        if self.dim == 1:
            return deficits[0] @ weights
        # 1 - e1 e2 = (1 - e1) + e1 (1 - e2)
        phase = numpy.exp(-1j * numpy.multiply.outer(axes[0], nodes[0]))
        return (deficits[0] @ weights.sum(axis=1))[:, None] + phase @ weights @ deficits[1].T

    def sample(self, spec, scale=1.0):
        return sample_analytic(AnalyticKind.BUMP, {"radius": self.radius, "center": self.center},
                               spec, scale)

    def closed_moment(self, alpha):
        nodes, weights = self._quadrature()
        factors = [y**m for y, m in zip(nodes, alpha)]
        if self.dim == 1:
            return float(factors[0] @ weights)
        return float(factors[0] @ weights @ factors[1])

    def describe(self):
        return {"kind": self.kind, "radius": self.radius, "center": list(self.center)}


@dataclasses.dataclass(frozen=True, kw_only=True)
class MixtureKernel(MollifierSpec):
    """A signed linear combination of unit-mass kernels.

    Parameters
    ----------
    components : `tuple` [`MollifierSpec`]
        The component kernels, all of dimension ``dim``.
    weights : `tuple` [`float`]
        The weights, summing to 1 within `MASS_TOLERANCE`.

    Raises
    ------
    KernelHypothesisError
        Raised if the weights do not sum to 1.
    """

    components: tuple[MollifierSpec, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.components or len(self.components) != len(self.weights):
            raise ConfigError(f"A mixture needs one weight per component, got {len(self.components)} "
                              f"components and {len(self.weights)} weights.")
        if any(c.dim != self.dim for c in self.components):
            raise ConfigError("All mixture components must have the mixture's dimension.")
        if abs(self.mass - 1.0) > MASS_TOLERANCE:
            raise KernelHypothesisError(f"Mixture weights sum to {self.mass:.12g}, not 1.")

    @property
    def kind(self):
        return "mixture"

    def _default_id(self):
        terms = " + ".join(f"{w:.6g}*{c.kernel_id}" for c, w in zip(self.components, self.weights))
        return f"mixture({terms})"

    @property
    def is_analytic(self):
        return all(c.is_analytic for c in self.components)

    @property
    def mass(self):
        return math.fsum(w * c.mass for c, w in zip(self.components, self.weights))

    @property
    def is_nonnegative(self):
        return all(w >= 0 for w in self.weights) and all(c.is_nonnegative for c in self.components)

    @property
    def support_diameter(self):
        return max(c.support_diameter for c in self.components)

    def symbol(self, axes):
        return sum(w * c.symbol(axes) for c, w in zip(self.components, self.weights))

    def deficit(self, axes):
        # sum(w) = 1 up to rounding, so 1 - sum w rho_hat = sum w (1 - rho_hat).
        total = sum(w * c.deficit(axes) for c, w in zip(self.components, self.weights))
        return total + (1.0 - self.mass)

    def sample(self, spec, scale=1.0):
        values = sum(w * c.sample(spec, scale).values for c, w in zip(self.components, self.weights))
        return GridFunction(spec, values, label=self.kernel_id)

    def closed_moment(self, alpha):
        moments = [c.closed_moment(alpha) for c in self.components]
        if any(m is None for m in moments):
            return None
        return math.fsum(w * m for w, m in zip(self.weights, moments))

    def describe(self):
        return {"kind": self.kind, "components": [c.describe() for c in self.components],
                "weights": list(self.weights)}


@dataclasses.dataclass(frozen=True, kw_only=True)
class SampledKernel(MollifierSpec):
    """A kernel known only through grid samples.

    Dilations of a sampled kernel go through `besov.grid.rescale_kernel`, so
    they are subject to the grid's resolution limits.

    Parameters
    ----------
    function : `GridFunction`
        The samples. Their discrete mass must be 1 within `MASS_TOLERANCE`.
    source : `str`, optional
        The file the samples were read from, if any.

    Raises
    ------
    KernelHypothesisError
        Raised if the discrete mass is not 1.
    """

    function: GridFunction
    source: str = ""
    dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dim", self.function.spec.dim)
        super().__post_init__()
        if abs(self.mass - 1.0) > MASS_TOLERANCE:
            raise KernelHypothesisError(f"Sampled kernel has mass {self.mass:.12g}, not 1.")

    @property
    def kind(self):
        return "sampled"

    def _default_id(self):
        return f"sampled({self.source or self.function.label})"

    @property
    def is_analytic(self):
        return False

    @property
    def mass(self):
        return cell_mass(self.function)

    @property
    def is_nonnegative(self):
        return bool(numpy.all(self.function.values >= 0.0))

    @property
    def support_diameter(self):
        values = numpy.abs(self.function.values)
        carrying = values > SUPPORT_THRESHOLD * values.max()
        extents = [coord[carrying] for coord in self.function.spec.coordinates()]
        return max(math.hypot(*(e.max() - e.min() for e in extents)), self.function.spec.spacing)

    def sample(self, spec, scale=1.0):
        if spec != self.function.spec:
            raise GridMismatchError(f"Kernel {self.kernel_id} is sampled on {self.function.spec}, "
                                    f"not {spec}.")
        if scale != 1.0:
            raise ValueError("Use besov.grid.rescale_kernel to dilate a sampled kernel.")
        return self.function

    def describe(self):
        return {"kind": self.kind, "path": self.source}


class MomentTensor:
    """The symmetric tensor of raw moments of one order.

    Entries are stored once per sorted index tuple, so permutation symmetry
    holds by construction.

    Parameters
    ----------
    order : `int`
        The order ``k >= 1``.
    dim : `int`
        The dimension ``n``.
    entries : mapping [`tuple` [`int`], `float`]
        The moment for each nondecreasing index tuple of length ``k``.
    """

    def __init__(self, order, dim, entries):
        self.order = order
        self.dim = dim
        self._entries = {tuple(sorted(k)): float(v) for k, v in entries.items()}
        expected = set(self.indices(order, dim))
        if set(self._entries) != expected:
            raise ValueError(f"Moment tensor of order {order} needs entries for {sorted(expected)}.")

    @staticmethod
    def indices(order, dim):
        """Return the nondecreasing index tuples of a tensor's entries."""
        return list(itertools.combinations_with_replacement(range(dim), order))

    def __getitem__(self, index):
        index = (index,) if isinstance(index, int) else tuple(index)
        if len(index) != self.order:
            raise IndexError(f"Order {self.order} tensor indexed with {index}.")
        return self._entries[tuple(sorted(index))]

    def items(self):
        return self._entries.items()

    @property
    def max_abs(self) -> float:
        """The largest entry magnitude (`float`, read-only)."""
        return max(abs(v) for v in self._entries.values())

    def as_array(self) -> numpy.ndarray:
        """Return the full symmetric array of shape ``(n,) * k``."""
        array = numpy.empty((self.dim,) * self.order)
        for index in itertools.product(range(self.dim), repeat=self.order):
            array[index] = self[index]
        return array

    def to_json(self) -> dict:
        return {"order": self.order,
                "entries": {",".join(str(i) for i in k): v for k, v in sorted(self._entries.items())}}

    def __repr__(self):
        return f"MomentTensor(order={self.order}, dim={self.dim}, entries={self._entries!r})"


def _multi_index(index, dim):
    return tuple(index.count(axis) for axis in range(dim))


def _quadrature_moment(sampled, alpha):
    coords = sampled.spec.coordinates()
    weight = functools.reduce(numpy.multiply, (c**m for c, m in zip(coords, alpha)))
    return float(sampled.spec.cell_volume * numpy.sum(weight * sampled.values))


def moment_tensor(rho: MollifierSpec, order: int, spec: GridSpec, method: str = "auto") -> MomentTensor:
    """Compute the tensor of raw moments ``int y_i1 ... y_ik rho(y) dy``.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    order : `int`
        The order ``k``, in [1, `K_MAX`].
    spec : `GridSpec`
        The grid used for quadrature.
    method : {"auto", "closed", "quadrature"}
        "closed" uses closed forms (tensor quadrature for bumps), "quadrature"
        sums over grid samples, "auto" prefers closed forms.

    Returns
    -------
    tensor : `MomentTensor`
        The moments.

    Raises
    ------
    ValueError
        Raised if ``order`` is out of range, or if ``method="closed"`` and
        ``rho`` has no closed form.
    """
    if not 1 <= order <= K_MAX:
        raise ValueError(f"Moment order must lie in [1, {K_MAX}], got {order}.")
    if spec.dim != rho.dim:
        raise GridMismatchError(f"Kernel of dimension {rho.dim} on a grid of dimension {spec.dim}.")
    indices = MomentTensor.indices(order, rho.dim)
    closed = None
    if method in ("auto", "closed"):
        closed = [rho.closed_moment(_multi_index(i, rho.dim)) for i in indices]
        if any(c is None for c in closed):
            if method == "closed":
                raise ValueError(f"No closed-form moments for {rho.kernel_id}.")
            closed = None
    elif method != "quadrature":
        raise ValueError(f"Unknown moment method {method!r}.")

    if closed is not None:
        entries = dict(zip(indices, closed))
    else:
        sampled = rho.sample(spec)
        entries = {i: _quadrature_moment(sampled, _multi_index(i, rho.dim)) for i in indices}
    return MomentTensor(order, rho.dim, entries)


def smallest_nonzero_moment(rho: MollifierSpec, spec: GridSpec, k_max: int = K_MAX, tol=None):
    """Find the order of the first nonvanishing moment.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    spec : `GridSpec`
        The grid used for quadrature, if needed.
    k_max : `int`, optional
        The largest order to check.
    tol : `float`, optional
        The threshold below which a moment counts as zero. Defaults to
        ``1e-8 * diam**k`` for order ``k``, ``diam`` being the kernel's
        `~MollifierSpec.support_diameter`.

    Returns
    -------
    k0 : `int` or `MomentOrder`
        The smallest order with a nonzero moment, or `MomentOrder.INFINITE`.
    """
    for order, tensor in _tensors(rho, spec, k_max):
        if tensor.max_abs > _tolerance(rho, order, tol):
            return order
    return MomentOrder.INFINITE


def _tolerance(rho, order, tol):
    if tol is not None:
        return tol
    return 1e-8 * max(rho.support_diameter, 1.0) ** order


def _tensors(rho, spec, k_max):
    if not 1 <= k_max <= K_MAX:
        raise ValueError(f"k_max must lie in [1, {K_MAX}], got {k_max}.")
    for order in range(1, k_max + 1):
        yield order, moment_tensor(rho, order, spec)


def fractional_moment(rho: MollifierSpec, s: float, spec: GridSpec) -> float:
    """Compute ``int |y|^s |rho(y)| dy``.

    Closed forms are used for 1D boxes and centered 1D Gaussians; everything
    else is summed over grid samples.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    s : `float`
        The exponent, positive.
    spec : `GridSpec`
        The grid used for quadrature.

    Returns
    -------
    moment : `float`
        The fractional moment.
    """
    if not s > 0:
        raise ValueError(f"Fractional moment order must be positive, got {s}.")
    if rho.dim == 1 and isinstance(rho, CubeKernel):
        (lo,), (hi,) = rho.lo, rho.hi
        antiderivative = lambda y: math.copysign(abs(y) ** (s + 1), y) / (s + 1)  # noqa: E731
        return (antiderivative(hi) - antiderivative(lo)) / (hi - lo)
    if rho.dim == 1 and isinstance(rho, GaussianKernel) and rho.center == (0.0,):
        return (rho.sigma**s * 2.0 ** (s / 2.0) * math.exp(scipy.special.gammaln((s + 1) / 2.0))
                / math.sqrt(math.pi))
    sampled = rho.sample(spec)
    return float(spec.cell_volume * numpy.sum(spec.radius() ** s * numpy.abs(sampled.values)))


@dataclasses.dataclass(frozen=True, kw_only=True)
class MomentReport:
    """Moment diagnostics of one kernel."""

    kernel_id: str
    k0: int | MomentOrder
    tensors: dict[int, MomentTensor]
    fractional: dict[float, float]

    @property
    def admissible_s_sup(self) -> float:
        """The supremum of admissible smoothness indices (`float`)."""
        return float(self.k0)

    def to_json(self) -> dict:
        return {
            "kernel_id": self.kernel_id,
            "k0": self.k0.value if isinstance(self.k0, MomentOrder) else self.k0,
            "admissible_s_sup": self.admissible_s_sup,
            "moments": {str(k): t.to_json() for k, t in sorted(self.tensors.items())},
            "fractional_moments": {f"{s:g}": v for s, v in sorted(self.fractional.items())},
        }


def moment_report(rho: MollifierSpec, spec: GridSpec, k_max: int = K_MAX, s_values=(0.5, 1.0, 1.5),
                  tol=None) -> MomentReport:
    """Collect moment tensors, ``k0`` and fractional moments of a kernel.
    """
    tensors = dict(_tensors(rho, spec, k_max))
    k0 = next((k for k, t in tensors.items() if t.max_abs > _tolerance(rho, k, tol)),
              MomentOrder.INFINITE)
    fractional = {float(s): fractional_moment(rho, s, spec) for s in s_values}
    _log.debug("Kernel %s has k0=%s.", rho.kernel_id, k0)
    return MomentReport(kernel_id=rho.kernel_id, k0=k0, tensors=tensors, fractional=fractional)


@dataclasses.dataclass(frozen=True, kw_only=True)
class AdmissibilityVerdict:
    """The smoothness range on which a kernel characterizes Besov spaces.

    The range is the open interval ``(0, upper)``.
    """

    kernel_id: str
    upper: float
    criteria: tuple[str, ...]
    rationale: tuple[str, ...]

    def admits(self, s: float) -> bool:
        """Whether the kernel is admissible at smoothness ``s``."""
        return 0.0 < s < self.upper

    def to_json(self) -> dict:
        return {"interval": [0.0, self.upper], "criteria": list(self.criteria),
                "rationale": list(self.rationale)}


def classify_admissibility(rho: MollifierSpec, report: MomentReport) -> AdmissibilityVerdict:
    """Derive the admissible smoothness range from a moment report.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    report : `MomentReport`
        Its moment diagnostics.

    Returns
    -------
    verdict : `AdmissibilityVerdict`
        The interval ``(0, k0)`` and the criteria that support it.
    """
    upper = report.admissible_s_sup
    criteria = ["vanishing-moments"]
    rationale = [f"moments of order < {report.k0 if upper < math.inf else 'k_max + 1'} vanish, "
                 "so the mollifier rate matches Besov smoothness below that order"]
    small = sorted(s for s, v in report.fractional.items() if s < 1.0 and math.isfinite(v))
    if small:
        criteria.append("fractional-moment")
        rationale.append(f"finite moment int |y|^s |rho| for s={small[-1]:g} covers every s <= {small[-1]:g}")
    if rho.is_nonnegative:
        criteria.append("nonnegative-necessity")
        rationale.append("for a nonnegative kernel, admissibility at s requires a finite s-th moment")
    return AdmissibilityVerdict(kernel_id=rho.kernel_id, upper=upper, criteria=tuple(criteria),
                                rationale=tuple(rationale))


def engineered_mixture(k0: int, dim: int, variance: float = 0.25) -> MixtureKernel:
    """Build a Gaussian mixture whose first nonvanishing moment has order
    ``k0``.

    Components share ``variance`` and sit on the lattice of points with
    nonnegative integer coordinates summing to less than ``k0``, shifted by
    1/4 per axis. The weights cancel every moment of order 1 to ``k0 - 1``.

    Parameters
    ----------
    k0 : `int`
        The target order, in [1, `K_MAX`].
    dim : `int`
        The dimension.
    variance : `float`, optional
        The component variance.

    Returns
    -------
    mixture : `MixtureKernel`
        The kernel.

    Raises
    ------
    KernelHypothesisError
        Raised if the moment equations cannot be solved to 1e-12.
    """
    if not 1 <= k0 <= K_MAX:
        raise ValueError(f"k0 must lie in [1, {K_MAX}], got {k0}.")
    lattice = [p for p in itertools.product(range(k0), repeat=dim) if sum(p) < k0]
    centers = [tuple(c + 0.25 for c in p) for p in lattice]
    components = [GaussianKernel(dim=dim, variance=variance, center=c) for c in centers]
    # Multi-indices of total order below k0, including the mass.
    alphas = lattice
    matrix = numpy.array([[c.closed_moment(alpha) for c in components] for alpha in alphas])
    rhs = numpy.zeros(len(alphas))
    rhs[alphas.index((0,) * dim)] = 1.0
    weights, *_ = numpy.linalg.lstsq(matrix, rhs, rcond=None)
    residual = numpy.linalg.norm(matrix @ weights - rhs)
    if residual > 1e-12:
        raise KernelHypothesisError(f"Moment equations for k0={k0} solved only to {residual:.3g}.")
    return MixtureKernel(dim=dim, components=tuple(components), weights=tuple(weights),
                         name=f"engineered-k0={k0}")


def necessity_lower_bound(eta: GridFunction, rho: MollifierSpec, s: float) -> float:
    """Lower bound for ``int_0^inf eps^(-s-1) ||eta - eta*rho_eps||_1 deps``.

    For nonnegative ``rho`` and nonnegative ``eta`` vanishing outside the unit
    ball, the integral is at least
    ``||eta||_1 * 2^(-s)/s * int |y|^s rho(y) dy``. An infinite fractional
    moment therefore rules out admissibility at ``s``.

    Parameters
    ----------
    eta : `GridFunction`
        The nonnegative test function.
    rho : `MollifierSpec`
        The nonnegative kernel.
    s : `float`
        The smoothness index, positive.

    Returns
    -------
    bound : `float`
        The lower bound.

    Raises
    ------
    ValueError
        Raised if either function changes sign or ``eta`` is not supported in
        the unit ball.
    """
    if not s > 0:
        raise ValueError(f"Smoothness must be positive, got {s}.")
    if not rho.is_nonnegative:
        raise ValueError(f"The bound needs a nonnegative kernel; {rho.kernel_id} changes sign.")
    values = eta.values
    if numpy.any(values < 0.0):
        raise ValueError("The bound needs a nonnegative test function.")
    if numpy.any(values[eta.spec.radius() >= 1.0] > SUPPORT_THRESHOLD * values.max()):
        raise ValueError("The test function must vanish outside the unit ball.")
    eta_mass = cell_mass(eta)
    return eta_mass * 2.0 ** (-s) / s * fractional_moment(rho, s, eta.spec)


def load_kernel(descriptor, dim: int, base_dir: str = "") -> MollifierSpec:
    """Build a kernel from a descriptor mapping.

    Parameters
    ----------
    descriptor : mapping [`str`]
        A mapping with a ``kind`` key, one of ``"gaussian"``
        (``variance``, ``center``), ``"cube"`` (``lo``, ``hi``), ``"bump"``
        (``radius``, ``center``), ``"mixture"`` (``components``,
        ``weights``), ``"engineered"`` (``k0``, ``variance``) or
        ``"sampled"`` (``path`` to a BGF1 file). Every kind accepts an
        optional ``name``.
    dim : `int`
        The dimension of analytic kernels.
    base_dir : `str`, optional
        The directory relative paths are resolved against.

    Returns
    -------
    kernel : `MollifierSpec`
        The kernel.

    Raises
    ------
    ConfigError
        Raised if the descriptor is malformed or has unknown keys.
    KernelHypothesisError
        Raised if the kernel does not have unit mass.
    """
    if not isinstance(descriptor, collections.abc.Mapping):
        raise ConfigError(f"A kernel descriptor must be a mapping, got {descriptor!r}.")
    specs = dict(descriptor)
    try:
        kind = specs.pop("kind")
        name = str(specs.pop("name", ""))
        match kind:
            case "gaussian":
                kernel = GaussianKernel(dim=dim, name=name, variance=float(specs.pop("variance", 1.0)),
                                        center=specs.pop("center", 0.0))
            case "cube":
                kernel = CubeKernel(dim=dim, name=name, lo=specs.pop("lo"), hi=specs.pop("hi"))
            case "bump":
                kernel = BumpKernel(dim=dim, name=name, radius=float(specs.pop("radius", 1.0)),
                                    center=specs.pop("center", 0.0))
            case "mixture":
                components = tuple(load_kernel(c, dim, base_dir) for c in specs.pop("components"))
                kernel = MixtureKernel(dim=dim, name=name, components=components,
                                       weights=tuple(specs.pop("weights")))
            case "engineered":
                kernel = engineered_mixture(int(specs.pop("k0")), dim, float(specs.pop("variance", 0.25)))
                if name:
                    kernel = dataclasses.replace(kernel, name=name)
            case "sampled":
                from shared.gridio import read_grid_function
                path = os.path.join(base_dir, os.path.expandvars(specs.pop("path")))
                function = read_grid_function(path)
                if function.spec.dim != dim:
                    raise ConfigError(f"Kernel file {path} has dimension {function.spec.dim}, "
                                      f"expected {dim}.")
                kernel = SampledKernel(function=function, source=path, name=name)
            case _:
                raise ConfigError(f"Unknown kernel kind {kind!r}.")
    except KeyError as e:
        raise ConfigError(f"Kernel descriptor {descriptor!r} is missing {e}.") from e
    except BesovError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid kernel descriptor {descriptor!r}: {e}") from e
    if specs:
        raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
    return kernel
