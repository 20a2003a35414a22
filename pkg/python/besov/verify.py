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


__all__ = ["FamilyMember", "FunctionFamily", "generate_function", "standard_family", "standard_battery",
           "default_eta", "second_eta", "norm_ratio",
           "EquivalenceReport", "TaylorCheck", "SchurBound", "CheckResult", "SuiteSettings",
           "equivalence_experiment", "one_sided_experiment", "taylor_rate_check", "schur_bound",
           "operator_norm_estimate", "transfer_kernel", "run_suite", "suite_summary", "experiment_summary",
           "junit_xml",
           "threads_from_environment",
           ]


import collections.abc
import concurrent.futures
import dataclasses
import logging
import math
import os
import time
import xml.etree.ElementTree as ElementTree

import astropy.table
import numpy
import scipy.fft

from lsst.utils.timer import time_this

from shared.logger import add_context
from .caching import EvaluationCache
from .exception import BesovError, ConfigError, GridMismatchError
from .grid import GridFunction, GridSpec, convolve, dual_exponent, lp_norm, parse_exponent
from .kernels import CubeKernel, BumpKernel, GaussianKernel, MixtureKernel, MollifierSpec, MomentOrder, \
    engineered_mixture, fractional_moment, load_kernel, moment_tensor, smallest_nonzero_moment
from .littlewood_paley import BesovParams, FilterBank, GaussianDerivative, besov_norm, build_filter_bank, \
    partition_residual
from .rate import EpsilonGrid, RateProfile, decay_exponent, eta_test, keylem_diagnostic, \
    mollifier_functional, rate_profile


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)


THREADS_ENV = "BESOV_THREADS"
"""The environment variable capping worker threads (`str`).
"""


def threads_from_environment() -> int:
    """Return the number of worker threads allowed by ``BESOV_THREADS``.

    Raises
    ------
    ConfigError
        Raised if the variable is set but is not a positive integer.
    """
    value = os.environ.get(THREADS_ENV)
    if not value:
        return os.cpu_count() or 1
    try:
        threads = int(value)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}.") from e
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}.")
    return threads


@dataclasses.dataclass(frozen=True)
class FamilyMember:
    """One test function.

    ``known_smoothness`` is the critical ``s`` above which the function
    leaves ``B^s_{2,q}``, or `None` for smooth functions.
    """

    id: str
    function: GridFunction
    known_smoothness: float | None = None


def _window(spec, variance):
    return numpy.exp(-0.5 * spec.radius() ** 2 / variance)


def _lacunary(spec, alpha):
    step = math.pi / spec.extent
    frequencies = []
    k = 0
    while 2.0**k <= 0.5 * spec.nyquist:
        nearest = round(2.0**k / step) * step
        if nearest > 0 and nearest not in frequencies:
            frequencies.append(nearest)
        k += 1
    x = spec.coordinates()[0]
    return sum(2.0 ** (-alpha * k) * numpy.cos(xi * x) for k, xi in enumerate(frequencies))


def generate_function(spec: GridSpec, descriptor) -> FamilyMember:
    """Generate a test function from a descriptor.

    Parameters
    ----------
    spec : `GridSpec`
        The grid.
    descriptor : mapping [`str`]
        A mapping with a ``kind`` key: ``"gaussian"`` (``variance``,
        ``center``), ``"power_bump"`` (``alpha``: ``|x|^alpha`` times a
        Gaussian window), ``"band_limited"`` (``seed``, ``cutoff``: random
        modes with ``|xi| <= cutoff`` under a Gaussian envelope),
        ``"lacunary"`` (``alpha``: ``sum_k 2^(-alpha k) cos(xi_k x_1)`` with
        ``xi_k`` the grid frequency nearest ``2^k``, up to half the Nyquist
        frequency) or ``"zero"``. An optional ``id`` names the member.

    Returns
    -------
    member : `FamilyMember`
        The function and its known smoothness, if any.

    Raises
    ------
    ConfigError
        Raised if the descriptor is malformed or has unknown keys.
    """
    if not isinstance(descriptor, collections.abc.Mapping):
        raise ConfigError(f"A function descriptor must be a mapping, got {descriptor!r}.")
    specs = dict(descriptor)
    smoothness = None
    try:
        kind = specs.pop("kind")
        match kind:
            case "gaussian":
                variance = float(specs.pop("variance", 1.0))
                center = numpy.broadcast_to(numpy.asarray(specs.pop("center", 0.0), dtype=float),
                                            (spec.dim,))
                offsets = [c - x0 for c, x0 in zip(spec.coordinates(), center)]
                values = numpy.exp(-0.5 * sum(o**2 for o in offsets) / variance)
                default_id = f"gaussian(var={variance:g})"
            case "power_bump":
                alpha = float(specs.pop("alpha"))
                values = spec.radius() ** alpha * _window(spec, float(specs.pop("window", 1.0)))
                smoothness = alpha + 0.5 * spec.dim
                default_id = f"power_bump(alpha={alpha:g})"
            case "band_limited":
                seed = int(specs.pop("seed", 0))
                cutoff = float(specs.pop("cutoff", 4.0))
                rng = numpy.random.default_rng(seed)
                coefficients = rng.normal(size=spec.shape) + 1j * rng.normal(size=spec.shape)
                coefficients[spec.frequency_radius() > cutoff] = 0.0
                values = scipy.fft.ifftn(coefficients).real * _window(spec, float(specs.pop("envelope", 9.0)))
                values /= numpy.abs(values).max()
                default_id = f"band_limited(seed={seed})"
            case "lacunary":
                smoothness = float(specs.pop("alpha"))
                values = _lacunary(spec, smoothness)
                default_id = f"lacunary(alpha={smoothness:g})"
            case "zero":
                values = numpy.zeros(spec.shape)
                default_id = "zero"
            case _:
                raise ConfigError(f"Unknown function kind {kind!r}.")
        member_id = str(specs.pop("id", default_id))
    except KeyError as e:
        raise ConfigError(f"Function descriptor {descriptor!r} is missing {e}.") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid function descriptor {descriptor!r}: {e}") from e
    if specs:
        raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
    return FamilyMember(member_id, GridFunction(spec, values, label=member_id), smoothness)


_STANDARD_RECIPES = (
    {"kind": "gaussian", "variance": 0.5},
    {"kind": "gaussian", "variance": 1.0},
    {"kind": "gaussian", "variance": 2.0},
    {"kind": "power_bump", "alpha": 0.3},
    {"kind": "power_bump", "alpha": 0.5},
    {"kind": "power_bump", "alpha": 0.7},
    {"kind": "band_limited", "seed": 0},
    {"kind": "band_limited", "seed": 1},
    {"kind": "lacunary", "alpha": 0.5},
    {"kind": "lacunary", "alpha": 1.5},
)


@dataclasses.dataclass(frozen=True)
class FunctionFamily:
    """Test functions on one grid, rebuildable on a refined grid."""

    spec: GridSpec
    recipes: tuple[dict, ...]
    members: tuple[FamilyMember, ...] = ()

    def __post_init__(self):
        if not self.members:
            members = tuple(generate_function(self.spec, r) for r in self.recipes)
            object.__setattr__(self, "members", members)
        if any(m.function.spec != self.spec for m in self.members):
            raise GridMismatchError("All family members must share the family's grid.")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"Family member ids must be unique, got {ids}.")

    def refined(self) -> "FunctionFamily":
        """Rebuild the family on the grid with twice as many points."""
        return FunctionFamily(self.spec.refined(), self.recipes)


def standard_family(spec: GridSpec, seed: int = 0) -> FunctionFamily:
    """Return the standard 10-member test family.

    The members are three Gaussians, windowed ``|x|^alpha`` for
    ``alpha in {0.3, 0.5, 0.7}``, two band-limited randoms (seeds ``seed``
    and ``seed + 1``) and two lacunary sums.
    """
    recipes = tuple(dict(r, seed=seed + r["seed"]) if r["kind"] == "band_limited" else dict(r)
                    for r in _STANDARD_RECIPES)
    return FunctionFamily(spec, recipes)


def standard_battery(dim: int) -> dict[str, MollifierSpec]:
    """Return the standard kernels, keyed by name.

    The battery holds a centered and a shifted cube, a Gaussian, a bump,
    moment-engineered mixtures with ``k0`` in {1, 2, 3} and a sign-changing
    mixture.
    """
    battery = [
        CubeKernel(dim=dim, lo=-0.5, hi=0.5, name="centered-cube"),
        CubeKernel(dim=dim, lo=0.0, hi=1.0, name="shifted-cube"),
        GaussianKernel(dim=dim, variance=1.0, name="gaussian"),
        BumpKernel(dim=dim, radius=1.0, name="bump"),
        engineered_mixture(1, dim),
        engineered_mixture(2, dim),
        engineered_mixture(3, dim),
        MixtureKernel(dim=dim, components=(GaussianKernel(dim=dim, variance=0.25),
                                           GaussianKernel(dim=dim, variance=1.0)),
                      weights=(2.0, -1.0), name="sign-changing"),
    ]
    return {k.kernel_id: k for k in battery}


@dataclasses.dataclass(frozen=True, kw_only=True)
class EquivalenceReport:
    """Per-member ratios ``besov^q / (||f||_p^q + functional)``.

    Members whose two sides both vanish are excluded from the ratios.
    """

    experiment: str
    kernel_id: str
    params: BesovParams
    ratios: dict[str, float]
    cap: float
    admissible: bool | None = None

    @property
    def min_ratio(self) -> float:
        return min(self.ratios.values()) if self.ratios else math.nan

    @property
    def max_ratio(self) -> float:
        return max(self.ratios.values()) if self.ratios else math.nan

    @property
    def spread(self) -> float:
        """``max / min`` of the ratios; infinite if any ratio is 0 or inf."""
        if not self.ratios:
            return 1.0
        if self.min_ratio <= 0.0 or not math.isfinite(self.max_ratio):
            return math.inf
        return self.max_ratio / self.min_ratio

    @property
    def bounded(self) -> bool:
        return self.spread <= self.cap

    @property
    def passed(self) -> bool:
        """Whether the experiment supports the claimed norm bound.

        A one-sided experiment passes if the ratios are bounded; an
        equivalence experiment additionally needs an admissible kernel.
        """
        if self.admissible is None:
            return self.bounded
        return self.bounded and self.admissible

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "kernel_id": self.kernel_id, "params": self.params.to_json(),
                "ratios": dict(sorted(self.ratios.items())), "min_ratio": self.min_ratio,
                "max_ratio": self.max_ratio, "spread": self.spread, "cap": self.cap,
                "admissible": self.admissible, "passed": self.passed}


def norm_ratio(besov: float, lp: float, functional: float, q: float) -> float:
    """Return ``besov^q / (lp^q + functional)``, or
    ``besov / max(lp, functional)`` for ``q = inf``.

    The ratio is NaN if both sides vanish and infinite if only the
    denominator does.
    """
    if math.isinf(q):
        numerator, denominator = besov, max(lp, functional)
    else:
        numerator, denominator = besov**q, lp**q + functional
    if denominator > 0:
        return numerator / denominator
    return math.nan if numerator == 0 else math.inf


def _ratios(family, rho, params, bank, grid, cache):
    if bank.spec != family.spec:
        raise GridMismatchError(f"Family on {family.spec} but filter bank on {bank.spec}.")
    ratios = {}
    for member in family.members:
        f = member.function
        besov = besov_norm(f, bank, params).value
        lp = lp_norm(f, params.p)
        functional = mollifier_functional(f, rho, params, grid, cache=cache).value
        if besov == 0.0 and lp == 0.0 and functional == 0.0:
            continue
        ratios[member.id] = norm_ratio(besov, lp, functional, params.q)
    return ratios


def default_eta(spec: GridSpec) -> GridFunction:
    """The default test function, a unit-variance Gaussian."""
    return generate_function(spec, {"kind": "gaussian", "variance": 1.0, "id": "eta"}).function


def equivalence_experiment(family: FunctionFamily, rho: MollifierSpec, params: BesovParams, bank: FilterBank,
                           grid: EpsilonGrid, ratio_cap: float = 100.0, *, eta: GridFunction | None = None,
                           cache: EvaluationCache | None = None) -> EquivalenceReport:
    """Compare the Besov norm with the mollifier rate functional.

    The experiment passes iff the family-wide spread of the ratios is at most
    ``ratio_cap`` and the kernel is admissible at ``s`` by `eta_test`.

    Parameters
    ----------
    family : `FunctionFamily`
        The test functions.
    rho : `MollifierSpec`
        The kernel.
    params : `BesovParams`
        The indices.
    bank : `FilterBank`
        The filter bank, on the family's grid.
    grid : `EpsilonGrid`
        The scales for the functional.
    ratio_cap : `float`, optional
        The largest acceptable max/min ratio.
    eta : `GridFunction`, optional
        The test function for admissibility; defaults to `default_eta`.
    cache : `besov.caching.EvaluationCache`, optional
        A cache of residual norms.

    Returns
    -------
    report : `EquivalenceReport`
        The ratios and the admissibility verdict.
    """
    eta = eta if eta is not None else default_eta(family.spec)
    admissible = eta_test(rho, eta, params.s).converged
    ratios = _ratios(family, rho, params, bank, grid, cache)
    report = EquivalenceReport(experiment="equivalence", kernel_id=rho.kernel_id, params=params,
                               ratios=ratios, cap=ratio_cap, admissible=admissible)
    if not admissible:
        _log.info("Kernel %s is not admissible at s=%g by the eta test.", rho.kernel_id, params.s)
    return report


def one_sided_experiment(family: FunctionFamily, rho: MollifierSpec, params: BesovParams, bank: FilterBank,
                         grid: EpsilonGrid, cap: float = 1000.0, *,
                         cache: EvaluationCache | None = None) -> EquivalenceReport:
    """Check that ``besov^q <= C (||f||_p^q + functional)`` across a family.

    Only unit mass is required of ``rho``. The report is bounded iff every
    ratio is finite and the spread is at most ``cap``.
    """
    ratios = _ratios(family, rho, params, bank, grid, cache)
    return EquivalenceReport(experiment="one-sided", kernel_id=rho.kernel_id, params=params, ratios=ratios,
                             cap=cap)


@dataclasses.dataclass(frozen=True, kw_only=True)
class TaylorCheck:
    """The empirical decay rate of ``||eta - eta*rho_eps||_1`` against the
    order of the first nonvanishing moment.
    """

    kernel_id: str
    slope: float
    predicted_k0: int | MomentOrder
    constant_estimate: float
    tolerance: float

    @property
    def passed(self) -> bool:
        if isinstance(self.predicted_k0, MomentOrder):
            return False
        return abs(self.slope - self.predicted_k0) <= self.tolerance

    def to_json(self) -> dict:
        k0 = self.predicted_k0.value if isinstance(self.predicted_k0, MomentOrder) else self.predicted_k0
        return {"kernel_id": self.kernel_id, "empirical_slope": self.slope, "predicted_k0": k0,
                "constant_estimate": self.constant_estimate, "passed": self.passed}


def taylor_rate_check(rho: MollifierSpec, eta: GridFunction, grid: EpsilonGrid,
                      fit_range=(2.0**-7, 2.0**-2), tolerance: float = 0.15) -> TaylorCheck:
    """Fit the decay of ``||eta - eta*rho_eps||_1`` and compare it with
    ``k0``.

    Parameters
    ----------
    rho : `MollifierSpec`
        The kernel.
    eta : `GridFunction`
        A smooth test function.
    grid : `EpsilonGrid`
        The scales.
    fit_range : `tuple` [`float`, `float`], optional
        The range of ``eps`` to fit.
    tolerance : `float`, optional
        The allowed ``|slope - k0|``.

    Returns
    -------
    check : `TaylorCheck`
        The slope, ``k0`` and the mean of ``deviation / eps^k0`` over the fit
        range.

    Raises
    ------
    RegressionError
        Raised if the fit has too few points.
    """
    profile = rate_profile(eta, rho, 1.0, grid)
    fit = decay_exponent(profile, fit_range)
    k0 = smallest_nonzero_moment(rho, eta.spec)
    constant = math.nan
    if not isinstance(k0, MomentOrder):
        lo, hi = sorted(fit_range)
        eps = numpy.asarray(profile.epsilons)
        dev = numpy.asarray(profile.deviations)
        selected = (eps >= lo) & (eps <= hi)
        constant = float(numpy.mean(dev[selected] / eps[selected] ** k0))
    return TaylorCheck(kernel_id=rho.kernel_id, slope=fit.slope, predicted_k0=k0,
                       constant_estimate=constant, tolerance=tolerance)


@dataclasses.dataclass(frozen=True, kw_only=True)
class SchurBound:
    """The Schur test bound ``M1^(1/p') M2^(1/p)``."""

    m1: float
    m2: float
    bound: float
    p: float

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _nonnegative_matrix(kernel):
    matrix = numpy.asarray(kernel, dtype=float)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError(f"Expected a nonempty matrix, got shape {matrix.shape}.")
    if not numpy.all(numpy.isfinite(matrix)):
        raise ValueError("Kernel matrix entries must be finite.")
    if numpy.any(matrix < 0):
        raise ValueError("Kernel matrix entries must be nonnegative; pass |K| instead.")
    return matrix


def schur_bound(kernel, p) -> SchurBound:
    """Bound the lp operator norm of a nonnegative kernel matrix.

    Parameters
    ----------
    kernel : array-like
        The matrix ``K[j][l]``, nonnegative.
    p : `float` or `str`
        The exponent.

    Returns
    -------
    bound : `SchurBound`
        ``M1`` (largest row sum), ``M2`` (largest column sum) and
        ``M1^(1/p') M2^(1/p)``.

    Raises
    ------
    ValueError
        Raised if the matrix has negative entries.
    """
    matrix = _nonnegative_matrix(kernel)
    p = parse_exponent(p)
    m1 = float(matrix.sum(axis=1).max())
    m2 = float(matrix.sum(axis=0).max())
    p_dual = dual_exponent(p)
    bound = (m1 ** (1.0 / p_dual) if math.isfinite(p_dual) else 1.0) \
        * (m2 ** (1.0 / p) if math.isfinite(p) else 1.0)
    return SchurBound(m1=m1, m2=m2, bound=float(bound), p=p)


def operator_norm_estimate(kernel, p, iterations: int = 500, rtol: float = 1e-12) -> float:
    """Estimate the lp operator norm of a nonnegative matrix from below.

    Uses the nonlinear power iteration for lp norms; exact for ``p`` in
    {1, inf}.
    """
    matrix = _nonnegative_matrix(kernel)
    p = parse_exponent(p)
    if p == 1.0:
        return float(matrix.sum(axis=0).max())
    if math.isinf(p):
        return float(matrix.sum(axis=1).max())
    p_dual = dual_exponent(p)
    x = numpy.full(matrix.shape[1], matrix.shape[1] ** (-1.0 / p))
    estimate = 0.0
    for _ in range(iterations):
        y = matrix @ x
        norm_y = numpy.linalg.norm(y, p)
        if norm_y == 0.0:
            return 0.0
        z = matrix.T @ (y / norm_y) ** (p - 1.0)
        x_next = z ** (p_dual - 1.0)
        x_next /= numpy.linalg.norm(x_next, p)
        new_estimate = float(numpy.linalg.norm(matrix @ x_next, p))
        x = x_next
        if abs(new_estimate - estimate) <= rtol * new_estimate:
            estimate = new_estimate
            break
        estimate = new_estimate
    return estimate


def transfer_kernel(alphas, s: float, size: int) -> numpy.ndarray:
    """Build ``kappa(j, l) = 2^(s(j-l))`` for ``l >= j`` and
    ``alpha_(j-l)`` for ``l < j``.

    Parameters
    ----------
    alphas : sequence [`float`]
        ``alpha_k`` for ``k >= 0``; entries past the end count as 0.
    s : `float`
        The smoothness.
    size : `int`
        The matrix size.
    """
    alphas = numpy.asarray(alphas, dtype=float)
    j, ell = numpy.meshgrid(numpy.arange(size), numpy.arange(size), indexing="ij")
    lag = j - ell
    below = numpy.where(lag < len(alphas), alphas[numpy.clip(lag, 0, len(alphas) - 1)], 0.0)
    return numpy.where(ell >= j, 2.0 ** (s * lag), below)


@dataclasses.dataclass(frozen=True)
class CheckResult:
    """The outcome of one verification check."""

    name: str
    passed: bool
    detail: dict
    duration: float = 0.0


@dataclasses.dataclass(frozen=True, kw_only=True)
class SuiteSettings:
    """Sizes and thresholds of the verification suite.

    ``extra_kernels`` holds kernels or kernel descriptors added to the
    battery; descriptors that fail to load become failed checks. Grids left
    unset take the defaults for ``dim``.

    Raises
    ------
    ConfigError
        Raised if ``dim`` is not 1 or 2, or if a grid or an extra kernel has
        another dimension.
    """

    dim: int = 1
    ratio_cap: float = 100.0
    one_sided_cap: float = 1000.0
    refinement_tolerance: float = 0.1
    extra_kernels: tuple = ()
    base_dir: str = ""
    seed: int = 0
    taylor_grid: GridSpec | None = None
    keylem_grid: GridSpec | None = None
    family_grid: GridSpec | None = None

    def __post_init__(self):
        if self.dim not in _DEFAULT_GRIDS:
            raise ConfigError(f"The suite runs in {sorted(_DEFAULT_GRIDS)} dimensions, got {self.dim}.")
        for name, (extent, points) in _DEFAULT_GRIDS[self.dim].items():
            spec = getattr(self, name)
            if spec is None:
                object.__setattr__(self, name, GridSpec(dim=self.dim, extent=extent, points_per_axis=points))
            elif spec.dim != self.dim:
                raise ConfigError(f"{name} has dimension {spec.dim}, the suite runs in {self.dim}.")
        for extra in self.extra_kernels:
            if isinstance(extra, MollifierSpec) and extra.dim != self.dim:
                raise ConfigError(f"Extra kernel {extra.kernel_id} has dimension {extra.dim}, "
                                  f"the suite runs in {self.dim}.")


# (extent, points per axis) of each suite grid.
_DEFAULT_GRIDS = {
    1: {"taylor_grid": (16.0, 4096), "keylem_grid": (8.0, 16384), "family_grid": (16.0, 1024)},
    2: {"taylor_grid": (16.0, 256), "keylem_grid": (4.0, 1024), "family_grid": (16.0, 128)},
}


def _infrastructure_checks(settings):
    def fft_vs_direct():
        rng = numpy.random.default_rng(settings.seed)
        worst = 0.0
        for spec in (GridSpec(dim=1, extent=4.0, points_per_axis=128),
                     GridSpec(dim=2, extent=4.0, points_per_axis=32)):
            f = GridFunction(spec, rng.normal(size=spec.shape))
            g = GridFunction(spec, rng.normal(size=spec.shape))
            fast, slow = convolve(f, g, "fft").values, convolve(f, g, "direct").values
            worst = max(worst, float(numpy.abs(fast - slow).max() / numpy.abs(slow).max()))
        return worst <= 1e-10, {"max_relative_difference": worst}

    def partition():
        bank = build_filter_bank(settings.family_grid)
        radii = numpy.random.default_rng(settings.seed).uniform(0.0, 2.0**bank.levels_max, 1000)
        worst = float(partition_residual(bank, radii).max())
        return worst <= 1e-12, {"max_residual": worst}

    def power_law():
        eps = EpsilonGrid().sample_points()
        profile = RateProfile(epsilons=tuple(eps), deviations=tuple(eps**2), p=1.0)
        fit = decay_exponent(profile)
        return abs(fit.slope - 2.0) <= 1e-10, fit.to_json()

    return {"infrastructure/fft-vs-direct": fft_vs_direct, "infrastructure/partition-of-unity": partition,
            "infrastructure/power-law-fit": power_law}


def _moment_checks(settings):
    spec = GridSpec(dim=1, extent=16.0, points_per_axis=4096)

    def cube_second_moment():
        cube = CubeKernel(dim=1, lo=-0.5, hi=0.5)
        closed = moment_tensor(cube, 2, spec)[0, 0]
        quadrature = moment_tensor(cube, 2, spec, method="quadrature")[0, 0]
        fractional = fractional_moment(cube, 1.0, spec)
        passed = abs(closed - 1 / 12) <= 1e-6 and abs(quadrature - 1 / 12) <= 1e-4 \
            and abs(fractional - 0.25) <= 1e-6
        return passed, {"closed": closed, "quadrature": quadrature, "fractional_s1": fractional}

    def engineered_orders():
        orders = {k: smallest_nonzero_moment(engineered_mixture(k, settings.dim),
                                             GridSpec(dim=settings.dim, extent=16.0, points_per_axis=256))
                  for k in (1, 2, 3)}
        return all(orders[k] == k for k in orders), {str(k): v for k, v in orders.items()}

    return {"moments/cube-closed-forms": cube_second_moment, "moments/engineered-orders": engineered_orders}


def _load_extra(settings, index):
    extra = settings.extra_kernels[index]
    if isinstance(extra, MollifierSpec):
        return extra
    return load_kernel(extra, settings.dim, settings.base_dir)


def _battery(settings):
    battery = standard_battery(settings.dim)
    for index in range(len(settings.extra_kernels)):
        try:
            kernel = _load_extra(settings, index)
        except BesovError:
            continue  # Reported by the kernels/extra checks.
        battery[kernel.kernel_id] = kernel
    return battery


def _extra_kernel_checks(settings):
    checks = {}
    for index in range(len(settings.extra_kernels)):
        def check(index=index):
            kernel = _load_extra(settings, index)
            k0 = smallest_nonzero_moment(kernel, settings.taylor_grid)
            return True, {"kernel_id": kernel.kernel_id,
                          "k0": k0.value if isinstance(k0, MomentOrder) else k0}
        checks[f"kernels/extra-{index}"] = check
    return checks


def _taylor_checks(settings):
    eta = default_eta(settings.taylor_grid)
    checks = {}
    for name, kernel in _battery(settings).items():
        def check(kernel=kernel):
            result = taylor_rate_check(kernel, eta, EpsilonGrid())
            return result.passed, result.to_json()
        checks[f"taylor/{name}"] = check
    return checks


def second_eta(spec: GridSpec) -> GridFunction:
    """A second test function, a radius-2 bump, for checking that verdicts
    do not depend on the choice of ``eta``.
    """
    return GridFunction(spec, BumpKernel(dim=spec.dim, radius=2.0).sample(spec).values, label="eta-bump")


def _dichotomy_checks(settings):
    """Sums converge half an order below ``k0`` and diverge half an order
    above it, for both test functions.
    """
    etas = {"": default_eta(settings.family_grid), "second-eta/": second_eta(settings.family_grid)}
    checks = {}
    for name, kernel in standard_battery(settings.dim).items():
        k0 = smallest_nonzero_moment(kernel, settings.taylor_grid)
        for prefix, eta in etas.items():
            for s, expected in ((k0 - 0.5, True), (k0 + 0.5, False)):
                def check(kernel=kernel, eta=eta, s=s, expected=expected):
                    report = eta_test(kernel, eta, s)
                    return report.converged == expected, {
                        "converged": report.converged, "expected": expected,
                        "tail_shares": list(report.tail_shares),
                        "resolved_levels": list(report.resolved_levels)}
                checks[f"dichotomy/{prefix}{name}@s={s:g}"] = check
    return checks


def _keylem_levels(spec):
    """The finest dyadic level whose filter peak stays well below Nyquist."""
    return max(3, min(8, int(math.log2(spec.nyquist / 3.0))))


def _keylem_checks(settings):
    grid = EpsilonGrid(j_max=_keylem_levels(settings.keylem_grid), samples_per_block=1)
    psi = GaussianDerivative(dim=settings.dim)
    checks = {}
    for name, kernel in _battery(settings).items():
        if not kernel.is_analytic:
            continue

        def check(kernel=kernel):
            report = keylem_diagnostic(kernel, psi, grid, settings.keylem_grid)
            ratio = report.values[-1] / report.values[0] if report.values[0] > 0 else 0.0
            return ratio < 0.05, {"ratio": ratio, "decrease_fraction": report.decrease_fraction}
        checks[f"keylem/{name}"] = check
    return checks


def _schur_checks(settings):
    def random_matrices():
        rng = numpy.random.default_rng(settings.seed)
        worst = 0.0
        for _ in range(200):
            matrix = rng.uniform(size=(30, 30)) * (rng.uniform(size=(30, 30)) < 0.5)
            for p in (1.0, 2.0, math.inf):
                bound = schur_bound(matrix, p).bound
                worst = max(worst, operator_norm_estimate(matrix, p) / bound - 1.0)
        return worst <= 1e-6, {"max_relative_excess": worst}

    def transfer():
        kernel = GaussianKernel(dim=settings.dim, variance=1.0)
        s = 0.7
        report = eta_test(kernel, default_eta(settings.family_grid), s)
        matrix = transfer_kernel(report.block_averages(), s, 20)
        bound = schur_bound(matrix, 2.0)
        return math.isfinite(bound.bound), bound.to_json()

    return {"schur/random-dominance": random_matrices, "schur/transfer-kernel": transfer}


def _functional_checks(settings):
    """The functional must not move when the scale grid is refined."""
    eta = default_eta(settings.family_grid)
    params = BesovParams(s=0.7)
    grid = EpsilonGrid(samples_per_block=4)
    checks = {}
    for name, kernel in standard_battery(settings.dim).items():
        def check(kernel=kernel):
            coarse = mollifier_functional(eta, kernel, params, grid).value
            fine = mollifier_functional(eta, kernel, params, grid.refined()).value
            change = abs(fine / coarse - 1.0) if coarse > 0 else 0.0
            return change <= 0.05, {"coarse": coarse, "fine": fine, "relative_change": change}
        checks[f"functional/refinement/{name}"] = check
    return checks


_SMOOTHNESS_MARGIN = 0.3


def _functional_grid(family):
    bank = build_filter_bank(family.spec)
    return EpsilonGrid(j_max=bank.levels_max + 1, samples_per_block=4)


def _refinement_change(reports, family, s):
    """The largest relative ratio change over members safely inside
    ``B^s``; rougher members have truncated norms that grow with ``N``.
    """
    coarse, fine = reports
    stable = {m.id for m in family.members
              if m.known_smoothness is None or s <= m.known_smoothness - _SMOOTHNESS_MARGIN}
    shared = stable & set(coarse.ratios) & set(fine.ratios)
    if not shared:
        return 0.0
    return max(abs(fine.ratios[k] / coarse.ratios[k] - 1.0) for k in shared)


def _experiment_checks(settings):
    family = standard_family(settings.family_grid, settings.seed)
    families = (family, family.refined())
    grid = _functional_grid(family)
    checks = {}

    def run(experiment, kernel, params, cap):
        reports = []
        for fam in families:
            bank = build_filter_bank(fam.spec)
            cache = EvaluationCache(4096, seed=settings.seed)
            if experiment == "equivalence":
                reports.append(equivalence_experiment(fam, kernel, params, bank, grid, cap, cache=cache))
            else:
                reports.append(one_sided_experiment(fam, kernel, params, bank, grid, cap, cache=cache))
        return reports

    def verdict(reports, s):
        change = _refinement_change(reports, family, s)
        passed = all(r.passed for r in reports) and change <= settings.refinement_tolerance
        return passed, {"report": reports[0].to_json(), "refinement_change": change}

    for name, kernel in _battery(settings).items():
        for s in (0.5, 1.5):
            def one_sided(kernel=kernel, s=s):
                return verdict(run("one-sided", kernel, BesovParams(s=s), settings.one_sided_cap), s)
            checks[f"one-sided/{name}@s={s:g}"] = one_sided

    battery = standard_battery(settings.dim)
    for name, s, expect_admissible in (("gaussian", 0.7, True), ("centered-cube", 0.7, True),
                                       ("shifted-cube", 1.5, False)):
        def equivalence(kernel=battery[name], s=s, expect_admissible=expect_admissible):
            reports = run("equivalence", kernel, BesovParams(s=s), settings.ratio_cap)
            if not expect_admissible:
                return not reports[0].admissible, {"report": reports[0].to_json()}
            return verdict(reports, s)
        checks[f"equivalence/{name}@s={s:g}"] = equivalence
    return checks


def _all_checks(settings):
    checks = {}
    for factory in (_infrastructure_checks, _moment_checks, _extra_kernel_checks, _taylor_checks,
                    _dichotomy_checks, _keylem_checks, _schur_checks, _functional_checks,
                    _experiment_checks):
        checks.update(factory(settings))
    return checks


def _run_check(name, check):
    start = time.perf_counter()
    with add_context(check=name), time_this(log=_log, msg=f"Check {name}", level=logging.DEBUG):
        try:
            passed, detail = check()
        except Exception as e:
            _log.exception("Check %s raised.", name)
            passed, detail = False, {"error": f"{type(e).__name__}: {e}"}
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


def run_suite(settings: SuiteSettings | None = None, name_filter: str | None = None,
              threads: int | None = None) -> list[CheckResult]:
    """Run the verification checks.

    Parameters
    ----------
    settings : `SuiteSettings`, optional
        Sizes and thresholds.
    name_filter : `str`, optional
        Only run checks whose name contains this string.
    threads : `int`, optional
        The number of worker threads; defaults to `threads_from_environment`.

    Returns
    -------
    results : `list` [`CheckResult`]
        One result per check, in a fixed order independent of scheduling.
    """
    settings = settings or SuiteSettings()
    checks = {name: check for name, check in _all_checks(settings).items()
              if not name_filter or name_filter in name}
    threads = threads or threads_from_environment()
    _log.info("Running %d checks on %d threads.", len(checks), threads)
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {name: executor.submit(_run_check, name, check) for name, check in checks.items()}
        results = [futures[name].result() for name in checks]
    failed = [r.name for r in results if not r.passed]
    if failed:
        _log.warning("%d of %d checks failed: %s", len(failed), len(results), ", ".join(failed))
    return results


def suite_summary(results) -> astropy.table.Table:
    """Tabulate check names, verdicts and durations."""
    table = astropy.table.Table(rows=[(r.name, "PASS" if r.passed else "FAIL", r.duration) for r in results],
                                names=("check", "verdict", "duration"), dtype=(str, str, float))
    table["duration"].format = ".3f"
    return table


def junit_xml(results, suite_name: str = "besov-verify") -> str:
    """Render results as a JUnit-style XML document."""
    suite = ElementTree.Element("testsuite", name=suite_name, tests=str(len(results)),
                                failures=str(sum(not r.passed for r in results)))
    for r in results:
        case = ElementTree.SubElement(suite, "testcase", classname=r.name.split("/")[0], name=r.name,
                                      time=f"{r.duration:.3f}")
        if not r.passed:
            failure = ElementTree.SubElement(case, "failure", message="check failed")
            failure.text = repr(r.detail)
    return ElementTree.tostring(suite, encoding="unicode")


def experiment_summary(results) -> astropy.table.Table:
    """Tabulate the experiment checks with each kernel's Taylor fit.

    Returns
    -------
    table : `astropy.table.Table`
        Columns ``kernel_id``, ``s``, ``k0`` (-1 if unknown), ``slope``,
        ``min_ratio``, ``max_ratio`` and ``verdict``; one row per one-sided
        or equivalence check, in suite order.
    """
    taylor = {r.detail["kernel_id"]: r.detail for r in results
              if r.name.startswith("taylor/") and "kernel_id" in r.detail}
    rows = []
    for r in results:
        report = r.detail.get("report")
        if not (r.name.startswith(("one-sided/", "equivalence/")) and report):
            continue
        fit = taylor.get(report["kernel_id"], {})
        k0 = fit.get("predicted_k0", -1)
        rows.append((report["kernel_id"], report["params"]["s"], k0 if isinstance(k0, int) else -1,
                     fit.get("empirical_slope", math.nan), report["min_ratio"], report["max_ratio"],
                     "PASS" if r.passed else "FAIL"))
    names = ("kernel_id", "s", "k0", "slope", "min_ratio", "max_ratio", "verdict")
    table = astropy.table.Table(rows=rows or None, names=names,
                                dtype=(str, float, int, float, float, float, str))
    for name in ("s", "slope", "min_ratio", "max_ratio"):
        table[name].format = ".17g"
    return table
