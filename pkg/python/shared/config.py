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


__all__ = ["RunConfig", "GridSection", "BesovSection", "EpsilonGridSection", "FilterBankSection",
           "MomentsSection", "EtaTestSection", "RateProfileSection",
           "VerifySection", "parse_override", "apply_overrides", "DEFAULTS",
           ]


import collections.abc
import copy
import dataclasses
import json
import math
import os
import typing

import yaml

from besov.exception import ConfigError


DEFAULTS = {
    "grid": {"dim": 1, "extent": 16.0, "points_per_axis": 1024},
    "kernel": {"kind": "gaussian", "variance": 1.0},
    "function": {"kind": "gaussian", "variance": 1.0},
    "besov": {"s": 0.7, "p": 2, "q": 2},
    "epsilon_grid": {"j_max": 8, "samples_per_block": 4},
    "filter_bank": {"delta_in": 0.1, "delta_out": 0.1},
    "moments": {"k_max": 6, "tolerance": None, "fractional": [0.5, 1.0, 1.5]},
    "eta_test": {"s": 1.5, "levels": 16, "samples": 4, "tail_share": 0.01},
    "rate_profile": {"fit_range": [2.0**-7, 2.0**-2], "from_profile": None},
    "verify": {"filter": None, "extra_kernels": [], "ratio_cap": 100.0, "one_sided_cap": 1000.0, "seed": 0},
    "output": None,
}
"""The default configuration document (mapping [`str`]).
"""

# Sections whose value is replaced wholesale rather than merged key by key.
_OPAQUE = {"kernel", "function", "output"}


@dataclasses.dataclass(frozen=True, kw_only=True)
class GridSection:
    dim: int
    extent: float
    points_per_axis: int


@dataclasses.dataclass(frozen=True, kw_only=True)
class BesovSection:
    """Besov indices; ``p`` and ``q`` are numbers or ``"inf"``."""

    s: float
    p: float | str
    q: float | str


@dataclasses.dataclass(frozen=True, kw_only=True)
class EpsilonGridSection:
    j_max: int
    samples_per_block: int


@dataclasses.dataclass(frozen=True, kw_only=True)
class FilterBankSection:
    delta_in: float
    delta_out: float


@dataclasses.dataclass(frozen=True, kw_only=True)
class MomentsSection:
    k_max: int
    tolerance: float | None
    fractional: tuple[float, ...]


@dataclasses.dataclass(frozen=True, kw_only=True)
class EtaTestSection:
    s: float
    levels: int
    samples: int
    tail_share: float


@dataclasses.dataclass(frozen=True, kw_only=True)
class RateProfileSection:
    fit_range: tuple[float, float]
    from_profile: str | None


@dataclasses.dataclass(frozen=True, kw_only=True)
class VerifySection:
    filter: str | None
    extra_kernels: tuple[typing.Any, ...]
    ratio_cap: float
    one_sided_cap: float
    seed: int


def parse_override(override: str) -> tuple[list[str], typing.Any]:
    """Split a ``dotted.path=value`` override.

    The value is parsed as JSON when possible and kept as a string otherwise.

    Raises
    ------
    ConfigError
        Raised if the override has no ``=`` or an empty path.
    """
    path, sep, raw = override.partition("=")
    keys = path.strip().split(".")
    if not sep or not all(keys):
        raise ConfigError(f"Overrides must have the form dotted.path=value, got {override!r}.")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_overrides(document: collections.abc.Mapping, overrides: collections.abc.Iterable[str]) -> dict:
    """Return a copy of a document with overrides applied.

    Parameters
    ----------
    document : mapping [`str`]
        A full configuration document, defaults included.
    overrides : iterable [`str`]
        ``dotted.path=value`` strings, applied in order.

    Raises
    ------
    ConfigError
        Raised if an override names a path that does not exist.
    """
    result = copy.deepcopy(dict(document))
    for override in overrides:
        keys, value = parse_override(override)
        node = result
        for depth, key in enumerate(keys[:-1]):
            if not isinstance(node, collections.abc.MutableMapping) or key not in node:
                raise ConfigError(f"Cannot override {'.'.join(keys)}: no {'.'.join(keys[:depth + 1])}.")
            node = node[key]
        if not isinstance(node, collections.abc.MutableMapping) or keys[-1] not in node:
            raise ConfigError(f"Cannot override {'.'.join(keys)}: no such setting.")
        node[keys[-1]] = value
    return result


def _merge_defaults(document):
    if not isinstance(document, collections.abc.Mapping):
        raise ConfigError(f"A configuration must be a mapping, got {type(document).__name__}.")
    unknown = document.keys() - DEFAULTS.keys()
    if unknown:
        raise ConfigError(f"Got unexpected keywords: {unknown}")
    merged = copy.deepcopy(DEFAULTS)
    for name, value in document.items():
        if name in _OPAQUE or value is None:
            merged[name] = copy.deepcopy(value)
        elif isinstance(value, collections.abc.Mapping):
            merged[name].update(copy.deepcopy(dict(value)))
        else:
            raise ConfigError(f"Section {name!r} must be a mapping, got {value!r}.")
    return merged


class RunConfig:
    """A validated run configuration for the ``besov_smoothness`` tool.

    Parameters
    ----------
    document : mapping [`str`]
        A configuration document. Missing sections and keys take the values
        in `DEFAULTS`; unknown ones are rejected.
    base_dir : `str`, optional
        The directory against which relative file paths in the ``kernel``,
        ``function`` and ``rate_profile.from_profile`` settings are resolved.

    Raises
    ------
    ConfigError
        Raised if the document is malformed or has unknown keys.

    Examples
    --------
    >>> config = RunConfig({"besov": {"s": 1.5, "q": "inf"}})
    >>> config.besov
    BesovSection(s=1.5, p=2, q='inf')
    >>> config.eta_test.levels
    16
    """

    def __init__(self, document: collections.abc.Mapping, base_dir: str = ""):
        self._document = _merge_defaults(document)
        self.base_dir = base_dir
        sections = copy.deepcopy(self._document)
        try:
            self.grid = self._parse_grid(sections.pop("grid"))
            self.kernel = self._parse_descriptor(sections.pop("kernel"), "kernel")
            self.function = self._parse_descriptor(sections.pop("function"), "function")
            self.besov = self._parse_besov(sections.pop("besov"))
            self.epsilon_grid = self._parse_epsilon_grid(sections.pop("epsilon_grid"))
            self.filter_bank = self._parse_filter_bank(sections.pop("filter_bank"))
            self.moments = self._parse_moments(sections.pop("moments"))
            self.eta_test = self._parse_eta_test(sections.pop("eta_test"))
            self.rate_profile = self._parse_rate_profile(sections.pop("rate_profile"))
            self.verify = self._parse_verify(sections.pop("verify"))
            self._output = self._parse_output(sections.pop("output"))
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid configuration: {e}") from e
        except KeyError as e:
            raise ConfigError(f"Configuration is missing {e}.") from e

    @property
    def output(self) -> str | None:
        """The report directory, or `None` (read-only; set it with an
        ``output=...`` override).
        """
        return self._output

    @classmethod
    def from_file(cls, path: str, overrides: collections.abc.Iterable[str] = ()) -> "RunConfig":
        """Load a JSON or YAML configuration file.

        The format is chosen by the suffix: ``.yaml`` and ``.yml`` files are
        YAML, anything else JSON.

        Raises
        ------
        ConfigError
            Raised if the file cannot be read or parsed, or is invalid.
        """
        try:
            with open(path, encoding="utf-8") as file:
                if os.path.splitext(path)[1].lower() in (".yaml", ".yml"):
                    document = yaml.safe_load(file)
                else:
                    document = json.load(file)
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Could not read configuration {path}.") from e
        return cls.from_document(document or {}, overrides, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_document(cls, document: collections.abc.Mapping, overrides: collections.abc.Iterable[str] = (),
                      base_dir: str = "") -> "RunConfig":
        """Build a configuration from a document and ``--set`` overrides."""
        return cls(apply_overrides(_merge_defaults(document), overrides), base_dir=base_dir)

    def to_json(self) -> dict:
        """Return the full document, defaults included."""
        return copy.deepcopy(self._document)

    def resolve_path(self, path: str) -> str:
        """Resolve a file path from the configuration."""
        path = os.path.expandvars(path)
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @staticmethod
    def _parse_grid(node):
        specs = dict(node)
        section = GridSection(dim=int(specs.pop("dim")), extent=float(specs.pop("extent")),
                              points_per_axis=int(specs.pop("points_per_axis")))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return section

    @staticmethod
    def _parse_descriptor(node, name):
        if isinstance(node, str):
            return node
        if isinstance(node, collections.abc.Mapping) and "kind" in node:
            return dict(node)
        raise ConfigError(f"{name} must be a file path or a mapping with a 'kind', got {node!r}.")

    @staticmethod
    def _parse_exponent(value):
        if isinstance(value, str):
            if value.strip().lower() in ("inf", "infinity"):
                return "inf"
            raise ConfigError(f"Exponents must be numbers or 'inf', got {value!r}.")
        return float(value)

    @classmethod
    def _parse_besov(cls, node):
        specs = dict(node)
        s = float(specs.pop("s"))
        # Keep integral exponents readable in reports.
        p, q = (int(e) if isinstance(e, float) and e.is_integer() else e
                for e in (cls._parse_exponent(specs.pop("p")), cls._parse_exponent(specs.pop("q"))))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return BesovSection(s=s, p=p, q=q)

    @staticmethod
    def _parse_epsilon_grid(node):
        specs = dict(node)
        section = EpsilonGridSection(j_max=int(specs.pop("j_max")),
                                     samples_per_block=int(specs.pop("samples_per_block")))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return section

    @staticmethod
    def _parse_filter_bank(node):
        specs = dict(node)
        section = FilterBankSection(delta_in=float(specs.pop("delta_in")),
                                    delta_out=float(specs.pop("delta_out")))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return section

    @staticmethod
    def _parse_moments(node):
        specs = dict(node)
        tolerance = specs.pop("tolerance")
        fractional = specs.pop("fractional")
        if isinstance(fractional, (str, bytes)) or not isinstance(fractional, collections.abc.Sequence):
            raise ConfigError(f"moments.fractional must be a list, got {fractional!r}.")
        section = MomentsSection(k_max=int(specs.pop("k_max")),
                                 tolerance=None if tolerance is None else float(tolerance),
                                 fractional=tuple(float(s) for s in fractional))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return section

    @staticmethod
    def _parse_eta_test(node):
        specs = dict(node)
        section = EtaTestSection(s=float(specs.pop("s")), levels=int(specs.pop("levels")),
                                 samples=int(specs.pop("samples")), tail_share=float(specs.pop("tail_share")))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        if not 0.0 < section.tail_share < 1.0:
            raise ConfigError(f"eta_test.tail_share must be in (0, 1), got {section.tail_share}.")
        return section

    @staticmethod
    def _parse_rate_profile(node):
        specs = dict(node)
        fit_range = tuple(float(e) for e in specs.pop("fit_range"))
        if len(fit_range) != 2 or not all(0.0 < e <= 1.0 and math.isfinite(e) for e in fit_range):
            raise ConfigError(f"rate_profile.fit_range must be two scales in (0, 1], got {fit_range}.")
        from_profile = specs.pop("from_profile")
        section = RateProfileSection(fit_range=fit_range,
                                     from_profile=None if from_profile is None else str(from_profile))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return section

    @staticmethod
    def _parse_verify(node):
        specs = dict(node)
        name_filter = specs.pop("filter")
        extra = specs.pop("extra_kernels")
        if isinstance(extra, (str, bytes)) or not isinstance(extra, collections.abc.Sequence):
            raise ConfigError(f"verify.extra_kernels must be a list, got {extra!r}.")
        section = VerifySection(filter=None if name_filter is None else str(name_filter),
                                extra_kernels=tuple(extra), ratio_cap=float(specs.pop("ratio_cap")),
                                one_sided_cap=float(specs.pop("one_sided_cap")), seed=int(specs.pop("seed")))
        if specs:
            raise ConfigError(f"Got unexpected keywords: {specs.keys()}")
        return section

    @staticmethod
    def _parse_output(node):
        if node is None or isinstance(node, str):
            return node
        raise ConfigError(f"output must be a directory path or null, got {node!r}.")
