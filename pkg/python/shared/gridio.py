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


__all__ = ["BGF1_MAGIC", "BGF1_VERSION", "write_bgf1", "read_bgf1", "read_csv_grid", "read_grid_function",
           "dumps_report", "write_report", "write_table", "write_meta",
           ]


import collections.abc
import importlib.metadata
import json
import logging
import math
import os
import struct

import astropy.table
import astropy.time
import numpy

from besov.exception import ConfigError
from besov.grid import GridFunction, GridSpec


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)


BGF1_MAGIC = b"BGF1"
BGF1_VERSION = 1
_HEADER = struct.Struct("<4sI8x")
_SHAPE = struct.Struct("<IId")
_SAMPLE = numpy.dtype("<f8")


def write_bgf1(f: GridFunction, path: str):
    """Write a grid function in the BGF1 binary format.

    The file is a 16-byte header (magic ``BGF1``, little-endian u32 version,
    8 zero bytes), then u32 dimension, u32 points per axis, f64 extent and
    the samples as little-endian f64 in row-major order.
    """
    spec = f.spec
    with open(path, "wb") as file:
        file.write(_HEADER.pack(BGF1_MAGIC, BGF1_VERSION))
        file.write(_SHAPE.pack(spec.dim, spec.points_per_axis, spec.extent))
        file.write(numpy.ascontiguousarray(f.values, dtype=_SAMPLE).tobytes())


def read_bgf1(path: str, label: str | None = None) -> GridFunction:
    """Read a BGF1 file.

    Raises
    ------
    ConfigError
        Raised if the file is unreadable, truncated, or not BGF1.
    """
    try:
        with open(path, "rb") as file:
            data = file.read()
    except OSError as e:
        raise ConfigError(f"Could not read grid file {path}.") from e
    header_size = _HEADER.size + _SHAPE.size
    if len(data) < header_size:
        raise ConfigError(f"{path} is too short to be a BGF1 file.")
    magic, version = _HEADER.unpack_from(data)
    if magic != BGF1_MAGIC:
        raise ConfigError(f"{path} is not a BGF1 file (magic {magic!r}).")
    if version != BGF1_VERSION:
        raise ConfigError(f"{path} has unsupported BGF1 version {version}.")
    dim, points, extent = _SHAPE.unpack_from(data, _HEADER.size)
    spec = GridSpec(dim=dim, extent=extent, points_per_axis=points)
    expected = math.prod(spec.shape) * _SAMPLE.itemsize
    if len(data) - header_size != expected:
        raise ConfigError(f"{path} holds {len(data) - header_size} bytes of samples, expected {expected}.")
    values = numpy.frombuffer(data, dtype=_SAMPLE, offset=header_size).reshape(spec.shape)
    return GridFunction(spec, values, label=label if label is not None else os.path.basename(path))


def read_csv_grid(path: str, extent: float, label: str | None = None) -> GridFunction:
    """Read samples from a CSV file.

    One value per line gives a 1D function; ``N`` lines of ``N``
    comma-separated values give a 2D one. The file carries no geometry, so
    the extent must be supplied.

    Raises
    ------
    ConfigError
        Raised if the file is unreadable or not a valid grid.
    """
    try:
        values = numpy.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"Could not read CSV grid {path}.") from e
    if values.shape[1] == 1:
        values = values[:, 0]
        spec = GridSpec(dim=1, extent=extent, points_per_axis=values.shape[0])
    elif values.shape[0] == values.shape[1]:
        spec = GridSpec(dim=2, extent=extent, points_per_axis=values.shape[0])
    else:
        raise ConfigError(f"{path} has shape {values.shape}; expected N values or an N by N table.")
    return GridFunction(spec, values, label=label if label is not None else os.path.basename(path))


def read_grid_function(path: str, extent: float | None = None, label: str | None = None) -> GridFunction:
    """Read a grid function, choosing the format by suffix.

    ``.csv`` files need ``extent``; anything else is read as BGF1.
    """
    if os.path.splitext(path)[1].lower() == ".csv":
        if extent is None:
            raise ConfigError(f"Reading {path} needs the domain extent.")
        return read_csv_grid(path, extent, label)
    return read_bgf1(path, label)


def _sanitize(value):
    """Convert a report into JSON-ready builtins."""
    match value:
        case bool() | None | str():
            return value
        case numpy.bool_():
            return bool(value)
        case int() | numpy.integer():
            return int(value)
        case float() | numpy.floating():
            value = float(value)
            if math.isnan(value):
                return "nan"
            if math.isinf(value):
                return "inf" if value > 0 else "-inf"
            return value
        case numpy.ndarray():
            return [_sanitize(v) for v in value.tolist()]
        case collections.abc.Mapping():
            return {str(k): _sanitize(v) for k, v in value.items()}
        case collections.abc.Iterable():
            return [_sanitize(v) for v in value]
        case _:
            raise TypeError(f"Cannot serialize {value!r} ({type(value).__name__}).")


def dumps_report(report) -> str:
    """Serialize a report deterministically.

    Keys are sorted and floats use the shortest repr that round-trips.
    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.

    Parameters
    ----------
    report
        A mapping, sequence or scalar of builtin or numpy types, or an object
        with a ``to_json`` method.
    """
    if hasattr(report, "to_json"):
        report = report.to_json()
    return json.dumps(_sanitize(report), sort_keys=True, indent=2) + "\n"


def write_report(report, directory: str, name: str) -> str:
    """Write a report as ``<directory>/<name>.json`` with a sidecar."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{name}.json")
    with open(path, "w", encoding="utf-8") as file:
        file.write(dumps_report(report))
    write_meta(path)
    _log.info("Wrote %s.", path)
    return path


def write_table(table: astropy.table.Table, directory: str, name: str) -> str:
    """Write a table as ``<directory>/<name>.csv`` with a sidecar.

    Table metadata goes into the sidecar, not the CSV.
    """
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{name}.csv")
    meta = dict(table.meta)
    bare = astropy.table.Table(table, copy=False, meta={})
    bare.write(path, format="ascii.csv", overwrite=True)
    write_meta(path, meta)
    _log.info("Wrote %s.", path)
    return path


def _version(package):
    try:
        return importlib.metadata.version(package)
    except importlib.metadata.PackageNotFoundError:
        return None


def write_meta(path: str, extra: collections.abc.Mapping | None = None) -> str:
    """Write the timestamp sidecar ``<stem>.meta.json`` for an output file."""
    meta = {"file": os.path.basename(path),
            "created": astropy.time.Time.now().utc.isot,
            "versions": {pkg: _version(pkg) for pkg in ("besov-mollifiers", "numpy", "scipy", "astropy")},
            }
    if extra:
        meta["meta"] = dict(extra)
    meta_path = os.path.splitext(path)[0] + ".meta.json"
    with open(meta_path, "w", encoding="utf-8") as file:
        file.write(dumps_report(meta))
    return meta_path
