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


"""Structured logging for the command line tool.

Library modules only emit records. `setup_besov_logger` turns every record
into one JSON line on stderr, tagged with the run context set by
`add_context`.
"""


__all__ = ["LOG_LEVELS_ENV", "DEFAULT_LEVELS", "parse_log_levels", "setup_besov_logger", "add_context",
           "current_context", "BesovJsonFormatter", "RecordFactoryContextAdapter",
           ]

import collections.abc
import contextlib
import contextvars
import enum
import json
import logging
import math
import os
import types

import numpy

from besov.exception import ConfigError


LOG_LEVELS_ENV = "BESOV_LOG_LEVELS"
"""The environment variable holding ``logger=LEVEL`` overrides (`str`).
"""

DEFAULT_LEVELS = types.MappingProxyType({None: logging.WARNING, "lsst": logging.INFO})
"""Levels applied before any override (mapping [`str` or `None`, `int`]).

Third-party output is limited to warnings; this package logs at INFO.
"""

_CONTEXT = contextvars.ContextVar("besov_logging_context", default=types.MappingProxyType({}))


def parse_log_levels(spec: str) -> dict[str | None, int]:
    """Parse space-separated ``logger=LEVEL`` pairs.

    Parameters
    ----------
    spec : `str`
        The pairs. A logger named ``.`` is the root logger; level names are
        case-insensitive.

    Returns
    -------
    levels : `dict` [`str` or `None`, `int`]
        The level for each logger, with `None` for the root logger. Later
        pairs win.

    Raises
    ------
    besov.exception.ConfigError
        Raised if a pair is malformed or names an unknown level.

    Examples
    --------
    >>> parse_log_levels("lsst.besov.rate=debug .=ERROR")
    {'lsst.besov.rate': 10, None: 40}
    """
    levels = {}
    for pair in spec.split():
        name, sep, level_name = pair.partition("=")
        if not sep or not name or not level_name:
            raise ConfigError(f"{LOG_LEVELS_ENV} entries must look like logger=LEVEL, got {pair!r}.")
        level = logging.getLevelName(level_name.upper())
        if not isinstance(level, int):
            raise ConfigError(f"Unknown log level {level_name!r} in {LOG_LEVELS_ENV}.")
        levels[None if name == "." else name] = level
    return levels


def setup_besov_logger(labels=None, stream=None) -> logging.Handler:
    """Configure global logging for the command line tool.

    This installs `RecordFactoryContextAdapter`, replaces the root handlers
    with one JSON handler, routes `warnings` through logging and applies
    `DEFAULT_LEVELS` followed by ``$BESOV_LOG_LEVELS``. Call it once, from the
    main thread.

    Parameters
    ----------
    labels : mapping [`str`], optional
        Static fields added to every line, e.g., the tool name.
    stream : file-like, optional
        The destination; defaults to `sys.stderr`.

    Returns
    -------
    handler : `logging.Handler`
        The root logger's handler.
    """
    levels = dict(DEFAULT_LEVELS) | parse_log_levels(os.environ.get(LOG_LEVELS_ENV, ""))
    factory = logging.getLogRecordFactory()
    if not isinstance(factory, RecordFactoryContextAdapter):
        logging.setLogRecordFactory(RecordFactoryContextAdapter(factory))
    handler = logging.StreamHandler(stream)
    handler.setFormatter(BesovJsonFormatter(labels))
    logging.basicConfig(handlers=[handler], force=True)
    logging.captureWarnings(True)
    for name, level in levels.items():
        logging.getLogger(name).setLevel(level)
    return handler


def current_context() -> collections.abc.Mapping:
    """Return the context active in this thread (read-only mapping)."""
    return _CONTEXT.get()


@contextlib.contextmanager
def add_context(**context):
    """Attach run context to all records emitted inside the block.

    Blocks nest, inner values winning. Each thread starts with an empty
    context, so worker threads never see each other's values. Exceptions
    escaping the block carry a ``logging_context`` attribute with the context
    at the raise point.

    Records only carry the context once `RecordFactoryContextAdapter` is the
    global record factory; without it the block has no visible effect.

    Parameters
    ----------
    context
        The keys and values to add.

    Examples
    --------
    >>> with add_context(kernel="cube(-0.5..0.5)"):
    ...     with add_context(s=1.5):
    ...         dict(current_context())
    {'kernel': 'cube(-0.5..0.5)', 's': 1.5}
    """
    token = _CONTEXT.set(types.MappingProxyType(dict(_CONTEXT.get()) | context))
    try:
        yield
    except BaseException as e:
        # The innermost block sees the fullest context.
        if not hasattr(e, "logging_context"):
            e.logging_context = dict(_CONTEXT.get())
        raise
    finally:
        _CONTEXT.reset(token)


class RecordFactoryContextAdapter:
    """A log record factory that copies the active `add_context` values into
    a ``logging_context`` attribute.

    For records logged with exception info, the context attached to the
    exception is merged in, so a failure logged outside its block still
    reports where it happened.

    Parameters
    ----------
    factory : callable
        The record factory to wrap (see `logging.setLogRecordFactory`).
    """

    def __init__(self, factory):
        self._wrapped = factory

    def __call__(self, *args, **kwargs):
        record = self._wrapped(*args, **kwargs)
        context = dict(_CONTEXT.get())
        if record.exc_info:
            context |= getattr(record.exc_info[1], "logging_context", {})
        record.logging_context = context
        return record


class BesovJsonFormatter(logging.Formatter):
    """Format each record as one JSON object.

    Fixed record fields come first, then the static labels, then the
    record's ``logging_context``; later sources win on key clashes.
    Non-finite floats are written as the strings ``"inf"``, ``"-inf"`` and
    ``"nan"`` so that every line is strict JSON.

    Parameters
    ----------
    labels : mapping [`str`], optional
        Static fields added to every line.
    """

    _FIELDS = {"funcName": "funcName", "level": "levelname", "lineno": "lineno", "name": "name",
               "pathname": "pathname", "process": "process", "thread": "thread"}

    def __init__(self, labels=None):
        super().__init__()
        self._labels = dict(labels or {})

    def format(self, record):
        record.message = record.getMessage()
        entry = {key: getattr(record, attribute) for key, attribute in self._FIELDS.items()}
        entry["asctime"] = self.formatTime(record, "%Y-%m-%dT%H:%M:%S") + f".{int(record.msecs):03d}"
        entry["message"] = record.message
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        if record.stack_info:
            entry["stack"] = self.formatStack(record.stack_info)
        entry.update(self._labels)
        entry.update(getattr(record, "logging_context", {}))
        return json.dumps(_plain(entry), allow_nan=False)


def _plain(value):
    """Convert ``value`` to builtin JSON types."""
    match value:
        case str() | bool() | int() | None:
            return value
        case float():
            return value if math.isfinite(value) else repr(value)
        case enum.Enum():
            return _plain(value.value)
        case numpy.ndarray() | numpy.generic():
            return _plain(value.tolist())
        case collections.abc.Mapping():
            return {str(k): _plain(v) for k, v in value.items()}
        case collections.abc.Collection():
            return [_plain(v) for v in value]
        case _:
            return repr(value)
