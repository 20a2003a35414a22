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


__all__ = ["BesovError", "ConfigError", "GridMismatchError", "KernelHypothesisError",
           "ResolutionError", "RegressionError", "VerificationFailure",
           "AdmissibilityWarning", "exit_code_for",
           ]


class BesovError(Exception):
    """The base class for all failures raised by this package.

    This class is frequently used as an adapter for another exception, and
    exposes the ``nested`` field for this purpose.
    """

    exit_code = 1
    """The process exit code that the command line tool reports for this
    error (`int`).
    """

    @property
    def nested(self):
        """The exception nested inside this one (`BaseException`, read-only).

        This property is guaranteed non-raising, to make it easier to use
        inside exception handlers. If there is no nested exception, it is equal
        to `None`.
        """
        if self.__cause__:
            return self.__cause__
        elif self.__context__ and not self.__suppress_context__:
            return self.__context__
        else:
            return None


class ConfigError(BesovError, ValueError):
    """Exception raised if a configuration, kernel descriptor, or data file
    is malformed or contains unknown keys.
    """

    exit_code = 2


class GridMismatchError(BesovError, ValueError):
    """Exception raised if two operands are sampled on different grids.
    """

    exit_code = 2


class KernelHypothesisError(BesovError, ValueError):
    """Exception raised if a kernel violates a standing hypothesis, most
    commonly unit mass.
    """

    exit_code = 3


class ResolutionError(BesovError, RuntimeError):
    """Exception raised if a requested scale cannot be represented on the
    grid.

    Usually chained to an internal exception.
    """

    exit_code = 4


class RegressionError(BesovError, RuntimeError):
    """Exception raised if a decay fit has too few usable points.
    """

    exit_code = 4


class VerificationFailure(BesovError, AssertionError):
    """Exception raised if one or more verification checks failed.

    Parameters
    ----------
    message : `str`
        A human-readable description.
    failed : iterable [`str`], optional
        The names of the failing checks.
    """

    exit_code = 1

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = tuple(failed)


class AdmissibilityWarning(UserWarning):
    """Warning issued when a computation runs at a smoothness the kernel
    cannot characterize.
    """


def exit_code_for(error):
    """Map an exception to the command line tool's exit code.

    Parameters
    ----------
    error : `BaseException`
        The exception that terminated a command.

    Returns
    -------
    code : `int`
        1 for verification failures, 2 for configuration errors, 3 for kernel
        hypothesis violations, 4 for resolution errors. Other `ValueError`
        instances are treated as configuration errors.
    """
    if isinstance(error, BesovError):
        return error.exit_code
    if isinstance(error, ValueError):
        return 2
    return 1
