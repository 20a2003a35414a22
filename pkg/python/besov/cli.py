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


"""Command-line entry point for mollifier and Besov smoothness diagnostics.

Each subcommand reads one configuration (JSON or YAML, with ``--set``
overrides), runs one computation and prints a deterministic JSON report. If
an output directory is configured, reports and tables are also written there
with a timestamped ``.meta.json`` sidecar.
"""


__all__ = ["main", "cmd_analyze_mollifier", "cmd_besov_norm", "cmd_rate_profile", "cmd_eta_test",
           "cmd_keylem", "cmd_verify", "load_function", "load_kernel_setting",
           ]


import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import warnings

import astropy.table
import yaml

from shared.config import RunConfig
from shared.gridio import dumps_report, read_grid_function, write_report, write_table
from shared.logger import add_context, setup_besov_logger
from .exception import AdmissibilityWarning, BesovError, ConfigError, VerificationFailure, exit_code_for
from .grid import GridFunction, GridSpec, lp_norm
from .kernels import MollifierSpec, MomentOrder, classify_admissibility, load_kernel, moment_report, \
    smallest_nonzero_moment
from .littlewood_paley import BesovParams, GaussianDerivative, besov_norm, build_filter_bank
from .rate import EpsilonGrid, RateProfile, decay_exponent, eta_test, keylem_diagnostic, \
    mollifier_functional, rate_profile, uniform_keylem
from .verify import SuiteSettings, experiment_summary, generate_function, junit_xml, norm_ratio, run_suite, \
    suite_summary


_log = logging.getLogger("lsst." + __name__)
_log.setLevel(logging.DEBUG)


def _make_parser():
    parser = argparse.ArgumentParser(prog="besov_smoothness", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--config",
        help="A JSON or YAML run configuration. Missing settings take their defaults.",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="Override one configuration setting by dotted path, e.g., besov.s=1.5. "
             "Values are parsed as JSON if possible. May be repeated.",
    )
    parser.add_argument(
        "--output",
        help="A directory for report files, overriding the configured one.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("analyze-mollifier", help="Report a kernel's moments and admissible range.")
    commands.add_parser("besov-norm", help="Compare the Littlewood-Paley and mollifier Besov norms.")
    profile = commands.add_parser("rate-profile", help="Tabulate ||f - f*rho_eps||_p and fit its decay.")
    profile.add_argument(
        "--from-profile",
        help="Re-fit a stored epsilon,deviation CSV instead of computing a profile.",
    )
    commands.add_parser("eta-test", help="Test a kernel's admissibility at the configured smoothness.")
    commands.add_parser("keylem", help="Track ||rho * psi_eps||_1 for a mean-zero filter.")
    verify = commands.add_parser("verify", help="Run the verification suite.")
    verify.add_argument(
        "--filter",
        help="Only run checks whose name contains this string.",
    )
    return parser


def _load_config(args):
    overrides = list(args.overrides)
    if getattr(args, "filter", None) is not None:
        overrides.append(f"verify.filter={json.dumps(args.filter)}")
    if getattr(args, "from_profile", None) is not None:
        overrides.append(f"rate_profile.from_profile={json.dumps(args.from_profile)}")
    if args.output is not None:
        overrides.append(f"output={json.dumps(args.output)}")
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_document({}, overrides, base_dir=os.getcwd())


def _read_document(path):
    try:
        with open(path, encoding="utf-8") as file:
            if os.path.splitext(path)[1].lower() in (".yaml", ".yml"):
                return yaml.safe_load(file)
            return json.load(file)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not read descriptor {path}.") from e


def load_kernel_setting(config: RunConfig, dim: int) -> MollifierSpec:
    """Build the configured kernel from an inline descriptor or a file."""
    if isinstance(config.kernel, str):
        path = config.resolve_path(config.kernel)
        return load_kernel(_read_document(path), dim, os.path.dirname(path))
    return load_kernel(config.kernel, dim, config.base_dir)


def load_function(config: RunConfig) -> GridFunction:
    """Build the configured function.

    Generator descriptors are sampled on the configured grid; BGF1 files
    carry their own grid and CSV files take the configured extent.
    """
    if isinstance(config.function, str):
        return read_grid_function(config.resolve_path(config.function), extent=config.grid.extent)
    return generate_function(GridSpec(**dataclasses.asdict(config.grid)), config.function).function


def _k0_json(k0):
    return k0.value if isinstance(k0, MomentOrder) else k0


def cmd_analyze_mollifier(config: RunConfig) -> dict:
    """Report a kernel's moments, ``k0`` and admissible interval."""
    spec = GridSpec(**dataclasses.asdict(config.grid))
    kernel = load_kernel_setting(config, spec.dim)
    report = moment_report(kernel, spec, k_max=config.moments.k_max, s_values=config.moments.fractional,
                           tol=config.moments.tolerance)
    verdict = classify_admissibility(kernel, report)
    return {"kernel": kernel.describe(), "moments": report.to_json(), "admissibility": verdict.to_json()}


def _warn_if_inadmissible(kernel, spec, s, k_max):
    k0 = smallest_nonzero_moment(kernel, spec, k_max)
    if s >= float(k0):
        warnings.warn(f"s={s:g} is not below k0={_k0_json(k0)} for kernel {kernel.kernel_id}; "
                      "the mollifier functional does not characterize this smoothness.",
                      AdmissibilityWarning, stacklevel=2)
        return False
    return True


def cmd_besov_norm(config: RunConfig) -> dict:
    """Compute the Littlewood-Paley and mollifier-based norms and their
    ratio.
    """
    f = load_function(config)
    kernel = load_kernel_setting(config, f.spec.dim)
    params = BesovParams(**dataclasses.asdict(config.besov))
    admissible = _warn_if_inadmissible(kernel, f.spec, params.s, config.moments.k_max)
    bank = build_filter_bank(f.spec, config.filter_bank.delta_in, config.filter_bank.delta_out)
    grid = EpsilonGrid(**dataclasses.asdict(config.epsilon_grid))
    besov = besov_norm(f, bank, params)
    lp = lp_norm(f, params.p)
    functional = mollifier_functional(f, kernel, params, grid)
    if math.isinf(params.q):
        mollifier_norm = max(lp, functional.value)
    else:
        mollifier_norm = (lp**params.q + functional.value) ** (1.0 / params.q)
    return {
        "function_id": f.label,
        "kernel_id": kernel.kernel_id,
        "params": params.to_json(),
        "lp_besov_norm": besov.value,
        "mollifier_functional_norm": mollifier_norm,
        "ratio": norm_ratio(besov.value, lp, functional.value, params.q),
        "admissible": admissible,
        "truncation_diagnostics": {"besov": besov.to_json(), "functional": functional.to_json()},
    }


def cmd_rate_profile(config: RunConfig) -> tuple[RateProfile, dict]:
    """Compute or reload a rate profile and fit its decay exponent."""
    p = config.besov.p
    stored = config.rate_profile.from_profile
    if stored:
        path = config.resolve_path(stored)
        try:
            table = astropy.table.Table.read(path, format="ascii.csv")
        except (OSError, ValueError) as e:
            raise ConfigError(f"Could not read profile {path}.") from e
        profile = RateProfile.from_table(table, p=p)
    else:
        f = load_function(config)
        kernel = load_kernel_setting(config, f.spec.dim)
        profile = rate_profile(f, kernel, p, EpsilonGrid(**dataclasses.asdict(config.epsilon_grid)))
    fit = decay_exponent(profile, config.rate_profile.fit_range)
    return profile, {"kernel_id": profile.kernel_id, "function_id": profile.function_id, "p": profile.p,
                     "fit_range": list(config.rate_profile.fit_range), "fit": fit.to_json()}


def cmd_eta_test(config: RunConfig) -> dict:
    """Run the eta test of the configured kernel at ``eta_test.s``."""
    eta = load_function(config)
    kernel = load_kernel_setting(config, eta.spec.dim)
    section = config.eta_test
    report = eta_test(kernel, eta, section.s, levels=section.levels, samples=section.samples,
                      tail_share=section.tail_share)
    return report.to_json()


def cmd_keylem(config: RunConfig) -> dict:
    """Track ``||rho * psi_eps||_1`` for a Gaussian-derivative filter."""
    spec = GridSpec(**dataclasses.asdict(config.grid))
    kernel = load_kernel_setting(config, spec.dim)
    psi = GaussianDerivative(dim=spec.dim)
    grid = EpsilonGrid(**dataclasses.asdict(config.epsilon_grid))
    result = {"diagnostic": keylem_diagnostic(kernel, psi, grid, spec).to_json()}
    if kernel.is_analytic:
        result["uniform"] = uniform_keylem(kernel, psi, grid, spec).to_json()
    return result


def cmd_verify(config: RunConfig):
    """Run the verification suite.

    Returns
    -------
    results : `list` [`besov.verify.CheckResult`]
        The check results, in suite order.
    """
    section = config.verify
    settings = SuiteSettings(dim=config.grid.dim, ratio_cap=section.ratio_cap,
                             one_sided_cap=section.one_sided_cap, extra_kernels=section.extra_kernels,
                             seed=section.seed, base_dir=config.base_dir)
    return run_suite(settings, section.filter)


def _emit(payload, config, name):
    sys.stdout.write(dumps_report(payload))
    if config.output:
        write_report(payload, config.output, name)


def _run(args, config):
    match args.command:
        case "analyze-mollifier":
            _emit(cmd_analyze_mollifier(config), config, "analyze_mollifier")
        case "besov-norm":
            _emit(cmd_besov_norm(config), config, "besov_norm")
        case "rate-profile":
            profile, fit = cmd_rate_profile(config)
            _emit(dict(fit, profile=profile.to_table().as_array().tolist()), config, "rate_profile_fit")
            if config.output:
                write_table(profile.to_table(), config.output, "rate_profile")
        case "eta-test":
            _emit(cmd_eta_test(config), config, "eta_test")
        case "keylem":
            _emit(cmd_keylem(config), config, "keylem")
        case "verify":
            results = cmd_verify(config)
            sys.stdout.write("\n".join(suite_summary(results).pformat(max_lines=-1, max_width=-1)) + "\n")
            if config.output:
                write_report({r.name: {"passed": r.passed, "detail": r.detail} for r in results},
                             config.output, "verify")
                write_table(experiment_summary(results), config.output, "verify_summary")
                with open(os.path.join(config.output, "verify.junit.xml"), "w", encoding="utf-8") as file:
                    file.write(junit_xml(results))
            failed = [r.name for r in results if not r.passed]
            if failed:
                raise VerificationFailure(f"Failed checks: {', '.join(failed)}", failed)


def main(argv=None) -> int:
    """Run the command line tool.

    Parameters
    ----------
    argv : sequence [`str`], optional
        The arguments, excluding the program name; defaults to `sys.argv`.

    Returns
    -------
    code : `int`
        0 on success, 1 on a verification failure, 2 on a configuration
        error, 3 on a kernel hypothesis violation and 4 on a resolution
        error.
    """
    args = _make_parser().parse_args(argv)
    try:
        setup_besov_logger(labels={"tool": "besov_smoothness"})
        config = _load_config(args)
        with add_context(command=args.command):
            _run(args, config)
    except (BesovError, ValueError) as e:
        _log.error("%s failed: %s", args.command, e)
        sys.stderr.write(f"{type(e).__name__}: {e}\n")
        return exit_code_for(e)
    return 0
