#! /usr/bin/env python3
"""
Tariff network equilibrium tool.

Solves the tariff equilibrium of a multi-country single-good economy read
from a scenario file, reports welfare, sweeps one tariff across a grid,
checks candidate flows against destination selection and tests whether a
trade network is acyclic.

"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from typing import Optional, TextIO

import numpy as np
from rich.console import Console
from rich.markdown import Markdown

import Scenario
from ArgparseUtils import (RawDescriptionHelpFormatterWithLineWrap,
                           nonnegative_float, positive_int)
from Curves import EconomyValidationError
from Equilibrium import (ConvergenceError, EnumerationLimitError,
                         IndeterminatePatternError, InfeasiblePatternError,
                         SolverMethod, SolverOptions, SolverOptionsError, solve,
                         equilibrium_from_flows, verify_selection)
from NetStruct import TradeGraph, is_dag, topological_order
from Sweep import SweepAxisError, tariff_grid, tariff_sweep
from Welfare import welfare_report


# Defaults values for arg parsing
Defaults = {
    'scenarioDirEnvVar': 'TRADEEQ_SCENARIO_DIR',
    'workersEnvVar': 'TRADEEQ_WORKERS',
    'bundledScenarioDir': os.path.join(os.path.dirname(os.path.abspath(__file__)), 'scenarios'),
    'tableFormat': 'table',
    'sweepFormat': 'csv',
    'sweepFrom': 0.0,
    'sweepSteps': 7,
    'workers': 1,
}

EXIT_OK = 0
EXIT_FAILURE = 1  # no convergence, selection violations, cyclic network
EXIT_INVALID = 2  # bad flags or input files


class UsageError(Exception):
    """Raised when flags or inputs do not fit the chosen command"""
    pass


def markdown_output(
    markdown: str,
    printText: bool = True,
    outputFD: Optional[TextIO] = None,
) -> None:
    """
    Write markdown text to the console or to a file. Console output is
    rendered with terminal formatting; pass outputFD=sys.stdout for the
    plain markdown text.
    """
    if outputFD is not None and printText:
        outputFD.write(markdown)
        if not markdown.endswith('\n'):
            outputFD.write('\n')
        return

    if printText:
        Console().print(Markdown(markdown))


def emit(options: argparse.Namespace, text: str) -> None:
    """writes command output in the selected format to the selected destination"""
    if options.format == 'table':
        markdown_output(text, printText=options.printmd, outputFD=options.outputFD)
    elif options.printmd:
        (options.outputFD or sys.stdout).write(text)


def scenario_search_dirs() -> list[str]:
    """TRADEEQ_SCENARIO_DIR first, the bundled scenarios last"""
    dirs = []
    env_dir = os.environ.get(Defaults['scenarioDirEnvVar'])
    if env_dir:
        dirs.append(env_dir)
    dirs.append(Defaults['bundledScenarioDir'])
    return dirs


def resolve_input(name: str) -> str:
    """a path as given, else the name (with or without .json) in the scenario directories"""
    if os.path.isfile(name):
        return name
    for folder in scenario_search_dirs():
        for candidate in (name, name + '.json'):
            path = os.path.join(folder, candidate)
            if os.path.isfile(path):
                return path
    raise UsageError(f'file not found: {name} (searched the current directory and {", ".join(scenario_search_dirs())})')


def default_workers() -> int:
    value = os.environ.get(Defaults['workersEnvVar'])
    if value is None:
        return Defaults['workers']
    try:
        return positive_int(value)
    except argparse.ArgumentTypeError as e:
        raise UsageError(f'{Defaults["workersEnvVar"]}: {e}')


def solver_options(options: argparse.Namespace, scenario: Scenario.Scenario) -> SolverOptions:
    """scenario options overridden by command line flags"""
    solver = scenario.options
    if options.method is not None:
        solver = solver.replace(method=SolverMethod(options.method))
    elif options.use_fixed_network:
        solver = solver.replace(method=SolverMethod.FIXED_NETWORK)
    if options.exact:
        solver = solver.replace(exact=True)
    return solver


def command_solve(options: argparse.Namespace, scenario: Scenario.Scenario) -> int:
    economy = scenario.economy
    eq = solve(economy, options.solver, scenario.fixed_network)
    status = EXIT_OK
    if options.solver.method is SolverMethod.FIXED_NETWORK:
        violations = verify_selection(economy, eq, options.solver)
        for v in violations:
            options.log.warning(f'fixed network is not an equilibrium: {v.describe(economy.ids)}')
        if violations:
            status = EXIT_FAILURE

    if options.cmd == 'welfare':
        emit(options, Scenario.write_results(welfare_report(economy, eq, options.solver), options.format))
    else:
        emit(options, Scenario.write_results(eq, options.format))
        if eq.diagnostics.multiple_flows:
            options.log.warning('equilibrium flows are not unique; the canonical representative is shown')
    return status


def command_sweep(options: argparse.Namespace, scenario: Scenario.Scenario) -> int:
    economy = scenario.economy
    importer, exporter = economy.index(options.importer), economy.index(options.exporter)
    grid = tariff_grid(options.sweep_from, options.sweep_to, options.steps)
    solver = options.solver
    if solver.method is SolverMethod.FIXED_NETWORK:
        # the fixed network is a preference along a sweep, not a constraint
        solver = solver.replace(method=SolverMethod.TATONNEMENT)
    preferred = scenario.fixed_network if options.use_fixed_network or options.method == 'fixed_network' else None

    result = tariff_sweep(economy, importer, exporter, grid, solver, preferred_pattern=preferred,
                          workers=options.workers, warm_start=options.warm_start, refine=options.refine)
    emit(options, Scenario.write_results(result, options.format))
    options.log.debug(f'{len(result.regime_changes)} regime change(s) over {len(grid)} grid points')
    return EXIT_FAILURE if result.failed else EXIT_OK


def load_flows_option(options: argparse.Namespace, scenario: Scenario.Scenario) -> np.ndarray:
    with open(resolve_input(options.flows), 'r', encoding='utf-8') as f:
        return Scenario.load_flows(f.read(), scenario.economy)


def command_verify(options: argparse.Namespace, scenario: Scenario.Scenario) -> int:
    economy = scenario.economy
    eq = equilibrium_from_flows(economy, options.flows_matrix, options.solver)
    violations = verify_selection(economy, eq, options.solver)
    emit(options, Scenario.write_results(violations, options.format, economy.ids))
    if violations:
        options.log.error(f'{len(violations)} destination selection violation(s)')
        return EXIT_FAILURE
    return EXIT_OK


def command_check_dag(options: argparse.Namespace, scenario: Scenario.Scenario) -> int:
    economy = scenario.economy
    if options.flows_matrix is not None:
        flows = options.flows_matrix
    else:
        flows = solve(economy, options.solver, scenario.fixed_network).flows
    acyclic, witness = is_dag(flows, options.solver.flow_tol)
    ids = economy.ids

    if acyclic:
        order = topological_order(TradeGraph.from_flows(flows, options.solver.flow_tol))
        text = f'The trade network is a DAG; order {", ".join(ids[k] for k in order)}\n'
        doc = {'dag': True, 'order': [ids[k] for k in order], 'cycle': None}
    else:
        text = f'The trade network has a cycle: {" -> ".join(ids[k] for k in witness)}\n'
        doc = {'dag': False, 'order': None, 'cycle': [ids[k] for k in witness]}

    if options.format == 'json':
        text = json.dumps(doc, indent=2) + '\n'
    elif options.format == 'csv':
        text = f'dag,order,cycle\n{str(acyclic).lower()},{" ".join(doc["order"] or [])},{" ".join(doc["cycle"] or [])}\n'
    emit(options, text)
    return EXIT_OK if acyclic else EXIT_FAILURE


Commands = {
    'solve': command_solve,
    'welfare': command_solve,
    'sweep': command_sweep,
    'verify': command_verify,
    'check-dag': command_check_dag,
}


def validate_flags(options: argparse.Namespace) -> None:
    """flag combinations are checked before anything is solved"""
    if options.scenario is None:
        raise UsageError(f'the {options.cmd} command needs a scenario file')
    if options.cmd == 'sweep':
        for flag, value in (('--importer', options.importer), ('--exporter', options.exporter), ('--to', options.sweep_to)):
            if value is None:
                raise UsageError(f'sweep needs {flag}')
        if options.sweep_to < options.sweep_from:
            raise UsageError('--to must not be below --from')
        if options.steps > 1 and options.sweep_to == options.sweep_from:
            raise UsageError('--from and --to must differ for more than one step')
    elif any(v is not None for v in (options.importer, options.exporter, options.sweep_to)):
        options.log.warning('sweep axis flags are ignored outside of the sweep command')
    if options.cmd == 'verify' and options.flows is None:
        raise UsageError('verify needs --flows FILE')
    if options.flows is not None and options.cmd not in ('verify', 'check-dag'):
        options.log.warning('--flows is only used by verify and check-dag; ignoring it')
        options.flows = None
    if options.method == 'fixed_network' and options.ignore_fixed_network:
        raise UsageError('--method fixed_network conflicts with --ignore-fixed-network')


def main(argv: list[str]) -> int:
    me = os.path.basename(argv[0])

    description = 'Tariff network equilibrium tool.'

    epilog = f'Scenario files given by name are looked up in the current directory, then ${Defaults["scenarioDirEnvVar"]}, then the bundled scenarios. \n'
    epilog += f'Sweep worker count precedence: --workers argument, {Defaults["workersEnvVar"]} environment variable, default {Defaults["workers"]}. \n'
    epilog += 'Exit status: 0 success, 1 no convergence or verification failure, 2 invalid input.\n'

    parser = argparse.ArgumentParser(
                description=description,
                epilog=epilog,
                formatter_class=RawDescriptionHelpFormatterWithLineWrap)

    cli_commands = list(Commands) + ['help']

    # Special case handling for VSCode launch.json argsExpand option
    if len(argv) > 1 and argv[1] == '--argsExpand':
        argv.pop(1)
        if len(argv) > 1:
            argv = argv[:1] + shlex.split(' '.join(argv[1:]))

    # global options
    parser.add_argument('-v', '--verbose', action='store_true', help='enable verbose output')
    parser.add_argument('--parse-only', action='store_true', help='parse and validate input but do not solve')

    # solver options
    grp = parser.add_argument_group('Solver options')
    grp.add_argument('--method', '-m', type=str, choices=[m.value for m in SolverMethod], default=None, help='solution method (default: fixed_network when the scenario has one, otherwise tatonnement with enumeration fallback)')
    grp.add_argument('--ignore-fixed-network', action='store_true', help='solve from scratch even when the scenario has a fixed network')
    grp.add_argument('--exact', action='store_true', help='exact rational arithmetic for fixed networks of linear curves')

    # input options
    grp = parser.add_argument_group('Input options')
    grp.add_argument('--flows', type=str, metavar='FILE', default=None, help='flows file for verify and check-dag')

    # output options
    grp = parser.add_argument_group('Output options')
    grp.add_argument('--format', '-f', type=str, choices=Scenario.FORMATS, default=None, help=f'output format (default: {Defaults["sweepFormat"]} for sweep, {Defaults["tableFormat"]} otherwise)')
    grp.add_argument('--output', '-o', type=str, metavar='FILE', default=None, help='write to file instead of console ("-" for stdout)')

    # sweep options
    grp = parser.add_argument_group('Sweep options')
    grp.add_argument('--importer', type=str, metavar='ID', default=None, help='importing country of the swept tariff')
    grp.add_argument('--exporter', type=str, metavar='ID', default=None, help='exporting country of the swept tariff')
    grp.add_argument('--from', dest='sweep_from', type=nonnegative_float, metavar='T', default=Defaults['sweepFrom'], help='first tariff value (default: %(default)s)')
    grp.add_argument('--to', dest='sweep_to', type=nonnegative_float, metavar='T', default=None, help='last tariff value')
    grp.add_argument('--steps', type=positive_int, metavar='N', default=Defaults['sweepSteps'], help='number of grid points (default: %(default)s)')
    grp.add_argument('--workers', type=positive_int, metavar='N', default=None, help='worker processes for the sweep')
    grp.add_argument('--warm-start', action='store_true', help='start each sweep solve from the previous prices')
    grp.add_argument('--refine', action='store_true', help='bisect regime boundaries down to 1e-6')

    # positional arguments
    parser.add_argument('cmd', type=str, choices=cli_commands, help='command to run')
    parser.add_argument('scenario', type=str, nargs='?', default=None, help='scenario file or bundled scenario name')

    options = parser.parse_args(argv[1:])

    # help command; same as --help
    if options.cmd == 'help':
        parser.print_help()
        return EXIT_OK

    # setup logging
    log_level = logging.DEBUG if options.verbose else logging.INFO
    logging.basicConfig(level=log_level, format='%(levelname)s %(name)s: %(message)s', force=True)
    options.log = logging.getLogger(me)

    if options.format is None:
        options.format = Defaults['sweepFormat'] if options.cmd == 'sweep' else Defaults['tableFormat']

    # setup parse-only mode
    options.printmd = not options.parse_only
    if options.parse_only and not options.verbose:
        options.log.info("run with --verbose for more parsing details")
    if options.parse_only and options.output is not None:
        options.log.warning("ignoring --output option in parse-only mode")
        options.output = None

    try:
        validate_flags(options)
        if options.workers is None:
            options.workers = default_workers()
        scenario = Scenario.load_scenario(resolve_input(options.scenario))
        options.use_fixed_network = scenario.fixed_network is not None and not options.ignore_fixed_network
        options.solver = solver_options(options, scenario)
        if options.solver.method is SolverMethod.FIXED_NETWORK and scenario.fixed_network is None:
            raise UsageError('--method fixed_network needs a scenario with "fixed_network"')
        options.flows_matrix = load_flows_option(options, scenario) if options.flows is not None else None
        if options.cmd == 'sweep':
            scenario.economy.index(options.importer)
            scenario.economy.index(options.exporter)
    except (UsageError, Scenario.ScenarioParseError, SolverOptionsError, KeyError, OSError) as e:
        options.log.error(e.args[0] if isinstance(e, KeyError) else e)
        return EXIT_INVALID

    options.log.debug(f'{scenario.name or options.scenario}: {scenario.economy.n} countries, method {options.solver.method.value}')
    if options.parse_only:
        return EXIT_OK

    # output file descriptor setup
    if options.output is None:
        options.outputFD = None  # console output with formatting
    elif options.output == '-':
        options.outputFD = sys.stdout  # plain text
    else:
        try:
            options.outputFD = open(options.output, 'w', encoding='utf-8', newline='')
        except OSError as e:
            options.log.error(f'cannot write {options.output}: {e}')
            return EXIT_INVALID

    try:
        return Commands[options.cmd](options, scenario)
    except (ConvergenceError, IndeterminatePatternError, InfeasiblePatternError) as e:
        options.log.error(e)
        return EXIT_FAILURE
    except (EnumerationLimitError, EconomyValidationError, SweepAxisError, SolverOptionsError) as e:
        options.log.error(e)
        return EXIT_INVALID
    finally:
        if options.outputFD is not None and options.outputFD is not sys.stdout:
            options.outputFD.close()


def main_entry() -> None:
    """console script entry point"""
    sys.exit(main(sys.argv))


if __name__ == "__main__":
    sys.exit(main(sys.argv))
