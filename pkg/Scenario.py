"""
Scenario files and result output

A scenario is a UTF-8 JSON object:

    {
      "name": "...", "description": "...",            (optional)
      "countries": [
        {"id": "EU", "name": "European Union",
         "supply": {"type": "linear", "intercept": 2, "slope": 0.5},
         "demand": {"type": "pwl", "points": [[0, 8], [4, 4]], "terminal_slope": -1}}
      ],
      "tariffs": [[0, 0.2], [0, 0]],                  [importer][exporter]
      "fixed_network": [["EU", "USA"]],               (optional) producer, market
      "options": {"method": "tatonnement"}            (optional) solver options
    }

Demand slopes are written as positive numbers. Unknown fields are rejected
and every problem is reported with the path of the offending field.

Results (equilibria, welfare reports, sweeps) are written as markdown
tables, JSON or CSV.

"""

from __future__ import annotations  # for forward references in type hints

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, fields
from typing import Any, Optional, Union

import numpy as np

from Curves import (Country, Curve, CurveKind, Economy, TariffMatrix,
                    validate_economy)
from Equilibrium import (Equilibrium, SelectionViolation, SolverMethod,
                         SolverOptions, SolverOptionsError)
from Flows import TradePattern
from Sweep import RegimeChange, SweepResult
from Welfare import WelfareReport


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'

TOP_LEVEL_FIELDS = {'name', 'description', 'countries', 'tariffs', 'fixed_network', 'options'}
COUNTRY_FIELDS = {'id', 'name', 'supply', 'demand'}
LINEAR_FIELDS = {'type', 'intercept', 'slope'}
PWL_FIELDS = {'type', 'points', 'terminal_slope'}
OPTION_FIELDS = {'price_tol', 'tie_tol', 'flow_tol', 'damping', 'max_iterations', 'method', 'exact', 'fallback'}

FORMATS = ('table', 'json', 'csv')
SIGNIFICANT_DIGITS = 6


class ScenarioParseError(ValueError):
    """Raised when a scenario or flows document is invalid"""

    def __init__(self, message: str, path: str = '') -> None:
        self.path = path
        super().__init__(f'{path}: {message}' if path else message)


@dataclass(frozen=True)
class Scenario:
    economy: Economy
    fixed_network: Optional[TradePattern] = None
    options: SolverOptions = SolverOptions()
    name: str = ''
    description: str = ''


# --- parsing -----------------------------------------------------------------

def _expect(value: Any, kind: type | tuple, path: str, what: str) -> Any:
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ScenarioParseError(f'expected {what}', path)
    return value


def _number(value: Any, path: str) -> float:
    x = float(_expect(value, (int, float), path, 'a number'))
    if not math.isfinite(x):
        raise ScenarioParseError('expected a finite number', path)
    return x


def _check_fields(obj: dict, allowed: set, required: set, path: str, strict: bool) -> None:
    missing = sorted(required - obj.keys())
    if missing:
        raise ScenarioParseError('missing field', f'{path}.{missing[0]}' if path else missing[0])
    extra = sorted(obj.keys() - allowed)
    if extra and strict:
        raise ScenarioParseError('unknown field', f'{path}.{extra[0]}' if path else extra[0])
    for key in extra:
        Log.warning(f'ignoring unknown field {path}.{key}' if path else f'ignoring unknown field {key}')


def _parse_curve(obj: Any, kind: CurveKind, path: str, strict: bool) -> Curve:
    _expect(obj, dict, path, 'a curve object')
    curve_type = obj.get('type')
    if curve_type == 'linear':
        _check_fields(obj, LINEAR_FIELDS, LINEAR_FIELDS, path, strict)
        slope = _number(obj['slope'], f'{path}.slope')
        if slope <= 0:
            raise ScenarioParseError('slope must be positive (demand slopes are written without sign)', f'{path}.slope')
        return Curve.linear(kind, _number(obj['intercept'], f'{path}.intercept'), slope)
    if curve_type == 'pwl':
        _check_fields(obj, PWL_FIELDS, {'type', 'points'}, path, strict)
        points = _expect(obj['points'], list, f'{path}.points', 'a list of [quantity, value] pairs')
        if not points:
            raise ScenarioParseError('needs at least one breakpoint', f'{path}.points')
        pairs = []
        for k, pt in enumerate(points):
            where = f'{path}.points[{k}]'
            if not isinstance(pt, list) or len(pt) != 2:
                raise ScenarioParseError('expected a [quantity, value] pair', where)
            pairs.append((_number(pt[0], f'{where}[0]'), _number(pt[1], f'{where}[1]')))
        terminal = None
        if 'terminal_slope' in obj:
            terminal = _number(obj['terminal_slope'], f'{path}.terminal_slope')
        elif len(pairs) < 2:
            raise ScenarioParseError('a single breakpoint needs terminal_slope', path)
        return Curve.piecewise(kind, pairs, terminal)
    raise ScenarioParseError(f'unknown curve type {curve_type!r}; expected "linear" or "pwl"', f'{path}.type')


def _parse_options(obj: Any, strict: bool) -> SolverOptions:
    _expect(obj, dict, 'options', 'an options object')
    _check_fields(obj, OPTION_FIELDS, set(), 'options', strict)
    kwargs: dict[str, Any] = {}
    for key in sorted(OPTION_FIELDS & obj.keys()):
        value, where = obj[key], f'options.{key}'
        if key in ('exact', 'fallback'):
            if not isinstance(value, bool):
                raise ScenarioParseError('expected true or false', where)
            kwargs[key] = value
        elif key == 'method':
            kwargs[key] = _expect(value, str, where, 'a method name')
        elif key == 'max_iterations':
            kwargs[key] = int(_expect(value, int, where, 'an integer'))
        else:
            kwargs[key] = _number(value, where)
    try:
        return SolverOptions(**kwargs)
    except SolverOptionsError as e:
        raise ScenarioParseError(str(e), 'options')


def scenario_from_dict(doc: Any, strict: bool = True) -> Scenario:
    _expect(doc, dict, '', 'a JSON object at the top level')
    _check_fields(doc, TOP_LEVEL_FIELDS, {'countries', 'tariffs'}, '', strict)

    countries = []
    for k, c in enumerate(_expect(doc['countries'], list, 'countries', 'a list of countries')):
        path = f'countries[{k}]'
        _expect(c, dict, path, 'a country object')
        _check_fields(c, COUNTRY_FIELDS, {'id', 'supply', 'demand'}, path, strict)
        cid = _expect(c['id'], str, f'{path}.id', 'a string id')
        name = _expect(c.get('name', cid), str, f'{path}.name', 'a string name')
        countries.append(Country(cid, name,
                                 _parse_curve(c['supply'], CurveKind.SUPPLY, f'{path}.supply', strict),
                                 _parse_curve(c['demand'], CurveKind.DEMAND, f'{path}.demand', strict)))

    rows = _expect(doc['tariffs'], list, 'tariffs', 'an n x n list of tariff rows')
    tariffs = []
    for i, row in enumerate(rows):
        _expect(row, list, f'tariffs[{i}]', 'a list of tariff rates')
        tariffs.append([_number(x, f'tariffs[{i}][{j}]') for j, x in enumerate(row)])
    economy = Economy(tuple(countries), TariffMatrix.from_rows(tariffs))

    issues = validate_economy(economy)
    if issues:
        raise ScenarioParseError(issues[0].problem, issues[0].location)

    fixed = None
    if 'fixed_network' in doc and doc['fixed_network'] is not None:
        links = []
        for k, pair in enumerate(_expect(doc['fixed_network'], list, 'fixed_network', 'a list of [producer, market] pairs')):
            where = f'fixed_network[{k}]'
            if not isinstance(pair, list) or len(pair) != 2:
                raise ScenarioParseError('expected a [producer, market] pair', where)
            try:
                links.append((economy.index(str(pair[0])), economy.index(str(pair[1]))))
            except KeyError as e:
                raise ScenarioParseError(e.args[0], where)
        fixed = TradePattern.from_links(economy.n, links)

    options = _parse_options(doc['options'], strict) if 'options' in doc else SolverOptions()
    name = _expect(doc.get('name', ''), str, 'name', 'a string')
    description = _expect(doc.get('description', ''), str, 'description', 'a string')
    return Scenario(economy, fixed, options, name, description)


def parse_scenario(text: str, strict: bool = True) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f'malformed JSON: {e.msg} (line {e.lineno}, column {e.colno})')
    return scenario_from_dict(doc, strict)


def load_scenario(path: str, strict: bool = True) -> Scenario:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_scenario(f.read(), strict)


def _curve_dict(curve: Curve) -> dict:
    if curve.is_linear:
        return {'type': 'linear', 'intercept': curve.intercept, 'slope': curve.slope}
    return {'type': 'pwl', 'points': [list(p) for p in curve.points], 'terminal_slope': curve.terminal_slope}


def scenario_to_dict(scenario: Scenario) -> dict:
    economy = scenario.economy
    doc: dict[str, Any] = {}
    if scenario.name:
        doc['name'] = scenario.name
    if scenario.description:
        doc['description'] = scenario.description
    doc['countries'] = [{'id': c.id, 'name': c.name, 'supply': _curve_dict(c.supply), 'demand': _curve_dict(c.demand)}
                        for c in economy.countries]
    doc['tariffs'] = [list(row) for row in economy.tariffs.entries]
    if scenario.fixed_network is not None:
        doc['fixed_network'] = [[economy.ids[j], economy.ids[i]] for j, i in scenario.fixed_network.sorted_links()]

    defaults = SolverOptions()
    options = {}
    for f in fields(SolverOptions):
        value = getattr(scenario.options, f.name)
        if f.name in OPTION_FIELDS and value != getattr(defaults, f.name):
            options[f.name] = value.value if isinstance(value, SolverMethod) else value
    if options:
        doc['options'] = options
    return doc


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + '\n'


def load_flows(text: str, economy: Economy) -> np.ndarray:
    """flow matrix from {"flows": [{"producer": id, "market": id, "quantity": q}, ...]}"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f'malformed JSON: {e.msg} (line {e.lineno}, column {e.colno})')
    _expect(doc, dict, '', 'a JSON object at the top level')
    _check_fields(doc, {'flows', 'name', 'description'}, {'flows'}, '', True)
    flows = np.zeros((economy.n, economy.n))
    for k, entry in enumerate(_expect(doc['flows'], list, 'flows', 'a list of flow entries')):
        path = f'flows[{k}]'
        _expect(entry, dict, path, 'a flow object')
        _check_fields(entry, {'producer', 'market', 'quantity'}, {'producer', 'market', 'quantity'}, path, True)
        try:
            j = economy.index(_expect(entry['producer'], str, f'{path}.producer', 'a country id'))
            i = economy.index(_expect(entry['market'], str, f'{path}.market', 'a country id'))
        except KeyError as e:
            raise ScenarioParseError(e.args[0], path)
        q = _number(entry['quantity'], f'{path}.quantity')
        if q < 0:
            raise ScenarioParseError('quantity must be nonnegative', f'{path}.quantity')
        flows[i, j] += q
    return flows


# --- output ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f'{x:.{SIGNIFICANT_DIGITS}g}'


def _full(x: float) -> str:
    return repr(float(x))


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def _equilibrium_output(eq: Equilibrium, fmt: str) -> str:
    ids = eq.country_ids
    links = eq.pattern.sorted_links()
    if fmt == 'csv':
        header = ['importer', 'exporter', 'quantity', 'consumer_price', 'producer_price']
        rows = [[ids[i], ids[j], _full(eq.flows[i, j]), _full(eq.consumer_prices[i]), _full(eq.producer_prices[j])]
                for j, i in links]
        return _csv_text(header, rows)

    if fmt == 'json':
        doc = {
            'countries': list(ids),
            'consumer_prices': dict(zip(ids, map(float, eq.consumer_prices))),
            'producer_prices': dict(zip(ids, map(float, eq.producer_prices))),
            'flows': [{'producer': ids[j], 'market': ids[i], 'quantity': float(eq.flows[i, j])} for j, i in links],
            'pattern_id': eq.pattern.identifier(),
            'diagnostics': {
                'max_clearing_residual': eq.diagnostics.max_clearing_residual,
                'max_selection_slack': eq.diagnostics.max_selection_slack,
                'iterations': eq.diagnostics.iterations,
                'multiple_flows': eq.diagnostics.multiple_flows,
                'method': eq.diagnostics.method,
            },
        }
        return json.dumps(doc, indent=2) + '\n'

    md = '| Flow | Quantity | Price |\n|:-----|-----:|-----:|\n'
    for j, i in links:
        md += f'| {ids[j]} -> {ids[i]} | {_fmt(eq.flows[i, j])} | {_fmt(eq.consumer_prices[i])} |\n'
    md += '\n| Country | Consumer price | Producer price |\n|:-----|-----:|-----:|\n'
    for k, cid in enumerate(ids):
        md += f'| {cid} | {_fmt(eq.consumer_prices[k])} | {_fmt(eq.producer_prices[k])} |\n'
    d = eq.diagnostics
    md += f'\nMethod {d.method}, {d.iterations} iterations, pattern {eq.pattern.identifier()}'
    if d.multiple_flows:
        md += ' (flows not unique; canonical representative shown)'
    return md + '\n'


def _welfare_output(report: WelfareReport, fmt: str) -> str:
    if fmt == 'csv':
        header = ['country', 'consumer_surplus', 'firm_profits', 'tariff_revenue', 'total']
        rows = [[r.country, _full(r.consumer_surplus), _full(r.firm_profits), _full(r.tariff_revenue), _full(r.total)]
                for r in report.rows]
        return _csv_text(header, rows)

    if fmt == 'json':
        doc: dict[str, Any] = {
            'countries': [{'country': r.country, 'consumer_surplus': r.consumer_surplus, 'firm_profits': r.firm_profits,
                           'tariff_revenue': r.tariff_revenue, 'total': r.total} for r in report.rows],
            'totals': {'consumer_surplus': report.totals.consumer_surplus, 'firm_profits': report.totals.firm_profits,
                       'tariff_revenue': report.totals.tariff_revenue, 'total': report.totals.total},
        }
        if report.revenue_bounds is not None:
            doc['revenue_bounds'] = {r.country: list(b) for r, b in zip(report.rows, report.revenue_bounds)}
        return json.dumps(doc, indent=2) + '\n'

    md = '| Country | Consumer surplus | Firm profits | Tariff revenue | Total |\n|:-----|-----:|-----:|-----:|-----:|\n'
    for r in report.rows + (report.totals,):
        md += f'| {r.country} | {_fmt(r.consumer_surplus)} | {_fmt(r.firm_profits)} | {_fmt(r.tariff_revenue)} | {_fmt(r.total)} |\n'
    if report.revenue_bounds is not None:
        md += '\nTariff revenue depends on the flow representative; range per importer:\n\n'
        for r, (lo, hi) in zip(report.rows, report.revenue_bounds):
            md += f'- {r.country}: {_fmt(lo)} to {_fmt(hi)}\n'
    return md


def _sweep_header(ids: tuple[str, ...]) -> list[str]:
    header = ['tariff_value', 'pattern_id']
    for cid in ids:
        header += [f'{cid}_consumer_price', f'{cid}_producer_price', f'{cid}_welfare']
    return header + ['convergence_status']


def _sweep_output(result: SweepResult, fmt: str) -> str:
    ids = result.country_ids
    if fmt == 'csv':
        rows = []
        for row in result.rows:
            line = [_full(row.tariff), row.pattern_id]
            for k in range(len(ids)):
                if row.ok:
                    eq = row.equilibrium
                    line += [_full(eq.consumer_prices[k]), _full(eq.producer_prices[k]), _full(row.welfare.rows[k].total)]
                else:
                    line += ['', '', '']
            rows.append(line + [row.status.value])
        return _csv_text(_sweep_header(ids), rows)

    if fmt == 'json':
        doc = {
            'importer': ids[result.axis.importer],
            'exporter': ids[result.axis.exporter],
            'rows': [{
                'tariff_value': row.tariff,
                'pattern_id': row.pattern_id,
                'consumer_prices': list(map(float, row.equilibrium.consumer_prices)) if row.ok else None,
                'producer_prices': list(map(float, row.equilibrium.producer_prices)) if row.ok else None,
                'welfare': list(row.welfare.totals_by_country) if row.ok else None,
                'convergence_status': row.status.value,
            } for row in result.rows],
            'regime_changes': [_regime_change_dict(c, ids) for c in result.regime_changes],
        }
        return json.dumps(doc, indent=2) + '\n'

    md = '| Tariff | Pattern | ' + ' | '.join(f'{cid} price' for cid in ids) + ' | Status |\n'
    md += '|-----:|:-----|' + '-----:|' * len(ids) + ':-----|\n'
    for row in result.rows:
        prices = [_fmt(p) for p in row.equilibrium.consumer_prices] if row.ok else ['-'] * len(ids)
        md += f'| {_fmt(row.tariff)} | {row.pattern_id or "-"} | ' + ' | '.join(prices) + f' | {row.status.value} |\n'
    if result.regime_changes:
        md += '\nRegime changes:\n\n'
        for c in result.regime_changes:
            md += f'- ({_fmt(c.lower)}, {_fmt(c.upper)}]: '
            if not c.known:
                md += 'unknown (failed solve)\n'
                continue
            md += _describe_links(c.removed, c.added, ids)
            if c.threshold is not None:
                md += f', boundary near {_fmt(c.threshold)}'
            md += ', welfare jump ' + ', '.join(f'{cid} {_fmt(w)}' for cid, w in zip(ids, c.welfare_jump)) + '\n'
    return md


def _link_names(links: frozenset, ids: tuple[str, ...]) -> list[str]:
    return [f'{ids[j]}->{ids[i]}' for j, i in sorted(links, key=lambda x: (x[1], x[0]))]


def _describe_links(removed: frozenset, added: frozenset, ids: tuple[str, ...]) -> str:
    return f'removed {{{", ".join(_link_names(removed, ids))}}}, added {{{", ".join(_link_names(added, ids))}}}'


def _regime_change_dict(change: RegimeChange, ids: tuple[str, ...]) -> dict:
    return {
        'lower': change.lower,
        'upper': change.upper,
        'status': change.status,
        'removed': _link_names(change.removed, ids),
        'added': _link_names(change.added, ids),
        'welfare_jump': dict(zip(ids, change.welfare_jump)) if change.welfare_jump is not None else None,
        'threshold': change.threshold,
    }


def _violations_output(violations: list[SelectionViolation], ids: tuple[str, ...], fmt: str) -> str:
    if fmt == 'csv':
        return _csv_text(['producer', 'destination', 'gap', 'reason'],
                         [[ids[v.producer], ids[v.destination], _full(v.gap), v.reason] for v in violations])
    if fmt == 'json':
        return json.dumps({'violations': [{'producer': ids[v.producer], 'destination': ids[v.destination],
                                           'gap': v.gap, 'reason': v.reason} for v in violations]}, indent=2) + '\n'
    if not violations:
        return 'Destination selection holds for every producer.\n'
    return ''.join(f'- {v.describe(ids)}\n' for v in violations)


Payload = Union[Equilibrium, WelfareReport, SweepResult]


def write_results(payload: Payload, fmt: str = 'table', country_ids: Optional[tuple[str, ...]] = None) -> str:
    """
    Renders a payload as a markdown table (6 significant digits), JSON or
    CSV (full precision). Country order follows the scenario. A list of
    selection violations needs country_ids.
    """
    if fmt not in FORMATS:
        raise ValueError(f'unknown output format {fmt!r}; expected one of {", ".join(FORMATS)}')
    if isinstance(payload, Equilibrium):
        return _equilibrium_output(payload, fmt)
    if isinstance(payload, WelfareReport):
        return _welfare_output(payload, fmt)
    if isinstance(payload, SweepResult):
        return _sweep_output(payload, fmt)
    if isinstance(payload, list) and country_ids is not None:
        return _violations_output(payload, country_ids, fmt)
    raise TypeError(f'cannot write results of type {type(payload).__name__}')
