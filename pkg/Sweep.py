"""
Tariff sweeps and trade-network regime changes

Re-solves an economy along a grid of values for one tariff entry and
records prices, welfare and the trade pattern at every point. Adjacent
points with different patterns are regime changes; their boundary can be
narrowed down by bisection.

"""

from __future__ import annotations  # for forward references in type hints

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from Curves import Economy, require_valid
from Equilibrium import (ConvergenceError, EnumerationLimitError, Equilibrium,
                         IndeterminatePatternError, InfeasiblePatternError,
                         SolverMethod, SolverOptions, solve, solve_fixed_network,
                         verify_selection)
from Flows import InfeasibleFlowsError, TradePattern
from NetStruct import pattern_diff
from Welfare import WelfareReport, welfare_report


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'

REFINE_TOL = 1e-6
# a grid point failing with one of these becomes a failed row
SOLVE_FAILURES = (ConvergenceError, EnumerationLimitError, InfeasibleFlowsError, RuntimeError)


class SweepAxisError(ValueError):
    """Raised when a sweep axis or grid is invalid"""
    pass


class RowStatus(str, Enum):
    CONVERGED = 'converged'
    FAILED = 'failed'


@dataclass(frozen=True)
class SweepAxis:
    importer: int
    exporter: int
    grid: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class SweepRow:
    index: int
    tariff: float
    status: RowStatus
    equilibrium: Optional[Equilibrium] = None
    welfare: Optional[WelfareReport] = None
    message: str = ''

    @property
    def ok(self) -> bool:
        return self.status is RowStatus.CONVERGED

    @property
    def pattern(self) -> Optional[TradePattern]:
        return self.equilibrium.pattern if self.equilibrium is not None else None

    @property
    def pattern_id(self) -> str:
        return self.equilibrium.pattern.identifier() if self.equilibrium is not None else ''


@dataclass(frozen=True)
class RegimeChange:
    lower: float  # last tariff value of the old regime
    upper: float  # first tariff value of the new one
    removed: frozenset[tuple[int, int]] = frozenset()
    added: frozenset[tuple[int, int]] = frozenset()
    welfare_jump: Optional[tuple[float, ...]] = None
    known: bool = True
    threshold: Optional[float] = None  # bisection estimate when refined

    @property
    def status(self) -> str:
        return 'known' if self.known else 'unknown'


@dataclass(frozen=True, eq=False)
class SweepResult:
    axis: SweepAxis
    country_ids: tuple[str, ...]
    rows: tuple[SweepRow, ...]
    regime_changes: tuple[RegimeChange, ...] = ()

    @property
    def failed(self) -> tuple[SweepRow, ...]:
        return tuple(r for r in self.rows if not r.ok)


def tariff_grid(start: float, stop: float, steps: int) -> tuple[float, ...]:
    """steps evenly spaced values from start to stop inclusive"""
    if steps < 1:
        raise SweepAxisError('a sweep needs at least one step')
    if steps == 1:
        return (float(start),)
    return tuple(float(x) for x in np.linspace(start, stop, steps))


def _check_axis(economy: Economy, importer: int, exporter: int, grid: Sequence[float]) -> None:
    n = economy.n
    if not (0 <= importer < n and 0 <= exporter < n):
        raise SweepAxisError(f'sweep axis ({importer}, {exporter}) outside of {n} countries')
    if importer == exporter:
        raise SweepAxisError('importer and exporter must differ; domestic tariffs are always zero')
    if not grid:
        raise SweepAxisError('empty tariff grid')
    if any(not np.isfinite(t) or t < 0 for t in grid):
        raise SweepAxisError('tariff grid values must be finite and nonnegative')
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise SweepAxisError('tariff grid must be strictly ascending')


def _solve_with_preference(economy: Economy, options: SolverOptions, preferred: Optional[TradePattern]) -> Equilibrium:
    """the preferred pattern's solution when it is an equilibrium, otherwise a full solve"""
    if preferred is not None:
        try:
            eq = solve_fixed_network(economy, preferred, options.replace(method=SolverMethod.FIXED_NETWORK, initial_prices=None))
            if not verify_selection(economy, eq, options):
                return eq
            Log.debug('preferred pattern fails destination selection; solving from scratch')
        except (IndeterminatePatternError, InfeasiblePatternError, ConvergenceError) as e:
            Log.debug(f'preferred pattern rejected: {e}')
    return solve(economy, options)


def _solve_point(task: tuple) -> SweepRow:
    """one grid point; module level so a process pool can pickle it"""
    economy, importer, exporter, index, value, options, preferred = task
    point = economy.with_tariff(importer, exporter, value)
    try:
        eq = _solve_with_preference(point, options, preferred)
    except SOLVE_FAILURES as e:
        return SweepRow(index, value, RowStatus.FAILED, message=str(e))
    return SweepRow(index, value, RowStatus.CONVERGED, eq, welfare_report(point, eq, options))


def tariff_sweep(
    economy: Economy,
    importer: int,
    exporter: int,
    grid: Sequence[float],
    options: Optional[SolverOptions] = None,
    preferred_pattern: Optional[TradePattern] = None,
    workers: int = 1,
    warm_start: bool = False,
    refine: bool = False,
) -> SweepResult:
    """
    Solves the economy at every grid value of tariff[importer][exporter].

    Args:
        preferred_pattern: tried first at every point and kept when it
            satisfies destination selection (for example a scenario's fixed
            network), so regimes are reported against that representative
        workers: process count; rows are identical to a sequential run
        warm_start: start each solve from the previous row's prices
            (sequential runs only)
        refine: bisect every regime boundary down to REFINE_TOL
    """
    options = options or SolverOptions()
    require_valid(economy)
    grid = tuple(float(t) for t in grid)
    _check_axis(economy, importer, exporter, grid)
    if workers < 1:
        raise SweepAxisError('worker count must be at least 1')
    axis = SweepAxis(importer, exporter, grid)

    tasks = [(economy, importer, exporter, k, t, options, preferred_pattern) for k, t in enumerate(grid)]
    if workers > 1 and len(tasks) > 1:
        if warm_start:
            Log.warning('warm start needs a sequential sweep; ignoring it with multiple workers')
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_solve_point, tasks))
    else:
        rows = []
        for task in tasks:
            if warm_start and rows and rows[-1].ok:
                warm = options.replace(initial_prices=tuple(rows[-1].equilibrium.consumer_prices))
                task = task[:5] + (warm,) + task[6:]
            rows.append(_solve_point(task))

    for row in rows:
        if not row.ok:
            Log.warning(f'sweep point {row.tariff:g} failed: {row.message}')

    result = SweepResult(axis, economy.ids, tuple(rows))
    changes = detect_regime_changes(result)
    if refine:
        changes = [_refined(economy, axis, c, options, preferred_pattern) for c in changes]
    return SweepResult(axis, economy.ids, tuple(rows), tuple(changes))


def detect_regime_changes(result: SweepResult) -> list[RegimeChange]:
    """one entry per adjacent pair of rows whose patterns differ or that touches a failed row"""
    changes = []
    for a, b in zip(result.rows, result.rows[1:]):
        if not (a.ok and b.ok):
            changes.append(RegimeChange(a.tariff, b.tariff, known=False))
            continue
        if a.pattern_id == b.pattern_id:
            continue
        diff = pattern_diff(a.pattern, b.pattern)
        jump = tuple(wb - wa for wa, wb in zip(a.welfare.totals_by_country, b.welfare.totals_by_country))
        changes.append(RegimeChange(a.tariff, b.tariff, diff.removed, diff.added, jump))
    return changes


def refine_boundary(economy: Economy, axis: SweepAxis, lower: float, upper: float,
                    options: Optional[SolverOptions] = None, preferred_pattern: Optional[TradePattern] = None,
                    tol: float = REFINE_TOL) -> float:
    """bisects [lower, upper] until the pattern switch is located within tol"""
    options = options or SolverOptions()

    def pattern_at(value: float) -> str:
        point = economy.with_tariff(axis.importer, axis.exporter, value)
        return _solve_with_preference(point, options, preferred_pattern).pattern.identifier()

    low_id = pattern_at(lower)
    while upper - lower > tol:
        mid = 0.5 * (lower + upper)
        if pattern_at(mid) == low_id:
            lower = mid
        else:
            upper = mid
    return 0.5 * (lower + upper)


def _refined(economy: Economy, axis: SweepAxis, change: RegimeChange, options: SolverOptions,
             preferred: Optional[TradePattern]) -> RegimeChange:
    if not change.known:
        return change
    try:
        threshold = refine_boundary(economy, axis, change.lower, change.upper, options, preferred)
    except SOLVE_FAILURES as e:
        Log.warning(f'could not refine boundary in ({change.lower:g}, {change.upper:g}]: {e}')
        return change
    return RegimeChange(change.lower, change.upper, change.removed, change.added, change.welfare_jump, True, threshold)
