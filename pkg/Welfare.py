"""
Welfare decomposition of a tariff equilibrium

National welfare is consumer surplus plus firm profits plus tariff revenue.
Surpluses depend only on prices and are computed in closed form over the
piecewise-linear curves. Revenue depends on who imports from whom, so when
an equilibrium admits several flow matrices the report also carries the
range of each importer's revenue over all of them.

"""

from __future__ import annotations  # for forward references in type hints

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from Curves import Country, Economy, curve_integral, curve_inverse
from Equilibrium import Equilibrium, SolverOptions, argmax_support
from Flows import TradePattern, flow_bounds


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'


def consumer_surplus(country: Country, consumer_price: float) -> float:
    """area between the demand curve and the price up to the quantity demanded"""
    q = curve_inverse(country.demand, consumer_price)
    if q == 0.0:
        return 0.0
    return max(0.0, curve_integral(country.demand, 0.0, q) - consumer_price * q)


def firm_profits(country: Country, producer_price: float) -> float:
    """area between the price and the supply curve up to the quantity supplied"""
    q = curve_inverse(country.supply, producer_price)
    if q == 0.0:
        return 0.0
    return max(0.0, producer_price * q - curve_integral(country.supply, 0.0, q))


def _revenue_weights(economy: Economy, eq: Equilibrium, importer: int) -> np.ndarray:
    weights = np.zeros((economy.n, economy.n))
    for j in range(economy.n):
        weights[importer, j] = economy.tariffs[importer, j] * eq.producer_prices[j]
    return weights


def tariff_revenue(economy: Economy, eq: Equilibrium, importer: int) -> float:
    """sum over exporters of tariff rate times exporter producer price times flow"""
    return float((_revenue_weights(economy, eq, importer)[importer] * eq.flows[importer]).sum())


def optimal_support(economy: Economy, eq: Equilibrium, options: Optional[SolverOptions] = None) -> TradePattern:
    """every link from a producing country to one of its maximal-revenue destinations"""
    return argmax_support(economy, eq.consumer_prices, eq.production, options)


def revenue_bounds(economy: Economy, eq: Equilibrium, options: Optional[SolverOptions] = None) -> tuple[tuple[float, float], ...]:
    """(min, max) tariff revenue per importer over every flow matrix consistent with the equilibrium"""
    options = options or SolverOptions()
    support = optimal_support(economy, eq, options)
    bounds = []
    for i in range(economy.n):
        bounds.append(flow_bounds(eq.production, eq.consumption, support, _revenue_weights(economy, eq, i), options.flow_tol))
    return tuple(bounds)


@dataclass(frozen=True)
class WelfareRow:
    country: str
    consumer_surplus: float
    firm_profits: float
    tariff_revenue: float
    total: float

    @classmethod
    def from_parts(cls, country: str, consumer_surplus: float, firm_profits: float, tariff_revenue: float) -> WelfareRow:
        return cls(country, consumer_surplus, firm_profits, tariff_revenue,
                   consumer_surplus + firm_profits + tariff_revenue)


@dataclass(frozen=True)
class WelfareReport:
    rows: tuple[WelfareRow, ...]
    totals: WelfareRow
    revenue_bounds: Optional[tuple[tuple[float, float], ...]] = None

    def row(self, country: str) -> WelfareRow:
        for r in self.rows:
            if r.country.lower() == country.lower():
                return r
        raise KeyError(f'unknown country: {country}')

    @property
    def country_ids(self) -> tuple[str, ...]:
        return tuple(r.country for r in self.rows)

    @property
    def totals_by_country(self) -> tuple[float, ...]:
        return tuple(r.total for r in self.rows)


def welfare_report(economy: Economy, eq: Equilibrium, options: Optional[SolverOptions] = None) -> WelfareReport:
    rows = []
    for i, country in enumerate(economy.countries):
        rows.append(WelfareRow.from_parts(
            country.id,
            consumer_surplus(country, eq.consumer_prices[i]),
            firm_profits(country, eq.producer_prices[i]),
            tariff_revenue(economy, eq, i),
        ))
    totals = WelfareRow.from_parts(
        'total',
        sum(r.consumer_surplus for r in rows),
        sum(r.firm_profits for r in rows),
        sum(r.tariff_revenue for r in rows),
    )

    bounds = None
    if eq.diagnostics.multiple_flows:
        bounds = revenue_bounds(economy, eq, options)
        Log.debug(f'flows are not unique; revenue bounds {bounds}')
    return WelfareReport(tuple(rows), totals, bounds)
