"""Trade-flow ingestion, RCA computation and the 9-group discretization.

Input is a long CSV with columns ``country,product,year,value``. Missing
(country, product) pairs are treated as unavailable, not as zero exports:
their RCA is flagged in ``RcaMatrix.missing`` and stored as 0.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyInputError, ParseError

TRADE_COLUMNS = ("country", "product", "year", "value")
POPULATION_COLUMNS = ("country", "population")
DEFAULT_POPULATION_THRESHOLD = 5_000_000


class DataWarning(UserWarning):
    pass


@dataclass
class TradeFlowTable:
    year: int
    values: dict[tuple[str, str], float] = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    @property
    def countries(self) -> list[str]:
        return sorted({c for c, _ in self.values})

    @property
    def products(self) -> list[str]:
        return sorted({p for _, p in self.values})


@dataclass
class RcaMatrix:
    countries: list[str]
    products: list[str]
    values: np.ndarray
    missing: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def as_nan(self) -> np.ndarray:
        out = self.values.astype(float).copy()
        out[self.missing] = np.nan
        return out


@dataclass
class DiscreteMatrix:
    countries: list[str]
    products: list[str]
    groups: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return self.groups != 0


@dataclass
class LogRcaMatrix:
    countries: list[str]
    products: list[str]
    values: np.ndarray
    observed: np.ndarray


def _check_header(path, fieldnames, required):
    if fieldnames is None:
        raise EmptyInputError(f"{path}: file is empty")
    names = [f.strip() for f in fieldnames]
    absent = [c for c in required if c not in names]
    if absent:
        raise ParseError(path, 1, f"missing required column(s): {', '.join(absent)}")


def load_trade_flows(path, year: int) -> TradeFlowTable:
    """Read the trade CSV and aggregate rows for ``year``.

    Duplicate (country, product) keys are summed. A malformed row raises
    :class:`ParseError` carrying its 1-based line number.
    """
    path = Path(path)
    table = TradeFlowTable(year=int(year))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        _check_header(path, reader.fieldnames, TRADE_COLUMNS)
        reader.fieldnames = [f.strip() for f in reader.fieldnames]
        for row in reader:
            line = reader.line_num
            try:
                country = row["country"].strip()
                product = row["product"].strip()
                row_year = int(row["year"])
                value = float(row["value"])
            except (TypeError, ValueError, AttributeError) as exc:
                raise ParseError(path, line, f"cannot parse row {row!r}") from exc
            if not country or not product:
                raise ParseError(path, line, "empty country or product code")
            if not math.isfinite(value) or value < 0:
                raise ParseError(path, line, f"export value must be finite and >= 0, got {value}")
            if row_year != table.year:
                continue
            key = (country, product)
            table.values[key] = table.values.get(key, 0.0) + value
    if not table.values:
        raise EmptyInputError(f"{path}: no trade rows for year {year}")
    return table


def load_populations(path) -> dict[str, int]:
    path = Path(path)
    pops: dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        _check_header(path, reader.fieldnames, POPULATION_COLUMNS)
        reader.fieldnames = [f.strip() for f in reader.fieldnames]
        for row in reader:
            try:
                pops[row["country"].strip()] = int(float(row["population"]))
            except (TypeError, ValueError, AttributeError) as exc:
                raise ParseError(path, reader.line_num, f"cannot parse row {row!r}") from exc
    return pops


def filter_by_population(table: TradeFlowTable, populations: dict[str, int],
                         threshold: int = DEFAULT_POPULATION_THRESHOLD) -> TradeFlowTable:
    """Drop countries with fewer than ``threshold`` inhabitants.

    Countries with no population entry are dropped too; both groups are
    reported through a :class:`DataWarning`.
    """
    if not populations:
        raise ConfigError("population map is empty")
    if threshold <= 0:
        raise ConfigError(f"population threshold must be positive, got {threshold}")
    unknown = sorted({c for c in table.countries if c not in populations})
    if unknown:
        warnings.warn(f"no population entry, dropped: {', '.join(unknown)}", DataWarning, stacklevel=2)
    keep = {c for c in table.countries if populations.get(c, -1) >= threshold}
    small = sorted(set(table.countries) - keep - set(unknown))
    if small:
        warnings.warn(f"{len(small)} countries below population threshold {threshold} dropped",
                      DataWarning, stacklevel=2)
    kept = {k: v for k, v in table.values.items() if k[0] in keep}
    return TradeFlowTable(year=table.year, values=kept)


def aggregate_level(table: TradeFlowTable, level: str) -> TradeFlowTable:
    """Collapse product codes to HS-2 by their first two characters (``level='hs2'``)."""
    if level == "hs4":
        return table
    if level != "hs2":
        raise ConfigError(f"unknown product level {level!r}")
    out: dict[tuple[str, str], float] = {}
    for (c, p), v in table.values.items():
        key = (c, p[:2])
        out[key] = out.get(key, 0.0) + v
    return TradeFlowTable(year=table.year, values=out)


def trade_matrix(table: TradeFlowTable):
    """Dense export matrix with NaN at absent (country, product) pairs."""
    countries, products = table.countries, table.products
    ci = {c: i for i, c in enumerate(countries)}
    pi = {p: j for j, p in enumerate(products)}
    D = np.full((len(countries), len(products)), np.nan)
    for (c, p), v in table.values.items():
        D[ci[c], pi[p]] = v
    return countries, products, D


def rca_from_matrix(D: np.ndarray, countries, products) -> RcaMatrix:
    D = np.asarray(D, dtype=float)
    absent = np.isnan(D)
    Dz = np.where(absent, 0.0, D)
    total = Dz.sum()
    if total <= 0:
        raise EmptyInputError("all export values are zero")
    row = Dz.sum(axis=1)
    col = Dz.sum(axis=0)
    missing = absent | (row == 0)[:, None] | (col == 0)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (Dz / row[:, None]) / (col / total)[None, :]
    values[missing] = 0.0
    return RcaMatrix(list(countries), list(products), values, missing)


def compute_rca(table: TradeFlowTable) -> RcaMatrix:
    if not table.values:
        raise EmptyInputError("trade table is empty")
    countries, products, D = trade_matrix(table)
    return rca_from_matrix(D, countries, products)


def _side_groups(x: np.ndarray, lowest: int, degenerate: int) -> np.ndarray:
    # Quartile bins [q_{k-1}, q_k), last bin closed.
    if np.all(x == x[0]):
        return np.full(x.shape, degenerate, dtype=np.int8)
    edges = np.quantile(x, [0.25, 0.5, 0.75])
    return (lowest + np.searchsorted(edges, x, side="right")).astype(np.int8)


def discretize(rca: RcaMatrix) -> DiscreteMatrix:
    """Map observed RCA values to groups -4..-1 (RCA < 1) and 1..4 (RCA >= 1).

    Quartiles are taken separately on each side of RCA = 1 over every
    observed cell of the matrix. Missing cells get group 0. A side whose
    values are all identical collapses onto its lowest group (-4 or 1).
    """
    groups = np.zeros(rca.values.shape, dtype=np.int8)
    obs = ~rca.missing
    below = obs & (rca.values < 1)
    above = obs & (rca.values >= 1)
    if below.any():
        groups[below] = _side_groups(rca.values[below], -4, -4)
    else:
        warnings.warn("no observed RCA values below 1; negative groups are empty", DataWarning, stacklevel=2)
    if above.any():
        groups[above] = _side_groups(rca.values[above], 1, 1)
    else:
        warnings.warn("no observed RCA values >= 1; positive groups are empty", DataWarning, stacklevel=2)
    return DiscreteMatrix(list(rca.countries), list(rca.products), groups)


def log_transform(rca: RcaMatrix) -> LogRcaMatrix:
    """Element-wise natural log of observed RCA; non-positive cells become unobserved."""
    obs = ~rca.missing
    bad = obs & (rca.values <= 0)
    if bad.any():
        warnings.warn(f"{int(bad.sum())} observed RCA cells are <= 0 and are excluded in log mode",
                      DataWarning, stacklevel=2)
    observed = obs & ~bad
    values = np.zeros(rca.values.shape)
    values[observed] = np.log(rca.values[observed])
    return LogRcaMatrix(list(rca.countries), list(rca.products), values, observed)
