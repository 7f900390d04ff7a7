"""Seeded synthetic inputs for smoke runs and tests."""
from __future__ import annotations

import numpy as np

from .data_ingest import TradeFlowTable
from .tables import write_table


def planted_trade_flows(n_countries=40, n_products=30, seed=0, boost=6.0, noise=0.6,
                        absent_fraction=0.02, year=2018) -> TradeFlowTable:
    """Two country clusters, two product clusters; exports are boosted inside matching clusters.

    Country sizes and product volumes are log-normal, so RCA spreads within
    each side of 1 while the cluster pattern decides which side a cell is on.
    A small share of pairs is left out to produce missing RCA cells.
    """
    rng = np.random.default_rng(seed)
    c_cluster = np.arange(n_countries) % 2
    p_cluster = np.arange(n_products) % 2
    size = rng.lognormal(0.0, 1.0, n_countries)
    volume = rng.lognormal(0.0, 1.0, n_products)
    match = c_cluster[:, None] == p_cluster[None, :]
    D = np.outer(size, volume) * np.where(match, boost, 1.0) * rng.lognormal(0.0, noise, (n_countries, n_products))
    absent = rng.random(D.shape) < absent_fraction
    values = {}
    for c in range(n_countries):
        for p in range(n_products):
            if not absent[c, p]:
                values[(f"C{c:03d}", f"{p:04d}")] = float(D[c, p] * 1e6)
    return TradeFlowTable(year=year, values=values)


def write_trade_csv(path, table: TradeFlowTable) -> None:
    write_table(path, ["country", "product", "year", "value"],
                ([c, p, table.year, v] for (c, p), v in sorted(table.values.items())))


def low_rank_matrix(n_rows=60, n_cols=40, rank=2, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_rows, rank)) @ rng.standard_normal((rank, n_cols))
