"""Reading and validating the holdings, fund-return and factor tables.

Three flat CSV files feed everything downstream::

    holdings.csv   quarter_end,fund_id,constituent_id,market_value,is_equity
    returns.csv    date,fund_id,net_return,expense_ratio,fee_12b1
    factors.csv    date,mkt_rf,smb,hml,rmw,cma,rf

plus an optional ``portfolio_map.csv`` (``fund_id,portfolio_id,tna``) used to
fold share-class level returns into portfolio level returns.

The sample filters (80% equity exposure, presence in two consecutive quarters)
are applied by :func:`build_panel`, which is what the rest of the package
consumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .errors import InputError

log = logging.getLogger(__name__)

TRADING_DAYS = 252
MIN_EQUITY_SHARE = 0.80
MAX_MISSING_FRACTION = 0.20
# Longest tolerated run of missing weekdays in the factor calendar (9/11 closure).
MAX_MISSING_WEEKDAYS = 4
SPARSE_DENSITY = 0.10

HOLDINGS_COLUMNS = ("quarter_end", "fund_id", "constituent_id", "market_value", "is_equity")
RETURNS_COLUMNS = ("date", "fund_id", "net_return", "expense_ratio", "fee_12b1")
FACTORS_COLUMNS = ("date", "mkt_rf", "smb", "hml", "rmw", "cma", "rf")
PORTFOLIO_MAP_COLUMNS = ("fund_id", "portfolio_id", "tna")


@dataclass(frozen=True)
class IngestConfig:
    min_equity_share: float = MIN_EQUITY_SHARE
    max_missing_fraction: float = MAX_MISSING_FRACTION
    max_missing_weekdays: int = MAX_MISSING_WEEKDAYS
    portfolio_map: Path | None = None
    consecutive: bool = True


# ---------------------------------------------------------------------------
# snapshots and panels


@dataclass(frozen=True)
class HoldingsSnapshot:
    """One quarter of fund x constituent market values.

    ``values`` is either a dense ndarray or a CSR sparse array; which one is
    picked by :func:`choose_storage` depending on fill ratio.
    ``equity_value`` holds, per fund, the part of the market value flagged as
    equity.
    """

    quarter: pd.Period
    values: np.ndarray | sp.csr_array
    funds: tuple[str, ...]
    constituents: tuple[str, ...]
    equity_value: np.ndarray | None = None

    def __post_init__(self):
        n_f, n_c = self.values.shape
        if n_f != len(self.funds) or n_c != len(self.constituents):
            raise ValueError("snapshot matrix does not match its index maps")

    @property
    def date(self) -> str:
        return quarter_label(self.quarter)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def dense(self) -> np.ndarray:
        if sp.issparse(self.values):
            return self.values.toarray()
        return np.asarray(self.values, dtype=float)

    def fund_totals(self) -> np.ndarray:
        return np.asarray(self.values.sum(axis=1), dtype=float).ravel()

    def constituent_totals(self) -> np.ndarray:
        return np.asarray(self.values.sum(axis=0), dtype=float).ravel()

    def select_funds(self, funds: Sequence[str], drop_empty_constituents: bool = True) -> HoldingsSnapshot:
        """Restrict to ``funds`` (kept in the snapshot's own order)."""
        wanted = set(funds)
        rows = np.array([i for i, f in enumerate(self.funds) if f in wanted], dtype=int)
        values = self.values[rows] if len(rows) else self.values[:0]
        equity = None if self.equity_value is None else self.equity_value[rows]
        snap = HoldingsSnapshot(
            self.quarter, choose_storage(values), tuple(self.funds[i] for i in rows),
            self.constituents, equity,
        )
        return snap.drop_empty_constituents() if drop_empty_constituents else snap

    def drop_empty_constituents(self) -> HoldingsSnapshot:
        keep = np.flatnonzero(self.constituent_totals() > 0)
        if len(keep) == len(self.constituents):
            return self
        values = self.values[:, keep]
        return HoldingsSnapshot(
            self.quarter, choose_storage(values), self.funds,
            tuple(self.constituents[j] for j in keep), self.equity_value,
        )


def choose_storage(matrix) -> np.ndarray | sp.csr_array:
    """Sparse CSR below 10% fill, dense otherwise."""
    n_f, n_c = matrix.shape
    size = n_f * n_c
    if sp.issparse(matrix):
        nnz = matrix.count_nonzero()
        if size and nnz / size >= SPARSE_DENSITY:
            return matrix.toarray().astype(float)
        out = sp.csr_array(matrix, dtype=float)
        out.eliminate_zeros()
        return out
    matrix = np.asarray(matrix, dtype=float)
    if size and np.count_nonzero(matrix) / size < SPARSE_DENSITY:
        return sp.csr_array(matrix)
    return matrix


def quarter_label(q: pd.Period) -> str:
    return q.end_time.strftime("%Y-%m-%d")


def parse_quarter(label: str) -> pd.Period:
    return pd.Period(pd.Timestamp(label), freq="Q")


@dataclass(frozen=True)
class SamplePanel:
    """Holdings snapshots plus daily gross returns and factors.

    ``gross_returns`` is a dates x funds frame (NaN where a fund has no
    observation); ``factors`` is indexed by the same trading calendar.
    """

    quarters: tuple[pd.Period, ...]
    snapshots: Mapping[pd.Period, HoldingsSnapshot]
    gross_returns: pd.DataFrame
    factors: pd.DataFrame
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.quarters, self.quarters[1:])):
            raise ValueError("panel quarters must be strictly increasing")

    def trading_dates(self, quarter: pd.Period) -> pd.DatetimeIndex:
        idx = self.factors.index
        return idx[(idx >= quarter.start_time) & (idx <= quarter.end_time)]

    def evaluation_dates(self, quarter: pd.Period) -> pd.DatetimeIndex:
        """Trading dates of the quarter following formation quarter ``quarter``."""
        return self.trading_dates(quarter + 1)

    @property
    def has_five_factors(self) -> bool:
        return bool(self.factors[["rmw", "cma"]].notna().all().all())


# ---------------------------------------------------------------------------
# arithmetic


def gross_return(net_return, expense_ratio, fee_12b1):
    """Net return plus the annual fees prorated over 252 trading days."""
    return net_return + (expense_ratio + fee_12b1) / TRADING_DAYS


# ---------------------------------------------------------------------------
# CSV parsing


def _read_csv(path, columns: Sequence[str], what: str, optional: Sequence[str] = ()) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(columns))
    header = [c.strip() for c in df.columns]
    missing = [c for c in columns if c not in header and c not in optional]
    if missing:
        raise InputError(f"{path}: header is missing column(s) {', '.join(missing)}")
    df.columns = header
    for c in optional:
        if c not in df.columns:
            df[c] = ""
    return df[list(columns)].apply(lambda s: s.str.strip())


def _bad(path, df: pd.DataFrame, mask, column: str, reason: str):
    if np.any(mask):
        pos = int(np.flatnonzero(np.asarray(mask))[0])
        # header is line 1
        line = pos + 2
        raise InputError(f"{path}:{line}: column '{column}' {reason} (value {df[column].iloc[pos]!r})")


def _dates(path, df, column) -> pd.Series:
    out = pd.to_datetime(df[column], format="%Y-%m-%d", errors="coerce")
    _bad(path, df, out.isna(), column, "is not an ISO date")
    return out


def _numbers(path, df, column, allow_empty=False) -> pd.Series:
    raw = df[column]
    out = pd.to_numeric(raw, errors="coerce")
    bad = out.isna() | ~np.isfinite(out.fillna(0.0))
    if allow_empty:
        bad &= raw != ""
    _bad(path, df, bad, column, "is not a finite decimal number")
    return out.astype(float)


def _ids(path, df, column) -> pd.Series:
    _bad(path, df, df[column] == "", column, "is empty")
    return df[column]


def read_holdings(path) -> pd.DataFrame:
    """Parse holdings.csv into a long frame keyed by calendar quarter.

    Duplicate (quarter, fund, constituent) rows are summed.  If a fund reports
    on more than one date inside a calendar quarter only the latest report is
    kept.
    """
    raw = _read_csv(path, HOLDINGS_COLUMNS, "holdings")
    if raw.empty:
        raise InputError(f"{path}: no snapshots (holdings file has no rows)")
    dates = _dates(path, raw, "quarter_end")
    fund = _ids(path, raw, "fund_id")
    const = _ids(path, raw, "constituent_id")
    value = _numbers(path, raw, "market_value")
    _bad(path, raw, value < 0, "market_value", "is negative")
    _bad(path, raw, ~raw["is_equity"].isin(["0", "1"]), "is_equity", "must be 1 or 0")
    df = pd.DataFrame({
        "date": dates, "quarter": dates.dt.to_period("Q"), "fund_id": fund,
        "constituent_id": const, "market_value": value, "is_equity": raw["is_equity"] == "1",
    })
    latest = df.groupby(["quarter", "fund_id"])["date"].transform("max")
    stale = df["date"] != latest
    if stale.any():
        log.warning("%s: %d holding rows superseded by a later report in the same quarter", path, int(stale.sum()))
        df = df[~stale]
    df["equity_value"] = df["market_value"].where(df["is_equity"], 0.0)
    agg = (df.groupby(["quarter", "fund_id", "constituent_id"], sort=True)[["market_value", "equity_value"]]
           .sum().reset_index())
    n_dup = len(df) - len(agg)
    if n_dup:
        log.info("%s: %d duplicate holding rows aggregated", path, n_dup)
    agg.attrs["duplicates_aggregated"] = n_dup
    agg.attrs["superseded_rows"] = int(stale.sum())
    return agg


def read_returns(path) -> pd.DataFrame:
    """Parse returns.csv and add the ``gross_return`` column."""
    raw = _read_csv(path, RETURNS_COLUMNS, "returns")
    dates = _dates(path, raw, "date")
    fund = _ids(path, raw, "fund_id")
    net = _numbers(path, raw, "net_return")
    _bad(path, raw, net <= -1, "net_return", "must exceed -1")
    er = _numbers(path, raw, "expense_ratio")
    _bad(path, raw, er < 0, "expense_ratio", "is negative")
    fee = _numbers(path, raw, "fee_12b1")
    _bad(path, raw, fee < 0, "fee_12b1", "is negative")
    df = pd.DataFrame({"date": dates, "fund_id": fund, "net_return": net,
                       "expense_ratio": er, "fee_12b1": fee})
    dup = df.duplicated(["date", "fund_id"])
    _bad(path, raw, dup, "fund_id", "repeats a (date, fund_id) pair")
    df["gross_return"] = gross_return(df["net_return"], df["expense_ratio"], df["fee_12b1"])
    return df


def read_factors(path, max_missing_weekdays: int = MAX_MISSING_WEEKDAYS) -> pd.DataFrame:
    """Parse factors.csv into a date-indexed frame.

    rmw/cma may be left empty (three-factor-only data); they become NaN.
    A run of more than ``max_missing_weekdays`` absent weekdays between two
    consecutive rows is treated as a gap and rejected.
    """
    raw = _read_csv(path, FACTORS_COLUMNS, "factors", optional=("rmw", "cma"))
    if raw.empty:
        raise InputError(f"{path}: factor file has no rows")
    dates = _dates(path, raw, "date")
    _bad(path, raw, dates.duplicated(), "date", "is duplicated")
    out = {"date": dates}
    for c in FACTORS_COLUMNS[1:]:
        out[c] = _numbers(path, raw, c, allow_empty=c in ("rmw", "cma"))
    df = pd.DataFrame(out).sort_values("date").set_index("date")
    d = df.index.values.astype("datetime64[D]")
    if len(d) > 1:
        missing = np.busday_count(d[:-1] + 1, d[1:])
        gaps = np.flatnonzero(missing > max_missing_weekdays)
        if len(gaps):
            g = gaps[0]
            raise InputError(
                f"{path}: gap in factor series between {df.index[g].date()} and "
                f"{df.index[g + 1].date()} ({int(missing[g])} weekdays missing)"
            )
    return df


def read_portfolio_map(path) -> pd.DataFrame:
    raw = _read_csv(path, PORTFOLIO_MAP_COLUMNS, "portfolio map")
    fund = _ids(path, raw, "fund_id")
    port = _ids(path, raw, "portfolio_id")
    tna = _numbers(path, raw, "tna")
    _bad(path, raw, tna < 0, "tna", "is negative")
    _bad(path, raw, fund.duplicated(), "fund_id", "is mapped twice")
    return pd.DataFrame({"fund_id": fund, "portfolio_id": port, "tna": tna})


def aggregate_portfolios(returns: pd.DataFrame, mapping: pd.DataFrame) -> pd.DataFrame:
    """Fold fund-level gross returns into portfolio-level ones, TNA weighted.

    Funds absent from the map pass through unchanged under their own id.
    Weights are renormalised each day over the funds reporting that day.
    """
    df = returns.merge(mapping, on="fund_id", how="left")
    df["portfolio_id"] = df["portfolio_id"].fillna(df["fund_id"])
    df["tna"] = df["tna"].fillna(1.0)
    df["w"] = df["tna"]
    df["wr"] = df["w"] * df["gross_return"]
    g = df.groupby(["date", "portfolio_id"], sort=True)[["w", "wr"]].sum().reset_index()
    # all-zero TNA falls back to an equal weight
    counts = df.groupby(["date", "portfolio_id"], sort=True)["gross_return"].agg(["mean"]).reset_index()
    g["gross_return"] = np.where(g["w"] > 0, g["wr"] / g["w"].where(g["w"] > 0, 1.0), counts["mean"])
    return g.rename(columns={"portfolio_id": "fund_id"})[["date", "fund_id", "gross_return"]]


# ---------------------------------------------------------------------------
# snapshots


def snapshots_from_long(holdings: pd.DataFrame) -> dict[pd.Period, HoldingsSnapshot]:
    """Turn the aggregated long holdings frame into one snapshot per quarter."""
    out = {}
    for quarter, grp in holdings.groupby("quarter", sort=True):
        funds = tuple(sorted(grp["fund_id"].unique()))
        consts = tuple(sorted(grp["constituent_id"].unique()))
        fi = pd.Index(funds).get_indexer(grp["fund_id"])
        ci = pd.Index(consts).get_indexer(grp["constituent_id"])
        mat = sp.csr_array((grp["market_value"].to_numpy(), (fi, ci)), shape=(len(funds), len(consts)))
        equity = np.bincount(fi, weights=grp["equity_value"].to_numpy(), minlength=len(funds))
        snap = HoldingsSnapshot(quarter, choose_storage(mat), funds, consts, equity)
        out[quarter] = snap.drop_empty_constituents()
    return out


def _filter_equity(snapshot: HoldingsSnapshot, min_share: float):
    totals = snapshot.fund_totals()
    equity = snapshot.equity_value if snapshot.equity_value is not None else totals
    zero = totals <= 0
    share = np.divide(equity, totals, out=np.zeros_like(totals), where=~zero)
    keep = ~zero & (share >= min_share - 1e-12)
    dropped_zero = [f for f, z in zip(snapshot.funds, zero) if z]
    dropped_low = [f for f, k, z in zip(snapshot.funds, keep, zero) if not k and not z]
    if dropped_zero:
        log.warning("%s: %d fund(s) with zero total market value dropped", snapshot.date, len(dropped_zero))
    kept = [f for f, k in zip(snapshot.funds, keep) if k]
    return snapshot.select_funds(kept), dropped_low, dropped_zero


def filter_equity_funds(snapshot: HoldingsSnapshot, min_share: float = MIN_EQUITY_SHARE) -> HoldingsSnapshot:
    """Keep funds whose equity share of market value is at least ``min_share``."""
    return _filter_equity(snapshot, min_share)[0]


def _filter_consecutive(snapshots: Mapping[pd.Period, HoldingsSnapshot]):
    kept, dropped = {}, {}
    for q in sorted(snapshots):
        snap = snapshots[q]
        prev = snapshots.get(q - 1)
        prev_funds = set(prev.funds) if prev is not None else set()
        eligible = [f for f in snap.funds if f in prev_funds]
        dropped[q] = len(snap.funds) - len(eligible)
        if eligible:
            kept[q] = snap.select_funds(eligible)
    return kept, dropped


def filter_consecutive(panel: SamplePanel) -> SamplePanel:
    """Keep, at each quarter, only funds also present in the previous calendar quarter.

    Quarters left without any eligible fund (always the first one) are removed.
    """
    kept, dropped = _filter_consecutive(panel.snapshots)
    prov = dict(panel.provenance)
    prov["dropped_not_consecutive"] = {quarter_label(q): n for q, n in dropped.items()}
    return SamplePanel(tuple(sorted(kept)), kept, panel.gross_returns, panel.factors, prov)


# ---------------------------------------------------------------------------
# top level


def parse_inputs(holdings_path, returns_path, factors_path, config: IngestConfig | None = None) -> SamplePanel:
    """Read and validate the three tables into an unfiltered :class:`SamplePanel`.

    Return rows for funds that never appear in any snapshot are dropped, as are
    rows dated off the factor calendar; both counts land in ``provenance``.
    """
    config = config or IngestConfig()
    holdings = read_holdings(holdings_path)
    factors = read_factors(factors_path, config.max_missing_weekdays)
    returns = read_returns(returns_path)[["date", "fund_id", "gross_return"]]
    if config.portfolio_map is not None:
        returns = aggregate_portfolios(returns, read_portfolio_map(config.portfolio_map))

    known = set(holdings["fund_id"])
    orphan = ~returns["fund_id"].isin(known)
    if orphan.any():
        log.warning("%s: %d return row(s) for funds absent from all snapshots dropped",
                    returns_path, int(orphan.sum()))
    returns = returns[~orphan]
    off = ~returns["date"].isin(factors.index)
    if off.any():
        log.warning("%s: %d return row(s) dated off the factor calendar dropped", returns_path, int(off.sum()))
    returns = returns[~off]

    wide = returns.pivot(index="date", columns="fund_id", values="gross_return")
    wide = wide.reindex(index=factors.index, columns=sorted(wide.columns))
    wide.columns.name = None
    wide.index.name = "date"

    snaps = snapshots_from_long(holdings)
    prov = {
        "holding_rows": int(len(holdings)),
        "duplicates_aggregated": int(holdings.attrs.get("duplicates_aggregated", 0)),
        "superseded_rows": int(holdings.attrs.get("superseded_rows", 0)),
        "orphan_return_rows": int(orphan.sum()),
        "off_calendar_return_rows": int(off.sum()),
    }
    return SamplePanel(tuple(sorted(snaps)), snaps, wide, factors, prov)


def build_panel(holdings_path, returns_path, factors_path, config: IngestConfig | None = None) -> SamplePanel:
    """Parse inputs, then apply the equity-share and consecutive-quarter filters."""
    config = config or IngestConfig()
    raw = parse_inputs(holdings_path, returns_path, factors_path, config)
    return apply_filters(raw, config)


def apply_filters(panel: SamplePanel, config: IngestConfig | None = None) -> SamplePanel:
    config = config or IngestConfig()
    equity_ok = {}
    low, zero = {}, {}
    for q, snap in panel.snapshots.items():
        s, d_low, d_zero = _filter_equity(snap, config.min_equity_share)
        low[quarter_label(q)] = len(d_low)
        zero[quarter_label(q)] = len(d_zero)
        if s.funds:
            equity_ok[q] = s
    prov = dict(panel.provenance, dropped_low_equity=low, dropped_zero_value=zero)
    filtered = SamplePanel(tuple(sorted(equity_ok)), equity_ok, panel.gross_returns, panel.factors, prov)
    if config.consecutive:
        filtered = filter_consecutive(filtered)
    if not filtered.quarters:
        hint = " (a single quarter never passes the consecutive-quarter filter)" if len(panel.quarters) == 1 else ""
        raise InputError("no snapshots survive the sample filters" + hint)
    return filtered


def evaluation_coverage(panel: SamplePanel, quarter: pd.Period, funds: Sequence[str],
                        max_missing_fraction: float = MAX_MISSING_FRACTION) -> tuple[list[str], list[str]]:
    """Split ``funds`` into (covered, excluded) for the evaluation quarter after ``quarter``.

    A fund is covered when it has returns on at least ``1 - max_missing_fraction``
    of the evaluation trading days (and on at least one day).
    """
    dates = panel.evaluation_dates(quarter)
    if len(dates) == 0:
        return [], list(funds)
    present = [f for f in funds if f in panel.gross_returns.columns]
    counts = panel.gross_returns.loc[dates, present].notna().sum(axis=0) if present else pd.Series(dtype=float)
    need = max(1, int(np.ceil((1.0 - max_missing_fraction) * len(dates) - 1e-9)))
    covered = [f for f in present if counts[f] >= need]
    covered_set = set(covered)
    return covered, [f for f in funds if f not in covered_set]
