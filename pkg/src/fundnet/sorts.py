"""Quantile sorts of funds and post-ranking alphas of the resulting portfolios.

Every experiment follows the same recipe: at each formation quarter rank the
eligible funds on one (or two nested) criteria, form equal-weight portfolios
over the following quarter's trading days, string the quarterly pieces
together, and regress each resulting daily series on the factor model.
Long-short series (top-bottom, Avg) are regressed directly, without
subtracting the risk-free rate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import EmptyResultError, EstimationError
from .factors import FactorModelSpec, annualize_alpha, estimate_alpha

log = logging.getLogger(__name__)

# kind -> (high value is best, bucket label prefix)
CRITERIA = {
    "past_alpha": (True, "Q"),
    "cohen_delta": (True, "delta"),
    "acc": (False, "ACC"),
    "diversification": (False, "D"),
}
TOP_BOTTOM = "top-bottom"
AVG = "Avg"
CORE_FRACTION = 0.05


@dataclass(frozen=True)
class RankingCriterion:
    kind: str
    model: str | None = None

    def __post_init__(self):
        if self.kind not in CRITERIA:
            raise ValueError(f"unknown criterion {self.kind!r}; expected one of {sorted(CRITERIA)}")
        if self.kind in ("past_alpha", "cohen_delta"):
            if self.model is None:
                raise ValueError(f"criterion {self.kind!r} needs a factor model")
            object.__setattr__(self, "model", FactorModelSpec.get(self.model).kind)

    @classmethod
    def of(cls, crit, model: str | None = None) -> RankingCriterion:
        if isinstance(crit, RankingCriterion):
            return crit
        needs_model = crit in ("past_alpha", "cohen_delta")
        return cls(crit, model if needs_model else None)

    @property
    def high_is_best(self) -> bool:
        return CRITERIA[self.kind][0]

    @property
    def prefix(self) -> str:
        return CRITERIA[self.kind][1]

    @property
    def column(self) -> str:
        if self.kind == "past_alpha":
            return f"past_alpha_{self.model}"
        if self.kind == "cohen_delta":
            return f"delta_{self.model}"
        return self.kind

    def label(self, post_model: str) -> str:
        """Row label in the style ACC_5f / alpha_3f / delta_5f / D_3f."""
        short = {"past_alpha": "alpha", "cohen_delta": "delta", "acc": "ACC", "diversification": "D"}[self.kind]
        return f"{short}_{self.model or FactorModelSpec.get(post_model).kind}"


@dataclass(frozen=True)
class QuantilePartition:
    buckets: tuple[tuple[str, ...], ...]
    quarter: pd.Period | None = None

    @property
    def k(self) -> int:
        return len(self.buckets)

    def sizes(self) -> list[int]:
        return [len(b) for b in self.buckets]

    def members(self) -> list[str]:
        return [f for b in self.buckets for f in b]


# ---------------------------------------------------------------------------
# formations


@dataclass(frozen=True)
class Formation:
    """Everything needed to rank funds at one formation quarter.

    ``criteria`` is indexed by the funds eligible for the following evaluation
    quarter, with columns such as ``acc``, ``diversification``, ``size``,
    ``past_alpha_3f``, ``delta_3f``.  ``excluded`` maps fund ids dropped at this
    formation to the reason.
    """

    quarter: pd.Period
    eval_dates: pd.DatetimeIndex
    criteria: pd.DataFrame
    excluded: Mapping[str, str] = field(default_factory=dict)

    @property
    def quarter_label(self) -> str:
        return self.quarter.end_time.strftime("%Y-%m-%d")


@dataclass(frozen=True)
class FormationSet:
    formations: tuple[Formation, ...]
    gross_returns: pd.DataFrame
    factors: pd.DataFrame
    label: str = "full"

    def window(self, start=None, end=None, label: str | None = None) -> FormationSet:
        """Formations whose quarter-end date lies in [start, end]."""
        lo = pd.Timestamp(start) if start is not None else None
        hi = pd.Timestamp(end) if end is not None else None
        keep = []
        for f in self.formations:
            d = f.quarter.end_time.normalize()
            if (lo is None or d >= lo) and (hi is None or d <= hi):
                keep.append(f)
        return FormationSet(tuple(keep), self.gross_returns, self.factors, label or self.label)

    def __len__(self):
        return len(self.formations)


# ---------------------------------------------------------------------------
# building blocks


def rank_and_bucket(values: pd.Series, k: int, quarter: pd.Period | None = None) -> QuantilePartition:
    """Ascending sort (ties broken by fund id) into k near-equal buckets.

    With n = q*k + r funds the first r buckets get q + 1 members.
    """
    if k < 1:
        raise ValueError("k must be positive")
    v = pd.Series(values, dtype=float)
    v = v[np.isfinite(v.to_numpy())]
    n = len(v)
    if n < k:
        raise ValueError(f"cannot split {n} fund(s) into {k} buckets")
    ids = np.asarray([str(i) for i in v.index])
    order = np.lexsort((ids, v.to_numpy()))
    q, r = divmod(n, k)
    buckets, pos = [], 0
    for b in range(k):
        size = q + 1 if b < r else q
        buckets.append(tuple(ids[order[pos:pos + size]]))
        pos += size
    return QuantilePartition(tuple(buckets), quarter)


def trim_bucket(members: Sequence[str], acc: pd.Series, fraction: float = CORE_FRACTION) -> tuple[str, ...]:
    """Drop the floor(fraction * n) highest- and lowest-ACC members."""
    n = len(members)
    cut = int(np.floor(fraction * n + 1e-12))
    if cut == 0:
        return tuple(members)
    vals = acc.reindex(list(members))
    ranked = vals.dropna()
    ids = np.asarray([str(i) for i in ranked.index])
    order = ids[np.lexsort((ids, ranked.to_numpy()))]
    drop = set(order[:cut]) | set(order[-cut:])
    return tuple(m for m in members if m not in drop)


def core_trim(partition: QuantilePartition, acc: pd.Series, fraction: float = CORE_FRACTION) -> QuantilePartition:
    """Core version of a partition: ACC tails trimmed inside every bucket."""
    return QuantilePartition(tuple(trim_bucket(b, acc, fraction) for b in partition.buckets), partition.quarter)


_trim_partition = core_trim


def portfolio_returns(groups, gross_returns: pd.DataFrame, dates) -> pd.DataFrame:
    """Daily equal-weight returns of each group over ``dates``.

    ``groups`` is a QuantilePartition (columns 1..k) or a mapping label ->
    member funds.  The mean is taken over members reporting on that day; a day
    where no member reports is NaN.
    """
    if isinstance(groups, QuantilePartition):
        groups = {i + 1: b for i, b in enumerate(groups.buckets)}
    sub = gross_returns.reindex(index=pd.DatetimeIndex(dates))
    out = {}
    for label, members in groups.items():
        cols = [m for m in members if m in sub.columns]
        if cols:
            out[label] = sub[cols].mean(axis=1, skipna=True)
        else:
            out[label] = pd.Series(np.nan, index=sub.index)
    frame = pd.DataFrame(out, index=sub.index)
    empty = frame.isna()
    if empty.to_numpy().any():
        log.debug("%d bucket-day(s) without any reporting member", int(empty.to_numpy().sum()))
    return frame


def concatenate_quarters(fragments):
    """Stack chronologically ordered, non-overlapping daily fragments."""
    fragments = [f for f in fragments if len(f)]
    if not fragments:
        raise EmptyResultError("no portfolio fragments to concatenate")
    for a, b in zip(fragments, fragments[1:]):
        if not a.index.is_monotonic_increasing or a.index[-1] >= b.index[0]:
            raise ValueError(f"fragments overlap or are out of order near {b.index[0]:%Y-%m-%d}")
    if not fragments[-1].index.is_monotonic_increasing:
        raise ValueError("fragment dates are not increasing")
    return pd.concat(fragments)


# ---------------------------------------------------------------------------
# reports


@dataclass
class SortReport:
    """Grid of post-ranking alphas (percent per year) and |t| statistics."""

    experiment: str
    window: str
    model: str
    core_trim: bool
    rows: list[str]
    cols: list[str]
    alpha: pd.DataFrame
    se: pd.DataFrame
    t_abs: pd.DataFrame
    n_obs: pd.DataFrame
    series: pd.DataFrame
    counts: pd.DataFrame
    notes: list[str] = field(default_factory=list)
    members: dict[str, dict[str, tuple[str, ...]]] = field(default_factory=dict)

    def cell(self, row: str, col: str) -> dict:
        return {"alpha_annual_pct": self.alpha.at[row, col], "se_annual_pct": self.se.at[row, col],
                "t_abs": self.t_abs.at[row, col], "n_obs": self.n_obs.at[row, col]}

    def to_frame(self) -> pd.DataFrame:
        recs = []
        for r in self.rows:
            for c in self.cols:
                recs.append({"row": r, "col": c, "alpha_annual_pct": self.alpha.at[r, c],
                             "t_abs": self.t_abs.at[r, c], "se_annual_pct": self.se.at[r, c],
                             "n_obs": self.n_obs.at[r, c]})
        df = pd.DataFrame.from_records(recs)
        df["n_obs"] = df["n_obs"].astype("Int64")
        return df

    def to_text(self) -> str:
        """Aligned table: alphas on one line, (|t|) underneath."""
        cells = {(r, c): (_fmt(self.alpha.at[r, c]), "(" + _fmt(self.t_abs.at[r, c]) + ")")
                 for r in self.rows for c in self.cols}
        width = 1 + max([len(c) for c in self.cols] + [len(x) for pair in cells.values() for x in pair])
        lab = max(12, max(len(r) for r in self.rows) + 1)
        head = f"{self.experiment} | window={self.window} | model={self.model}" + (" | core" if self.core_trim else "")
        lines = [head, " " * lab + "".join(f"{c:>{width}}" for c in self.cols)]
        for r in self.rows:
            lines.append(f"{r:<{lab}}" + "".join(f"{cells[r, c][0]:>{width}}" for c in self.cols))
            lines.append(" " * lab + "".join(f"{cells[r, c][1]:>{width}}" for c in self.cols))
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if x is None or not np.isfinite(x):
        return "nan"
    return f"{x:.2f}" if abs(x) < 1e6 else f"{x:.2e}"


def _key(row: str, col: str) -> str:
    return f"{row}|{col}"


def _regress_grid(series: pd.DataFrame, spreads: set[str], factors: pd.DataFrame, model: str,
                  rows: list[str], cols: list[str]):
    grids = {name: pd.DataFrame(np.nan, index=rows, columns=cols, dtype=float) for name in ("a", "se", "t", "n")}
    notes = []
    for r in rows:
        for c in cols:
            key = _key(r, c)
            if key not in series:
                continue
            y = series[key].dropna()
            try:
                est = estimate_alpha(y, factors, model, excess=key not in spreads, label=key)
            except EstimationError as exc:
                notes.append(str(exc))
                log.warning("%s", exc)
                continue
            grids["a"].at[r, c] = annualize_alpha(est.alpha_daily)
            grids["se"].at[r, c] = annualize_alpha(est.se_alpha)
            grids["t"].at[r, c] = abs(est.t_alpha)
            grids["n"].at[r, c] = est.n_obs
    return grids, notes


def _spread(hi: pd.Series, lo: pd.Series) -> pd.Series:
    return hi - lo


def _row_mean(frame: pd.DataFrame) -> pd.Series:
    """Mean across columns, skipping NaN, summed left to right."""
    total = np.zeros(len(frame))
    count = np.zeros(len(frame))
    for col in frame.columns:
        v = frame[col].to_numpy(dtype=float)
        ok = ~np.isnan(v)
        total[ok] += v[ok]
        count += ok
    out = np.full(len(frame), np.nan)
    np.divide(total, count, out=out, where=count > 0)
    return pd.Series(out, index=frame.index)


# ---------------------------------------------------------------------------
# experiments


def _eligible(form: Formation, columns: Sequence[str]) -> pd.DataFrame:
    missing = [c for c in columns if c not in form.criteria]
    if missing:
        raise EmptyResultError(f"{form.quarter_label}: criteria {', '.join(missing)} not available")
    sub = form.criteria[list(columns)]
    return sub[np.isfinite(sub.to_numpy(dtype=float)).all(axis=1)]


def _acc_of(form: Formation) -> pd.Series:
    if "acc" not in form.criteria:
        raise EmptyResultError("core trimming needs ACC values")
    return form.criteria["acc"]


def one_way_sort(fset: FormationSet, criterion, model="3f", k: int = 10, core_trim: bool = False,
                 trim_fraction: float = CORE_FRACTION, experiment: str | None = None) -> SortReport:
    """Decile (k-quantile) sort on one criterion plus the top-bottom spread.

    ``model`` is the factor model of the post-ranking regressions; for
    past-alpha and delta* criteria it is also the model of the ranking signal
    unless ``criterion`` is passed as a RankingCriterion.
    """
    model = FactorModelSpec.get(model).kind
    crit = RankingCriterion.of(criterion, model)
    cols = [f"Q{i}" for i in range(1, k + 1)]
    row = crit.label(model)
    best, worst = (cols[-1], cols[0]) if crit.high_is_best else (cols[0], cols[-1])
    frags, counts, notes, members = [], {}, [], {}
    for form in fset.formations:
        vals = _eligible(form, [crit.column])[crit.column]
        if len(vals) < k:
            notes.append(f"{form.quarter_label}: {len(vals)} eligible fund(s) < {k}, quarter skipped")
            continue
        part = rank_and_bucket(vals, k, form.quarter)
        if core_trim:
            part = _trim_partition(part, _acc_of(form), trim_fraction)
        groups = {_key(row, c): b for c, b in zip(cols, part.buckets)}
        frags.append(portfolio_returns(groups, fset.gross_returns, form.eval_dates))
        counts[form.quarter_label] = {g: len(m) for g, m in groups.items()}
        members[form.quarter_label] = groups
    if not frags:
        raise EmptyResultError(f"one-way sort on {crit.column}: no usable formation quarter in window {fset.label}")
    series = concatenate_quarters(frags)
    tb = _key(row, TOP_BOTTOM)
    series[tb] = _spread(series[_key(row, best)], series[_key(row, worst)])
    grids, reg_notes = _regress_grid(series, {tb}, fset.factors, model, [row], cols + [TOP_BOTTOM])
    name = experiment or f"oneway_{crit.kind}_{model}" + ("_core" if core_trim else "")
    return SortReport(name, fset.label, model, core_trim, [row], cols + [TOP_BOTTOM],
                      grids["a"], grids["se"], grids["t"], grids["n"], series,
                      pd.DataFrame.from_dict(counts, orient="index"), notes + reg_notes, members)


def double_sort(fset: FormationSet, first="past_alpha", second="acc", model="3f", k1: int = 5, k2: int = 5,
                core_trim: bool = False, trim_fraction: float = CORE_FRACTION,
                experiment: str | None = None) -> SortReport:
    """Nested sort: k1 buckets on ``first``, then k2 buckets on ``second`` inside each.

    Columns of the report are the first-sort buckets plus Avg; rows are the
    second-sort buckets plus top-bottom (best minus worst second-sort bucket
    within the same first-sort bucket).  Avg is the equal-weight daily mix of
    the row's five portfolios, so the top-bottom/Avg cell is the mix of the
    five spreads.
    """
    model = FactorModelSpec.get(model).kind
    c1 = RankingCriterion.of(first, model)
    c2 = RankingCriterion.of(second, model)
    cols = [f"{c1.prefix}{j}" for j in range(1, k1 + 1)]
    rows = [f"{c2.prefix}{i}" for i in range(1, k2 + 1)]
    best, worst = (rows[-1], rows[0]) if c2.high_is_best else (rows[0], rows[-1])
    frags, counts, notes, members = [], {}, [], {}
    for form in fset.formations:
        sub = _eligible(form, [c1.column, c2.column])
        if len(sub) < k1 * k2:
            notes.append(f"{form.quarter_label}: {len(sub)} eligible fund(s) < {k1 * k2}, quarter skipped")
            continue
        outer = rank_and_bucket(sub[c1.column], k1, form.quarter)
        groups = {}
        for col, bucket in zip(cols, outer.buckets):
            inner = rank_and_bucket(sub.loc[list(bucket), c2.column], k2, form.quarter)
            if core_trim:
                inner = _trim_partition(inner, _acc_of(form), trim_fraction)
            for r, cell in zip(rows, inner.buckets):
                groups[_key(r, col)] = cell
        frags.append(portfolio_returns(groups, fset.gross_returns, form.eval_dates))
        counts[form.quarter_label] = {g: len(m) for g, m in groups.items()}
        members[form.quarter_label] = groups
        empty = [g for g, m in groups.items() if not m]
        if empty:
            notes.append(f"{form.quarter_label}: empty cell(s) {', '.join(empty)} skipped")
    if not frags:
        raise EmptyResultError(
            f"double sort {c1.column}/{c2.column}: no formation quarter with {k1 * k2}+ funds in window {fset.label}")
    series = concatenate_quarters(frags)
    spreads = set()
    for col in cols:
        key = _key(TOP_BOTTOM, col)
        series[key] = _spread(series[_key(best, col)], series[_key(worst, col)])
        spreads.add(key)
    for r in rows + [TOP_BOTTOM]:
        key = _key(r, AVG)
        series[key] = _row_mean(series[[_key(r, c) for c in cols]])
        if r == TOP_BOTTOM:
            spreads.add(key)
    grids, reg_notes = _regress_grid(series, spreads, fset.factors, model, rows + [TOP_BOTTOM], cols + [AVG])
    name = experiment or f"double_{c1.kind}_{c2.kind}_{model}" + ("_core" if core_trim else "")
    return SortReport(name, fset.label, model, core_trim, rows + [TOP_BOTTOM], cols + [AVG],
                      grids["a"], grids["se"], grids["t"], grids["n"], series,
                      pd.DataFrame.from_dict(counts, orient="index"), notes + reg_notes, members)


def reverse_sort(fset: FormationSet, model="3f", first="acc", second="past_alpha", k1: int = 5, k2: int = 5,
                 core_trim: bool = False, trim_fraction: float = CORE_FRACTION,
                 experiment: str | None = None) -> SortReport:
    """Double sort with the order swapped: ACC (or delta*) first, past alpha second."""
    model = FactorModelSpec.get(model).kind
    c1 = RankingCriterion.of(first, model)
    c2 = RankingCriterion.of(second, model)
    name = experiment or f"reverse_{c1.kind}_{c2.kind}_{model}" + ("_core" if core_trim else "")
    return double_sort(fset, c1, c2, model, k1, k2, core_trim, trim_fraction, experiment=name)


def median_split_series(fset: FormationSet, model="3f") -> pd.DataFrame:
    """Quarter-by-quarter alphas of the low-ACC (<= median) and high-ACC halves.

    Alphas and standard errors are annualised percentages estimated on each
    evaluation quarter's own daily series.
    """
    model = FactorModelSpec.get(model).kind
    recs = []
    for form in fset.formations:
        accs = _eligible(form, ["acc"])["acc"]
        if len(accs) < 2:
            log.warning("%s: fewer than two funds with ACC, quarter skipped", form.quarter_label)
            continue
        med = float(np.median(accs.to_numpy()))
        groups = {"low": tuple(accs.index[accs <= med]), "high": tuple(accs.index[accs > med])}
        frame = portfolio_returns(groups, fset.gross_returns, form.eval_dates)
        rec = {"quarter": form.quarter_label, "eval_start": form.eval_dates.min().strftime("%Y-%m-%d"),
               "median_acc": med}
        for side in ("low", "high"):
            rec[f"n_{side}"] = len(groups[side])
            y = frame[side].dropna()
            try:
                est = estimate_alpha(y, fset.factors, model, label=f"{form.quarter_label}/{side}")
                rec[f"alpha_{side}"] = annualize_alpha(est.alpha_daily)
                rec[f"se_{side}"] = annualize_alpha(est.se_alpha)
            except EstimationError as exc:
                log.warning("%s", exc)
                rec[f"alpha_{side}"] = rec[f"se_{side}"] = np.nan
        recs.append(rec)
    if not recs:
        raise EmptyResultError(f"median split: no usable formation quarter in window {fset.label}")
    cols = ["quarter", "eval_start", "median_acc", "alpha_low", "alpha_high", "se_low", "se_high", "n_low", "n_high"]
    return pd.DataFrame.from_records(recs)[cols]
