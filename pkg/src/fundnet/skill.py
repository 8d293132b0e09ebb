"""Ownership-weighted skill (delta*), fund size and descriptive statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy import stats

from .ingest import HoldingsSnapshot

log = logging.getLogger(__name__)


def _matrix(snapshot):
    if isinstance(snapshot, HoldingsSnapshot):
        return snapshot.values, snapshot.funds
    H = snapshot
    H = sp.csr_array(H, dtype=float) if sp.issparse(H) else np.asarray(H, dtype=float)
    return H, tuple(f"F{i}" for i in range(H.shape[0]))


def weight_matrix(H):
    """Row-normalised holdings: each fund's portfolio weights."""
    rows = np.asarray(H.sum(axis=1), dtype=float).ravel()
    inv = np.divide(1.0, rows, out=np.zeros_like(rows), where=rows > 0)
    if sp.issparse(H):
        return sp.csr_array(sp.diags_array(inv) @ H)
    return H * inv[:, None]


def ownership_matrix(H):
    """Constituent x fund matrix of each fund's share of a constituent's total holding."""
    cols = np.asarray(H.sum(axis=0), dtype=float).ravel()
    inv = np.divide(1.0, cols, out=np.zeros_like(cols), where=cols > 0)
    if sp.issparse(H):
        return sp.csr_array((H @ sp.diags_array(inv)).T)
    return (H * inv[None, :]).T


def cohen_delta(snapshot, past_alpha) -> pd.Series:
    """delta*_i = sum_j w_ij sum_k v_jk alpha_k over funds with a past alpha.

    Funds without a finite ``past_alpha`` are removed from both W and V before
    the product, so constituents only they held drop out as well.
    """
    H, funds = _matrix(snapshot)
    if isinstance(past_alpha, pd.Series):
        a = past_alpha.reindex(list(funds)).to_numpy(dtype=float)
    else:
        a = np.asarray(past_alpha, dtype=float)
    keep = np.flatnonzero(np.isfinite(a))
    if len(keep) < len(funds):
        log.info("%d fund(s) without past alpha excluded from delta*", len(funds) - len(keep))
    H = H[keep]
    if sp.issparse(H):
        H = sp.csr_array(H)
    cols = np.asarray(H.sum(axis=0), dtype=float).ravel()
    held = np.flatnonzero(cols > 0)
    H = H[:, held]
    W = weight_matrix(H)
    V = ownership_matrix(H)
    delta = W @ (V @ a[keep])
    return pd.Series(np.asarray(delta, dtype=float).ravel(),
                     index=pd.Index([funds[i] for i in keep], name="fund_id"), name="delta")


def fund_size(snapshot) -> pd.Series:
    """Total market value held by each fund."""
    H, funds = _matrix(snapshot)
    return pd.Series(np.asarray(H.sum(axis=1), dtype=float).ravel(),
                     index=pd.Index(funds, name="fund_id"), name="size")


@dataclass(frozen=True)
class SummaryStats:
    n: int
    min: float
    max: float
    mean: float
    std: float
    skew: float
    kurt: float
    moments_defined: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


def summary_stats(values) -> SummaryStats:
    """min/max/mean, sample std (n-1), moment skewness and non-excess kurtosis.

    For a constant series skewness and kurtosis are NaN and
    ``moments_defined`` is False.
    """
    x = np.asarray(values, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if len(x) < 2:
        raise ValueError("summary statistics need at least two observations")
    std = float(np.std(x, ddof=1))
    if np.ptp(x) == 0:
        return SummaryStats(len(x), float(x.min()), float(x.max()), float(x.mean()), std,
                            float("nan"), float("nan"), False)
    return SummaryStats(
        len(x), float(x.min()), float(x.max()), float(x.mean()), std,
        float(stats.skew(x, bias=True)), float(stats.kurtosis(x, fisher=False, bias=True)),
    )


def summary_table(quantities: dict[str, object]) -> pd.DataFrame:
    """One row of :func:`summary_stats` per named quantity."""
    rows = {name: summary_stats(v).as_dict() for name, v in quantities.items()}
    df = pd.DataFrame.from_dict(rows, orient="index")
    df.index.name = "quantity"
    return df


SCATTER_COLUMNS = ["quarter", "fund_id", "acc", "inv_acc", "past_alpha_3f", "past_alpha_5f",
                   "delta_3f", "delta_5f", "diversification", "size", "acc_decile"]


def scatter_export(formations, k: int = 10) -> pd.DataFrame:
    """Pooled fund-quarter rows for the ACC scatter plots.

    ``formations`` is an iterable of objects with ``quarter_label`` and a
    ``criteria`` frame (see :mod:`fundnet.sorts`).  ``acc_decile`` is 1..k from
    the same ranking used by the sorts (blank when fewer than k funds have an
    ACC in that quarter).
    """
    from .sorts import rank_and_bucket

    parts = []
    for form in formations:
        c = form.criteria
        df = pd.DataFrame(index=c.index)
        df.insert(0, "quarter", form.quarter_label)
        df["fund_id"] = c.index
        for col in SCATTER_COLUMNS[2:]:
            if col == "inv_acc":
                df[col] = 1.0 / c["acc"] if "acc" in c else np.nan
            elif col == "acc_decile":
                df[col] = pd.array([pd.NA] * len(c), dtype="Int64")
                accs = c["acc"].dropna() if "acc" in c else pd.Series(dtype=float)
                if len(accs) >= k:
                    part = rank_and_bucket(accs, k)
                    for b, members in enumerate(part.buckets, start=1):
                        df.loc[list(members), col] = b
            else:
                df[col] = c[col] if col in c else np.nan
        parts.append(df[SCATTER_COLUMNS])
    if not parts:
        return pd.DataFrame(columns=SCATTER_COLUMNS)
    return pd.concat(parts, ignore_index=True)
