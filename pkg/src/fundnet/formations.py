"""Per-quarter ranking inputs (ACC, diversification, past alphas, delta*).

A formation quarter t uses the holdings snapshot at the end of t, past alphas
estimated over the three calendar quarters t-2..t, and is evaluated on the
trading days of quarter t+1.  Quarters without a full look-back or without a
complete evaluation quarter in the factor calendar are skipped.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .factors import LOOKBACK_QUARTERS, FactorModelSpec, estimate_alphas, lookback_window
from .ingest import MAX_MISSING_FRACTION, SamplePanel, evaluation_coverage, quarter_label
from .network import ReflectionProfile, snapshot_profile
from .skill import cohen_delta, fund_size
from .sorts import Formation, FormationSet

log = logging.getLogger(__name__)

# Slack allowed at the edges of a quarter when deciding whether the factor
# calendar covers it (holidays at quarter start/end).
EDGE_SLACK = pd.Timedelta(days=7)
MIN_LOOKBACK_FRACTION = 0.80


def _covers(index: pd.DatetimeIndex, start: pd.Timestamp, end: pd.Timestamp) -> bool:
    return len(index) > 0 and index.min() <= start + EDGE_SLACK and index.max() >= end - EDGE_SLACK


def formation_quarters(panel: SamplePanel, lookback_quarters: int = LOOKBACK_QUARTERS) -> tuple[list, dict]:
    """Quarters usable for formation, and the reason each other quarter was skipped."""
    idx = panel.factors.index
    usable, skipped = [], {}
    for q in panel.quarters:
        nxt = q + 1
        if not _covers(idx, nxt.start_time.normalize(), nxt.end_time.normalize()):
            skipped[quarter_label(q)] = "no complete evaluation quarter in the factor series"
            continue
        start, end = lookback_window(nxt, lookback_quarters)
        if not _covers(idx, start, end):
            skipped[quarter_label(q)] = "insufficient look-back history"
            continue
        usable.append(q)
    for label, why in skipped.items():
        log.info("formation %s skipped: %s", label, why)
    return usable, skipped


def past_alphas(panel: SamplePanel, quarter: pd.Period, model="3f",
                min_obs_fraction: float = MIN_LOOKBACK_FRACTION,
                lookback_quarters: int = LOOKBACK_QUARTERS) -> tuple[pd.DataFrame, dict]:
    """Look-back alphas of every fund in the quarter's snapshot."""
    funds = list(panel.snapshots[quarter].funds)
    window = lookback_window(quarter + 1, lookback_quarters)
    returns = panel.gross_returns.reindex(columns=funds)
    return estimate_alphas(returns, panel.factors, model, window, min_obs_fraction=min_obs_fraction)


def assemble_formation(panel: SamplePanel, quarter: pd.Period, profile: ReflectionProfile,
                       alphas: Mapping[str, pd.DataFrame],
                       max_missing_fraction: float = MAX_MISSING_FRACTION) -> Formation:
    snap = panel.snapshots[quarter]
    covered, not_covered = evaluation_coverage(panel, quarter, snap.funds, max_missing_fraction)
    excluded = {f: "too few returns in the evaluation quarter" for f in not_covered}
    crit = pd.DataFrame(index=pd.Index(covered, name="fund_id"))
    k = pd.DataFrame(profile.k_fund, index=pd.Index(profile.funds))
    iso = pd.Series(profile.isolated_funds, index=pd.Index(profile.funds))
    crit["acc"] = k[1].where(~iso).reindex(crit.index) if profile.n_max >= 1 else np.nan
    crit["diversification"] = k[0].where(~iso).reindex(crit.index)
    crit["size"] = fund_size(snap).reindex(crit.index)
    for model in sorted(alphas):
        a = alphas[model]["alpha_daily"]
        crit[f"past_alpha_{model}"] = a.reindex(crit.index)
        crit[f"delta_{model}"] = cohen_delta(snap, a).reindex(crit.index) if len(a) else np.nan
    if len(not_covered):
        log.info("%s: %d fund(s) excluded for missing evaluation returns", quarter_label(quarter), len(not_covered))
    return Formation(quarter, panel.evaluation_dates(quarter), crit, excluded)


def build_formations(panel: SamplePanel, threshold: float = 1.0, n_max: int = 2,
                     models: Sequence[str] = ("3f", "5f"),
                     max_missing_fraction: float = MAX_MISSING_FRACTION,
                     min_obs_fraction: float = MIN_LOOKBACK_FRACTION,
                     threads: int = 1, label: str = "full") -> FormationSet:
    """Compute every ranking input for every usable formation quarter."""
    models = [FactorModelSpec.get(m).kind for m in models]
    quarters, _ = formation_quarters(panel)

    def one(q):
        _, _, prof = snapshot_profile(panel.snapshots[q], threshold, max(n_max, 1))
        alphas = {m: past_alphas(panel, q, m, min_obs_fraction)[0] for m in models}
        return assemble_formation(panel, q, prof, alphas, max_missing_fraction)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            forms = list(pool.map(one, quarters))
    else:
        forms = [one(q) for q in quarters]
    return FormationSet(tuple(forms), panel.gross_returns, panel.factors, label)
