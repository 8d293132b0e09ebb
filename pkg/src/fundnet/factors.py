"""Factor-model alphas by ordinary least squares on daily excess returns.

    r - rf = alpha + b1 * mkt_rf + b2 * smb + b3 * hml [+ b4 * rmw + b5 * cma] + e

Standard errors are the classical homoskedastic ones.  The regression is
solved through a QR factorisation of the column-equilibrated design matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from .errors import EstimationError

log = logging.getLogger(__name__)

TRADING_DAYS = 252
LOOKBACK_QUARTERS = 3

MODELS = {
    "3f": ("mkt_rf", "smb", "hml"),
    "5f": ("mkt_rf", "smb", "hml", "rmw", "cma"),
}


@dataclass(frozen=True)
class FactorModelSpec:
    kind: str
    factors: tuple[str, ...]

    @classmethod
    def get(cls, kind: str | FactorModelSpec) -> FactorModelSpec:
        if isinstance(kind, FactorModelSpec):
            return kind
        key = str(kind).lower().replace("-factor", "f").replace("three", "3").replace("five", "5")
        if key not in MODELS:
            raise ValueError(f"unknown factor model {kind!r} (expected 3f or 5f)")
        return cls(key, MODELS[key])

    @property
    def n_params(self) -> int:
        return len(self.factors) + 1


@dataclass(frozen=True)
class AlphaEstimate:
    alpha_daily: float
    betas: dict[str, float]
    se_alpha: float
    t_alpha: float
    n_obs: int
    window: tuple[pd.Timestamp | None, pd.Timestamp | None] = (None, None)
    se_betas: dict[str, float] = field(default_factory=dict)

    @property
    def alpha_annual_pct(self) -> float:
        return annualize_alpha(self.alpha_daily)

    @property
    def se_annual_pct(self) -> float:
        return annualize_alpha(self.se_alpha)


def annualize_alpha(alpha_daily):
    """Daily alpha -> percent per year (252 trading days)."""
    return alpha_daily * TRADING_DAYS * 100.0


def lookback_window(quarter: pd.Period, n_quarters: int = LOOKBACK_QUARTERS) -> tuple[pd.Timestamp, pd.Timestamp]:
    """Date interval covering the ``n_quarters`` calendar quarters before ``quarter``.

    ``quarter`` is the evaluation (holding) quarter, so for the quarter starting
    2005-07-01 the window runs 2004-10-01 .. 2005-06-30.
    """
    q = pd.Period(quarter, freq="Q")
    return (q - n_quarters).start_time.normalize(), (q - 1).end_time.normalize()


def _t_stat(coef, se):
    if se > 0:
        return coef / se
    if coef == 0:
        return float("nan")
    return float(np.copysign(np.inf, coef))


def _solve(X: np.ndarray, Y: np.ndarray):
    """Least squares for one design and several right-hand sides.

    Returns (coef [k x m], se [k x m]).  Raises on a rank-deficient design.
    """
    n, k = X.shape
    scale = np.sqrt((X * X).sum(axis=0))
    if np.any(scale == 0):
        raise EstimationError("design matrix has an all-zero column")
    Q, R = np.linalg.qr(X / scale, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() <= max(n, k) * np.finfo(float).eps * diag.max():
        raise EstimationError("design matrix is rank deficient")
    coef_scaled = solve_triangular(R, Q.T @ Y)
    resid = Y - (X / scale) @ coef_scaled
    dof = n - k
    s2 = (resid * resid).sum(axis=0) / dof
    Rinv = solve_triangular(R, np.eye(k))
    var_diag = (Rinv * Rinv).sum(axis=1)
    coef = coef_scaled / scale[:, None]
    se = np.sqrt(np.outer(var_diag, s2)) / scale[:, None]
    return coef, se


def _design(factors: pd.DataFrame, spec: FactorModelSpec) -> np.ndarray:
    cols = list(spec.factors)
    missing = [c for c in cols if c not in factors.columns]
    if missing:
        raise EstimationError(f"factor data lacks {', '.join(missing)} for the {spec.kind} model")
    F = factors[cols].to_numpy(dtype=float)
    if np.isnan(F).any():
        raise EstimationError(f"factor data has gaps in {', '.join(cols)} for the {spec.kind} model")
    return np.column_stack([np.ones(len(F)), F])


def _in_window(index: pd.DatetimeIndex, window):
    if window is None:
        return np.ones(len(index), dtype=bool)
    start, end = window
    mask = np.ones(len(index), dtype=bool)
    if start is not None:
        mask &= index >= pd.Timestamp(start)
    if end is not None:
        mask &= index <= pd.Timestamp(end)
    return mask


def estimate_alpha(returns: pd.Series, factors: pd.DataFrame, spec="3f", window=None,
                   excess: bool = True, label: str | None = None) -> AlphaEstimate:
    """OLS alpha of one return series.

    With ``excess=True`` (the default) ``factors['rf']`` is subtracted from the
    returns first; long-short spread series are passed with ``excess=False``.
    Only dates present (non-NaN) in both inputs and inside ``window`` are used.
    """
    spec = FactorModelSpec.get(spec)
    label = label or (returns.name if returns.name is not None else "series")
    fac = factors.loc[_in_window(factors.index, window)]
    r = returns.reindex(fac.index)
    ok = r.notna().to_numpy()
    fac = fac.loc[ok]
    y = r.to_numpy(dtype=float)[ok]
    if excess:
        y = y - fac["rf"].to_numpy(dtype=float)
    k = spec.n_params
    if len(y) < k + 2:
        raise EstimationError(f"{label}: {len(y)} observation(s) in window {_fmt(window)}, need {k + 2}")
    X = _design(fac, spec)
    coef, se = _solve(X, y[:, None])
    coef, se = coef[:, 0], se[:, 0]
    betas = dict(zip(spec.factors, map(float, coef[1:])))
    se_b = dict(zip(spec.factors, map(float, se[1:])))
    return AlphaEstimate(float(coef[0]), betas, float(se[0]), _t_stat(float(coef[0]), float(se[0])),
                         int(len(y)), _window_bounds(window, fac.index), se_b)


def _fmt(window):
    if window is None:
        return "(all dates)"
    s, e = window
    fmt = lambda d: "-" if d is None else pd.Timestamp(d).strftime("%Y-%m-%d")
    return f"[{fmt(s)}, {fmt(e)}]"


def _window_bounds(window, index):
    if window is not None:
        return tuple(None if d is None else pd.Timestamp(d) for d in window)
    return (index.min(), index.max()) if len(index) else (None, None)


def estimate_alphas(returns: pd.DataFrame, factors: pd.DataFrame, spec="3f", window=None,
                    min_obs_fraction: float = 0.0, excess: bool = True) -> tuple[pd.DataFrame, dict[str, str]]:
    """Alphas for every column of a dates x funds frame.

    Columns sharing the same pattern of missing days are solved together from a
    single factorisation.  A fund is skipped (and listed in the returned
    ``skipped`` mapping with the reason) when it has fewer than n_params + 2
    observations, or observations on less than ``min_obs_fraction`` of the
    window's dates.

    The result frame is indexed by fund id with columns ``alpha_daily``,
    ``se_alpha``, ``t_alpha``, ``n_obs`` and ``beta_<factor>``.
    """
    spec = FactorModelSpec.get(spec)
    fac = factors.loc[_in_window(factors.index, window)]
    R = returns.reindex(index=fac.index)
    X_full = _design(fac, spec) if len(fac) else np.empty((0, spec.n_params))
    rf = fac["rf"].to_numpy(dtype=float)
    Y = R.to_numpy(dtype=float)
    if excess:
        Y = Y - rf[:, None]
    present = ~np.isnan(Y)
    counts = present.sum(axis=0)
    need = max(spec.n_params + 2, int(np.ceil(min_obs_fraction * len(fac) - 1e-9)))
    skipped: dict[str, str] = {}
    groups: dict[bytes, list[int]] = {}
    for j, fund in enumerate(R.columns):
        if counts[j] < need:
            skipped[fund] = f"{int(counts[j])} observation(s) in window {_fmt(window)}, need {need}"
            continue
        groups.setdefault(present[:, j].tobytes(), []).append(j)

    cols = ["alpha_daily", "se_alpha", "t_alpha", "n_obs"] + [f"beta_{f}" for f in spec.factors]
    rows: dict[str, list] = {}
    for key in sorted(groups):
        idx = groups[key]
        mask = present[:, idx[0]]
        try:
            coef, se = _solve(X_full[mask], Y[np.ix_(mask, idx)])
        except EstimationError as exc:
            for j in idx:
                skipped[R.columns[j]] = str(exc)
            continue
        for m, j in enumerate(idx):
            a, s = float(coef[0, m]), float(se[0, m])
            rows[R.columns[j]] = [a, s, _t_stat(a, s), int(mask.sum())] + [float(b) for b in coef[1:, m]]
    out = pd.DataFrame.from_dict(rows, orient="index", columns=cols)
    out = out.reindex([c for c in R.columns if c in rows])
    out.index.name = "fund_id"
    out["n_obs"] = out["n_obs"].astype(int)
    if skipped:
        log.info("%d fund(s) skipped in alpha estimation over %s", len(skipped), _fmt(window))
    return out, skipped
