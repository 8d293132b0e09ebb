"""Seeded synthetic panels with planted commonality and skill effects.

Holdings follow a two-pool design.  Niche funds are split into small groups,
each group drawing its holdings from a private block of constituents, so
every niche constituent is held by at most ``niche_group_size`` funds.
Popular funds all draw from one shared pool.  After thresholding, niche funds
therefore end up with an ACC of at most ``niche_group_size`` while popular
funds sit well above it.

Daily gross returns are

    rf + beta_i . factors + s_c * niche_i(q) + s_a * skilled_i + sigma * eps

where ``niche_i(q)`` is the fund's niche status in the snapshot at the end of
the previous quarter (the holdings it carries through quarter q).  With
``redraw_niche`` the niche/popular assignment is reshuffled every quarter,
which makes a fund's look-back alpha independent of its current niche status.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InputError
from .ingest import TRADING_DAYS

FACTOR_NAMES = ("mkt_rf", "smb", "hml", "rmw", "cma")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_funds: int = 200
    n_constituents: int = 1000
    n_quarters: int = 12
    start_quarter: str = "2004Q1"
    niche_fraction: float = 0.5
    skill_fraction: float = 0.5
    popular_pool: int = 100
    holdings_per_fund: int = 15
    niche_group_size: int = 2
    s_c: float = 0.0
    s_a: float = 0.0
    sigma: float = 0.0
    beta_market: float = 1.0
    beta_dispersion: float = 0.0
    sigma_mkt: float = 0.01
    sigma_smb: float = 0.005
    sigma_hml: float = 0.005
    sigma_rmw: float = 0.004
    sigma_cma: float = 0.004
    rf_daily: float = 0.0001
    expense_ratio: float = 0.01
    fee_12b1: float = 0.0025
    redraw_niche: bool = False
    non_equity_fraction: float = 0.0
    identical_holdings: bool = False

    def __post_init__(self):
        problems = []
        if self.n_funds < 2:
            problems.append("n_funds must be at least 2")
        if self.n_quarters < 1:
            problems.append("n_quarters must be at least 1")
        for name in ("niche_fraction", "skill_fraction", "non_equity_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.sigma < 0 or self.beta_dispersion < 0:
            problems.append("sigma and beta_dispersion must be nonnegative")
        if self.niche_group_size < 1 or self.holdings_per_fund < 1:
            problems.append("niche_group_size and holdings_per_fund must be positive")
        if self.identical_holdings:
            if self.holdings_per_fund > self.n_constituents:
                problems.append("holdings_per_fund exceeds n_constituents")
        else:
            if self.n_popular and self.popular_pool < self.holdings_per_fund:
                problems.append(f"popular_pool ({self.popular_pool}) is smaller than holdings_per_fund "
                                f"({self.holdings_per_fund})")
            if self.n_niche and self.niche_block < self.holdings_per_fund:
                problems.append(f"niche pool per group ({self.niche_block}) is smaller than holdings_per_fund "
                                f"({self.holdings_per_fund})")
        if problems:
            raise InputError("infeasible synthetic spec: " + "; ".join(problems))

    @property
    def n_niche(self) -> int:
        return int(round(self.niche_fraction * self.n_funds))

    @property
    def n_popular(self) -> int:
        return self.n_funds - self.n_niche

    @property
    def n_groups(self) -> int:
        return math.ceil(self.n_niche / self.niche_group_size) if self.n_niche else 0

    @property
    def niche_block(self) -> int:
        if not self.n_groups:
            return 0
        return max(0, self.n_constituents - self.popular_pool) // self.n_groups

    @classmethod
    def from_mapping(cls, values: dict) -> SynthSpec:
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            key = key.strip()
            if key not in kinds:
                raise InputError(f"unknown synthetic spec key {key!r}")
            out[key] = _coerce(kinds[key], raw, key)
        return cls(**out)

    @classmethod
    def from_file(cls, path, section: str = "synth") -> SynthSpec:
        """Read ``key = value`` lines, with or without a ``[synth]`` header."""
        path = Path(path)
        if not path.is_file():
            raise InputError(f"synthetic spec file not found: {path}")
        text = path.read_text(encoding="utf-8")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError:
            parser.read_string(f"[{section}]\n" + text)
        if not parser.has_section(section):
            raise InputError(f"{path}: no [{section}] section")
        return cls.from_mapping(dict(parser.items(section)))

    def replace(self, **changes) -> SynthSpec:
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(changes)
        return SynthSpec(**vals)


def _coerce(kind, raw, key):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise InputError(f"synthetic spec: bad value {raw!r} for {key}") from None
    return raw


@dataclass
class SynthData:
    holdings: pd.DataFrame
    returns: pd.DataFrame
    factors: pd.DataFrame
    niche: dict[str, frozenset] = field(default_factory=dict)
    skilled: frozenset = frozenset()
    non_equity: frozenset = frozenset()
    betas: pd.DataFrame | None = None


def _quarter_days(q: pd.Period) -> pd.DatetimeIndex:
    return pd.bdate_range(q.start_time.normalize(), q.end_time.normalize())


def generate_frames(spec: SynthSpec) -> SynthData:
    """Build the holdings/returns/factors tables in memory."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_funds
    funds = np.array([f"F{i:04d}" for i in range(n)])
    consts = np.array([f"C{j:05d}" for j in range(spec.n_constituents)])
    q0 = pd.Period(spec.start_quarter, freq="Q")
    quarters = [q0 + i for i in range(spec.n_quarters)]

    skilled_idx = rng.permutation(n)[: int(round(spec.skill_fraction * n))]
    non_equity_idx = rng.permutation(n)[: int(round(spec.non_equity_fraction * n))]
    fund_scale = np.exp(rng.normal(0.0, 0.5, n)) * 1e6
    betas = np.zeros((n, len(FACTOR_NAMES)))
    betas[:, 0] = spec.beta_market
    if spec.beta_dispersion > 0:
        betas += spec.beta_dispersion * rng.normal(size=betas.shape)

    niche_mask = np.zeros((spec.n_quarters, n), dtype=bool)
    rows = []
    niche_idx = rng.permutation(n)[: spec.n_niche]
    for qi, q in enumerate(quarters):
        if qi > 0 and spec.redraw_niche:
            niche_idx = rng.permutation(n)[: spec.n_niche]
        niche_mask[qi, niche_idx] = True
        group_of = {int(f): g // spec.niche_group_size for g, f in enumerate(rng.permutation(niche_idx))}
        qend = _quarter_days(q)[-1].strftime("%Y-%m-%d")
        for i in range(n):
            if spec.identical_holdings:
                picks = np.arange(spec.holdings_per_fund)
                vals = np.full(len(picks), 1000.0)
            else:
                if i in group_of:
                    base = spec.popular_pool + group_of[i] * spec.niche_block
                    picks = base + rng.choice(spec.niche_block, spec.holdings_per_fund, replace=False)
                else:
                    picks = rng.choice(spec.popular_pool, spec.holdings_per_fund, replace=False)
                vals = np.round(fund_scale[i] * rng.dirichlet(np.ones(len(picks))) + 0.01, 2)
            for j, v in zip(np.sort(picks), vals):
                rows.append((qend, funds[i], consts[j], float(v), 1))
            if i in non_equity_idx:
                rows.append((qend, funds[i], "CASH", float(round(0.3 * vals.sum() / 0.7, 2)), 0))
    holdings = pd.DataFrame(rows, columns=["quarter_end", "fund_id", "constituent_id", "market_value", "is_equity"])

    # returns span one extra quarter so the last snapshot can be evaluated
    days_by_q = [_quarter_days(q0 + i) for i in range(spec.n_quarters + 1)]
    days = days_by_q[0].append(days_by_q[1:])
    q_of_day = np.concatenate([np.full(len(d), i) for i, d in enumerate(days_by_q)])
    scales = np.array([spec.sigma_mkt, spec.sigma_smb, spec.sigma_hml, spec.sigma_rmw, spec.sigma_cma])
    F = rng.normal(size=(len(days), len(FACTOR_NAMES))) * scales
    rf = np.full(len(days), spec.rf_daily)
    eps = rng.normal(size=(len(days), n)) if spec.sigma > 0 else np.zeros((len(days), n))

    status_q = np.maximum(q_of_day - 1, 0).clip(max=spec.n_quarters - 1)
    niche_day = niche_mask[status_q]
    skilled = np.zeros(n, dtype=bool)
    skilled[skilled_idx] = True
    gross = rf[:, None] + F @ betas.T + spec.s_c * niche_day + spec.s_a * skilled[None, :] + spec.sigma * eps
    fee_daily = (spec.expense_ratio + spec.fee_12b1) / TRADING_DAYS
    net = gross - fee_daily

    date_str = days.strftime("%Y-%m-%d")
    returns = pd.DataFrame({
        "date": np.repeat(date_str, n),
        "fund_id": np.tile(funds, len(days)),
        "net_return": net.ravel(),
        "expense_ratio": spec.expense_ratio,
        "fee_12b1": spec.fee_12b1,
    })
    factors = pd.DataFrame(F, columns=list(FACTOR_NAMES))
    factors.insert(0, "date", date_str)
    factors["rf"] = rf

    niche = {q.end_time.strftime("%Y-%m-%d"): frozenset(funds[niche_mask[qi]]) for qi, q in enumerate(quarters)}
    return SynthData(
        holdings, returns, factors, niche, frozenset(funds[skilled_idx]), frozenset(funds[non_equity_idx]),
        pd.DataFrame(betas, index=funds, columns=list(FACTOR_NAMES)),
    )


def generate(spec: SynthSpec, out_dir) -> dict[str, Path]:
    """Write holdings.csv, returns.csv and factors.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_frames(spec)
    paths = {"holdings": out / "holdings.csv", "returns": out / "returns.csv", "factors": out / "factors.csv"}
    from .io import write_csv

    write_csv(data.holdings, paths["holdings"])
    write_csv(data.returns, paths["returns"])
    write_csv(data.factors, paths["factors"])
    return paths
