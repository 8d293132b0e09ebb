"""Bipartite fund/constituent network and the method of reflections.

Relative holdings are a Balassa-style revealed comparative advantage::

    RH[i, j] = (H[i, j] / sum_j H[i, j]) / (sum_i H[i, j] / sum_ij H)

A link is drawn when RH >= x (x = 1 by default).  The reflections on the
binary matrix M then give, per fund, its diversification (order 0, the
degree) and its average commonality coefficient (order 1, the mean degree of
the constituents it links to).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .ingest import HoldingsSnapshot, choose_storage, quarter_label

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1.0
DEFAULT_N_MAX = 2


@dataclass(frozen=True)
class RelativeHoldings:
    values: np.ndarray | sp.csr_array
    funds: tuple[str, ...]
    constituents: tuple[str, ...]
    quarter: pd.Period | None = None

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class BipartiteAdjacency:
    values: np.ndarray | sp.csr_array
    funds: tuple[str, ...]
    constituents: tuple[str, ...]
    threshold: float
    quarter: pd.Period | None = None

    @property
    def shape(self):
        return self.values.shape

    def dense(self) -> np.ndarray:
        if sp.issparse(self.values):
            return self.values.toarray()
        return np.asarray(self.values)


@dataclass(frozen=True)
class ReflectionProfile:
    """Reflection orders 0..n_max for both sides of the network.

    ``k_fund[:, n]`` is order n for every fund, ``k_const[:, n]`` likewise for
    constituents.  Degree-zero nodes carry 0 at every order and are flagged.
    """

    funds: tuple[str, ...]
    constituents: tuple[str, ...]
    k_fund: np.ndarray
    k_const: np.ndarray
    isolated_funds: np.ndarray
    isolated_consts: np.ndarray
    quarter: pd.Period | None = None

    @property
    def n_max(self) -> int:
        return self.k_fund.shape[1] - 1


def _as_2d(matrix):
    if sp.issparse(matrix):
        return sp.csr_array(matrix, dtype=float)
    return np.asarray(matrix, dtype=float)


def _unwrap(obj):
    """Accept a snapshot/RH/adjacency object or a bare matrix."""
    if isinstance(obj, (HoldingsSnapshot, RelativeHoldings, BipartiteAdjacency)):
        return obj.values, obj.funds, obj.constituents, obj.quarter
    m = _as_2d(obj)
    n_f, n_c = m.shape
    return m, tuple(f"F{i}" for i in range(n_f)), tuple(f"C{j}" for j in range(n_c)), None


def relative_holdings(snapshot) -> RelativeHoldings:
    """Relative holding of every fund in every constituent."""
    H, funds, consts, quarter = _unwrap(snapshot)
    H = _as_2d(H)
    row = np.asarray(H.sum(axis=1), dtype=float).ravel()
    col = np.asarray(H.sum(axis=0), dtype=float).ravel()
    total = row.sum()
    if total <= 0:
        raise ValueError("snapshot has zero total market value")
    zero_rows = np.flatnonzero(row <= 0)
    if len(zero_rows):
        raise ValueError(f"fund {funds[zero_rows[0]]!r} has zero total market value")
    if np.any(col <= 0):
        j = int(np.flatnonzero(col <= 0)[0])
        raise ValueError(f"constituent {consts[j]!r} is held by no fund")
    share = col / total
    if sp.issparse(H):
        rh = sp.csr_array(sp.diags_array(1.0 / row) @ H @ sp.diags_array(1.0 / share))
    else:
        rh = (H / row[:, None]) / share[None, :]
    return RelativeHoldings(rh, funds, consts, quarter)


def binarize(rh, threshold: float = DEFAULT_THRESHOLD) -> BipartiteAdjacency:
    """Link matrix M[i, j] = 1 iff RH[i, j] >= threshold."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    R, funds, consts, quarter = _unwrap(rh)
    if sp.issparse(R):
        if threshold <= 0:
            M = np.ones(R.shape, dtype=np.int8)
        else:
            M = sp.csr_array(R, copy=True)
            M.data = (M.data >= threshold).astype(np.int8)
            M = sp.csr_array(M, dtype=np.int8)
            M.eliminate_zeros()
    else:
        M = (np.asarray(R) >= threshold).astype(np.int8)
    return BipartiteAdjacency(M, funds, consts, float(threshold), quarter)


def density(adjacency) -> float:
    """Share of the F*C possible links that are present."""
    M = adjacency.values if isinstance(adjacency, BipartiteAdjacency) else adjacency
    n_f, n_c = M.shape
    if n_f * n_c == 0:
        raise ValueError("empty network")
    nnz = M.count_nonzero() if sp.issparse(M) else np.count_nonzero(M)
    return nnz / (n_f * n_c)


def density_sweep(rh, thresholds: Iterable[float]) -> list[tuple[float, float]]:
    """Network density for each threshold (thresholds kept in the given order)."""
    thresholds = [float(x) for x in thresholds]
    if not thresholds:
        raise ValueError("need at least one threshold")
    R, _, _, _ = _unwrap(rh)
    size = R.shape[0] * R.shape[1]
    if size == 0:
        raise ValueError("empty network")
    if sp.issparse(R):
        vals = np.sort(sp.csr_array(R).data)
        vals = vals[vals > 0]
    else:
        vals = np.sort(np.asarray(R).ravel())
    out = []
    for x in thresholds:
        if x < 0:
            raise ValueError("threshold must be nonnegative")
        if x <= 0:
            count = size
        else:
            count = len(vals) - int(np.searchsorted(vals, x, side="left"))
        out.append((x, count / size))
    return out


def reflections(adjacency, n_max: int = DEFAULT_N_MAX) -> ReflectionProfile:
    """Iterate k_{F,N} = mean over linked constituents of k_{C,N-1} (and vice versa)."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    M, funds, consts, quarter = _unwrap(adjacency)
    M = sp.csr_array(M, dtype=float) if sp.issparse(M) else np.asarray(M, dtype=float)
    kf0 = np.asarray(M.sum(axis=1), dtype=float).ravel()
    kc0 = np.asarray(M.sum(axis=0), dtype=float).ravel()
    iso_f = kf0 == 0
    iso_c = kc0 == 0
    inv_f = np.divide(1.0, kf0, out=np.zeros_like(kf0), where=~iso_f)
    inv_c = np.divide(1.0, kc0, out=np.zeros_like(kc0), where=~iso_c)
    MT = M.T
    kf = np.zeros((len(kf0), n_max + 1))
    kc = np.zeros((len(kc0), n_max + 1))
    kf[:, 0], kc[:, 0] = kf0, kc0
    for n in range(1, n_max + 1):
        kf[:, n] = (M @ kc[:, n - 1]) * inv_f
        kc[:, n] = (MT @ kf[:, n - 1]) * inv_c
    if iso_f.any() or iso_c.any():
        log.debug("%s: %d isolated fund(s), %d isolated constituent(s)",
                  quarter_label(quarter) if quarter is not None else "network", int(iso_f.sum()), int(iso_c.sum()))
    return ReflectionProfile(funds, consts, kf, kc, iso_f, iso_c, quarter)


def _fund_order(profile: ReflectionProfile, order: int) -> pd.Series:
    if profile.n_max < order:
        raise ValueError(f"profile only has orders up to {profile.n_max}")
    keep = ~profile.isolated_funds
    if not keep.all():
        dropped = [f for f, iso in zip(profile.funds, profile.isolated_funds) if iso]
        log.info("%d isolated fund(s) excluded from ranking: %s", len(dropped), ", ".join(dropped[:5]))
    idx = pd.Index([f for f, k in zip(profile.funds, keep) if k], name="fund_id")
    return pd.Series(profile.k_fund[keep, order], index=idx)


def acc(profile: ReflectionProfile) -> pd.Series:
    """Average commonality coefficient (order-1 fund reflection) of linked funds."""
    return _fund_order(profile, 1).rename("acc")


def diversification(profile: ReflectionProfile) -> pd.Series:
    """Number of constituents each linked fund holds above the threshold."""
    return _fund_order(profile, 0).rename("diversification")


def commonality(profile: ReflectionProfile) -> pd.Series:
    """Number of funds linked to each constituent."""
    return pd.Series(profile.k_const[:, 0], index=pd.Index(profile.constituents, name="constituent_id"),
                     name="commonality")


def snapshot_profile(snapshot: HoldingsSnapshot, threshold: float = DEFAULT_THRESHOLD,
                     n_max: int = DEFAULT_N_MAX) -> tuple[RelativeHoldings, BipartiteAdjacency, ReflectionProfile]:
    rh = relative_holdings(snapshot)
    adj = binarize(rh, threshold)
    return rh, adj, reflections(adj, n_max)


# ---------------------------------------------------------------------------
# dumps


def triplets(obj) -> pd.DataFrame:
    """Nonzero entries as fund_id,constituent_id,value (row-major order)."""
    M = obj.values
    coo = sp.coo_array(M) if sp.issparse(M) else sp.coo_array(np.asarray(M))
    order = np.lexsort((coo.col, coo.row))
    r, c, v = coo.row[order], coo.col[order], coo.data[order]
    keep = v != 0
    funds = np.asarray(obj.funds, dtype=object)
    consts = np.asarray(obj.constituents, dtype=object)
    return pd.DataFrame({"fund_id": funds[r[keep]], "constituent_id": consts[c[keep]], "value": v[keep]})


def profile_frame(profile: ReflectionProfile) -> pd.DataFrame:
    """node_id,kind,k0..kN rows: funds first, then constituents."""
    cols = [f"k{n}" for n in range(profile.n_max + 1)]
    f = pd.DataFrame(profile.k_fund, columns=cols)
    f.insert(0, "kind", "fund")
    f.insert(0, "node_id", list(profile.funds))
    c = pd.DataFrame(profile.k_const, columns=cols)
    c.insert(0, "kind", "constituent")
    c.insert(0, "node_id", list(profile.constituents))
    return pd.concat([f, c], ignore_index=True)


def profile_from_frame(df: pd.DataFrame, quarter: pd.Period | None = None) -> ReflectionProfile:
    cols = sorted((c for c in df.columns if c.startswith("k") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    f = df[df["kind"] == "fund"]
    c = df[df["kind"] == "constituent"]
    kf = f[cols].to_numpy(dtype=float)
    kc = c[cols].to_numpy(dtype=float)
    return ReflectionProfile(tuple(f["node_id"].astype(str)), tuple(c["node_id"].astype(str)),
                             kf, kc, kf[:, 0] == 0, kc[:, 0] == 0, quarter)
