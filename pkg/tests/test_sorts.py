import numpy as np
import pandas as pd
import pytest

from fundnet.errors import EmptyResultError
from fundnet.sorts import (Formation, FormationSet, QuantilePartition, concatenate_quarters, core_trim,
                           double_sort, median_split_series, one_way_sort, portfolio_returns, rank_and_bucket,
                           reverse_sort, trim_bucket)


def _ids(n):
    return [f"F{i:03d}" for i in range(n)]


def test_bucket_sizes_uneven():
    part = rank_and_bucket(pd.Series(np.arange(23.0), index=_ids(23)), 10)
    assert part.sizes() == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]
    assert part.members() == _ids(23)


def test_bucket_sizes_even_and_minimal():
    assert rank_and_bucket(pd.Series(np.arange(20.0), index=_ids(20)), 10).sizes() == [2] * 10
    assert rank_and_bucket(pd.Series(np.arange(10.0), index=_ids(10)), 10).sizes() == [1] * 10
    with pytest.raises(ValueError):
        rank_and_bucket(pd.Series(np.arange(9.0), index=_ids(9)), 10)


def test_ties_broken_by_fund_id():
    v = pd.Series([1.0, 1.0, 0.0, 1.0], index=["C", "A", "Z", "B"])
    assert rank_and_bucket(v, 4).buckets == (("Z",), ("A",), ("B",), ("C",))


def test_constant_criterion_buckets_by_id():
    part = rank_and_bucket(pd.Series(5.0, index=_ids(12)[::-1]), 4)
    assert part.members() == _ids(12)


def test_nan_values_are_not_ranked():
    v = pd.Series([3.0, np.nan, 1.0, 2.0], index=["A", "B", "C", "D"])
    assert rank_and_bucket(v, 3).members() == ["C", "D", "A"]


@pytest.mark.parametrize("n,kept", [(40, 36), (10, 10), (100, 90), (19, 19), (20, 18)])
def test_core_trim_counts(n, kept):
    ids = _ids(n)
    acc = pd.Series(np.random.default_rng(n).permutation(n).astype(float), index=ids)
    out = trim_bucket(ids, acc)
    assert len(out) == kept
    dropped = acc.drop(list(out))
    if len(dropped):
        cut = (n - kept) // 2
        assert set(dropped.index) == set(acc.nsmallest(cut).index) | set(acc.nlargest(cut).index)


def test_core_trim_keeps_bucket_order():
    acc = pd.Series(np.arange(40.0), index=_ids(40))
    part = core_trim(QuantilePartition((tuple(_ids(40)),)), acc)
    assert part.buckets[0] == tuple(_ids(40)[2:38])


def test_portfolio_returns_examples():
    days = pd.bdate_range("2005-04-01", periods=3)
    R = pd.DataFrame({"A": [0.01, 0.03, np.nan], "B": [0.02, np.nan, np.nan], "C": [-0.01, 0.0, 0.02]}, index=days)
    out = portfolio_returns({"g": ("A", "B"), "h": ("C",)}, R, days)
    assert out["g"].iloc[0] == pytest.approx(0.015, abs=1e-17)
    assert out["g"].iloc[1] == pytest.approx(0.03, abs=1e-17)
    assert np.isnan(out["g"].iloc[2])
    assert out["h"].tolist() == [-0.01, 0.0, 0.02]


def test_portfolio_returns_single_member_passthrough():
    days = pd.bdate_range("2005-04-01", periods=4)
    R = pd.DataFrame({"A": [0.1, -0.2, 0.3, 0.0]}, index=days)
    assert portfolio_returns(QuantilePartition((("A",),)), R, days)[1].tolist() == R["A"].tolist()


def test_concatenate_quarters():
    a = pd.DataFrame({"x": [1.0, 2.0]}, index=pd.bdate_range("2005-01-03", periods=2))
    b = pd.DataFrame({"x": [3.0]}, index=pd.bdate_range("2005-04-01", periods=1))
    assert concatenate_quarters([a, b])["x"].tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError, match="overlap"):
        concatenate_quarters([b, a])
    with pytest.raises(EmptyResultError):
        concatenate_quarters([])


# -- planted toy panel ----------------------------------------------------------

def _toy(n=30, quarters=("2005Q1", "2005Q2"), seed=0, planted=0.0004):
    """Noise-free funds whose daily excess return is the market plus acc * planted / n."""
    rng = np.random.default_rng(seed)
    ids = _ids(n)
    days = pd.bdate_range("2005-01-03", "2005-12-30")
    fac = pd.DataFrame(rng.normal(0, [0.01, 0.005, 0.005, 0.004, 0.004], (len(days), 5)), index=days,
                       columns=["mkt_rf", "smb", "hml", "rmw", "cma"])
    fac["rf"] = 1e-4
    acc = pd.Series(rng.permutation(n) + 1.0, index=ids)
    excess = fac["mkt_rf"].to_numpy()[:, None] + planted * (acc.to_numpy() / n)[None, :]
    R = pd.DataFrame(excess + 1e-4, index=days, columns=ids)
    forms = []
    for label in quarters:
        q = pd.Period(label, freq="Q")
        ev = pd.bdate_range((q + 1).start_time, (q + 1).end_time.normalize())
        crit = pd.DataFrame({"acc": acc, "diversification": acc[::-1].to_numpy(), "size": 1.0,
                             "past_alpha_3f": -acc, "past_alpha_5f": -acc, "delta_3f": -acc}, index=ids)
        crit.index.name = "fund_id"
        forms.append(Formation(q, ev, crit))
    return FormationSet(tuple(forms), R, fac), acc


def test_one_way_top_bottom_sign_and_values():
    fset, acc = _toy()
    rep = one_way_sort(fset, "acc", "3f", k=10)
    row = rep.rows[0]
    assert row == "ACC_3f"
    # ACC is best when low: top-bottom = Q1 - Q10 and funds with low acc earn less here
    assert rep.alpha.at[row, "top-bottom"] == pytest.approx(rep.alpha.at[row, "Q1"] - rep.alpha.at[row, "Q10"],
                                                            abs=1e-9)
    assert rep.alpha.at[row, "top-bottom"] < 0
    assert rep.n_obs.at[row, "Q1"] == len(fset.formations[0].eval_dates) + len(fset.formations[1].eval_dates)
    assert set(rep.counts.iloc[0]) == {3}


def test_past_alpha_is_best_when_high():
    fset, _ = _toy()
    rep = one_way_sort(fset, "past_alpha", "5f", k=5)
    assert rep.rows == ["alpha_5f"]
    # past alpha = -acc, so the high past-alpha bucket is the low-return one
    assert rep.alpha.at["alpha_5f", "top-bottom"] == pytest.approx(
        rep.alpha.at["alpha_5f", "Q5"] - rep.alpha.at["alpha_5f", "Q1"], abs=1e-9)
    assert rep.alpha.at["alpha_5f", "top-bottom"] < 0


def test_partition_property_each_quarter():
    fset, _ = _toy(n=37)
    rep = one_way_sort(fset, "diversification", "3f", k=10)
    for members in rep.members.values():
        flat = [f for m in members.values() for f in m]
        assert sorted(flat) == _ids(37) and len(set(flat)) == 37


def test_double_sort_partition_and_avg():
    fset, _ = _toy(n=53)
    rep = double_sort(fset, "past_alpha", "acc", "3f")
    assert rep.cols == ["Q1", "Q2", "Q3", "Q4", "Q5", "Avg"]
    assert rep.rows == ["ACC1", "ACC2", "ACC3", "ACC4", "ACC5", "top-bottom"]
    for members in rep.members.values():
        flat = [f for m in members.values() for f in m]
        assert sorted(flat) == _ids(53)
    s = rep.series
    cols = [f"top-bottom|Q{j}" for j in range(1, 6)]
    assert np.allclose(s["top-bottom|Avg"], s[cols].mean(axis=1), atol=1e-17)
    for j in range(1, 6):
        assert np.allclose(s[f"top-bottom|Q{j}"], s[f"ACC1|Q{j}"] - s[f"ACC5|Q{j}"], atol=0)


def test_double_sort_needs_25_funds():
    fset, _ = _toy(n=24)
    with pytest.raises(EmptyResultError, match="25"):
        double_sort(fset)


def test_reverse_sort_swaps_axes():
    fset, _ = _toy(n=50)
    rep = reverse_sort(fset, "3f")
    assert rep.cols[:5] == ["ACC1", "ACC2", "ACC3", "ACC4", "ACC5"]
    assert rep.rows[:5] == ["Q1", "Q2", "Q3", "Q4", "Q5"]
    assert rep.experiment == "reverse_acc_past_alpha_3f"


def test_core_sort_uses_fewer_funds():
    fset, _ = _toy(n=200)
    full = one_way_sort(fset, "acc", "3f", k=10)
    core = one_way_sort(fset, "acc", "3f", k=10, core_trim=True)
    assert set(full.counts.iloc[0]) == {20} and set(core.counts.iloc[0]) == {18}


def test_report_text_and_frame():
    fset, _ = _toy()
    rep = one_way_sort(fset, "acc", "3f", k=5)
    text = rep.to_text()
    assert text.splitlines()[0].startswith("oneway_acc_3f | window=full")
    assert "(" in text and "top-bottom" in text
    frame = rep.to_frame()
    assert list(frame.columns) == ["row", "col", "alpha_annual_pct", "t_abs", "se_annual_pct", "n_obs"]
    assert len(frame) == 6


def test_window_selection():
    fset, _ = _toy(quarters=("2005Q1", "2005Q2", "2005Q3"))
    assert len(fset.window("2005-04-01", None)) == 2
    assert len(fset.window(None, "2005-03-31")) == 1
    assert len(fset.window("2007-01-01", None)) == 0


def test_median_split():
    fset, _ = _toy(n=31)
    ms = median_split_series(fset, "3f")
    assert list(ms["quarter"]) == ["2005-03-31", "2005-06-30"]
    assert (ms["n_low"] == 16).all() and (ms["n_high"] == 15).all()
    assert (ms["alpha_high"] > ms["alpha_low"]).all()
