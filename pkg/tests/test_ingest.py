import numpy as np
import pandas as pd
import pytest

from fundnet.errors import InputError
from fundnet.ingest import (HoldingsSnapshot, IngestConfig, SamplePanel, apply_filters, build_panel, choose_storage,
                            evaluation_coverage, filter_consecutive, filter_equity_funds, gross_return, parse_inputs,
                            read_factors, read_holdings, read_returns)


def _write(path, header, rows):
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows))
    return path


def _factors_csv(path, start="2005-01-03", end="2005-12-30"):
    days = pd.bdate_range(start, end)
    rows = [f"{d:%Y-%m-%d},0.001,0.0,0.0,0.0,0.0,0.0001" for d in days]
    return _write(path, "date,mkt_rf,smb,hml,rmw,cma,rf", rows)


@pytest.mark.parametrize("net,er,fee,want", [
    (0.001, 0.0, 0.0, 0.001),
    (0.001, 0.0126, 0.00252, 0.00106),
    (-0.002, 0.0252, 0.0, -0.0019),
])
def test_gross_return_examples(net, er, fee, want):
    assert gross_return(net, er, fee) == pytest.approx(want, abs=1e-15)


def test_gross_return_is_affine_with_unit_slope():
    net = np.linspace(-0.05, 0.05, 11)
    g = gross_return(net, 0.01, 0.002)
    assert np.allclose(np.diff(g), np.diff(net), atol=1e-17, rtol=0)


def test_empty_holdings_file(tmp_path):
    p = _write(tmp_path / "h.csv", "quarter_end,fund_id,constituent_id,market_value,is_equity", [])
    with pytest.raises(InputError, match="no snapshots"):
        read_holdings(p)


def test_duplicates_are_summed(tmp_path):
    p = _write(tmp_path / "h.csv", "quarter_end,fund_id,constituent_id,market_value,is_equity",
               ["2005-03-31,A,X,50,1", "2005-03-31,A,X,50,1", "2005-03-31,A,Y,10,1"])
    h = read_holdings(p)
    assert h.loc[h["constituent_id"] == "X", "market_value"].tolist() == [100.0]
    assert h.attrs["duplicates_aggregated"] == 1


def test_aggregation_is_idempotent(tmp_path):
    rows = ["2005-03-31,A,X,50,1", "2005-03-31,A,X,50,1", "2005-03-31,B,Y,10,1"]
    p = _write(tmp_path / "h.csv", "quarter_end,fund_id,constituent_id,market_value,is_equity", rows)
    once = read_holdings(p)
    p2 = tmp_path / "h2.csv"
    pd.DataFrame({
        "quarter_end": once["quarter"].dt.end_time.dt.strftime("%Y-%m-%d"),
        "fund_id": once["fund_id"], "constituent_id": once["constituent_id"],
        "market_value": once["market_value"], "is_equity": 1,
    }).to_csv(p2, index=False)
    twice = read_holdings(p2)
    pd.testing.assert_frame_equal(once, twice)
    assert twice.attrs["duplicates_aggregated"] == 0


def test_malformed_row_reports_line_and_column(tmp_path):
    p = _write(tmp_path / "h.csv", "quarter_end,fund_id,constituent_id,market_value,is_equity",
               ["2005-03-31,A,X,50,1", "2005-03-31,A,Y,abc,1"])
    with pytest.raises(InputError, match=r"h.csv:3: column 'market_value'"):
        read_holdings(p)


def test_negative_market_value_rejected(tmp_path):
    p = _write(tmp_path / "h.csv", "quarter_end,fund_id,constituent_id,market_value,is_equity",
               ["2005-03-31,A,X,-5,1"])
    with pytest.raises(InputError, match="market_value"):
        read_holdings(p)


def test_missing_header_column(tmp_path):
    p = _write(tmp_path / "r.csv", "date,fund_id,net_return,expense_ratio", ["2005-01-03,A,0.01,0.01"])
    with pytest.raises(InputError, match="fee_12b1"):
        read_returns(p)


def test_factor_gap_is_an_error(tmp_path):
    days = list(pd.bdate_range("2005-01-03", "2005-03-31"))
    del days[10:17]
    p = _write(tmp_path / "f.csv", "date,mkt_rf,smb,hml,rmw,cma,rf",
               [f"{d:%Y-%m-%d},0.001,0,0,0,0,0.0001" for d in days])
    with pytest.raises(InputError, match="gap"):
        read_factors(p)


def test_factor_holiday_is_not_a_gap(tmp_path):
    days = list(pd.bdate_range("2005-01-03", "2005-03-31"))
    del days[12]
    p = _write(tmp_path / "f.csv", "date,mkt_rf,smb,hml,rmw,cma,rf",
               [f"{d:%Y-%m-%d},0.001,0,0,0,0,0.0001" for d in days])
    assert len(read_factors(p)) == len(days)


def test_three_factor_file_allows_blank_rmw_cma(tmp_path):
    p = _write(tmp_path / "f.csv", "date,mkt_rf,smb,hml,rmw,cma,rf",
               ["2005-01-03,0.001,0,0,,,0.0001", "2005-01-04,0.002,0,0,,,0.0001"])
    f = read_factors(p)
    assert f["rmw"].isna().all()


def _snap(values, funds, consts, equity=None, q="2005Q1"):
    v = np.asarray(values, dtype=float)
    eq = v.sum(axis=1) if equity is None else np.asarray(equity, dtype=float)
    return HoldingsSnapshot(pd.Period(q, freq="Q"), v, tuple(funds), tuple(consts), eq)


@pytest.mark.parametrize("equity_share,kept", [(1.0, True), (0.79, False), (0.80, True)])
def test_equity_filter_boundary(equity_share, kept):
    snap = _snap([[60.0, 40.0], [50.0, 50.0]], ["A", "B"], ["X", "Y"], equity=[100.0 * equity_share, 100.0])
    out = filter_equity_funds(snap)
    assert ("A" in out.funds) is kept
    assert "B" in out.funds


def test_equity_filter_drops_zero_value_fund():
    snap = _snap([[0.0, 0.0], [50.0, 50.0]], ["A", "B"], ["X", "Y"])
    assert filter_equity_funds(snap).funds == ("B",)


def _panel(fund_sets):
    snaps = {}
    for t, funds in enumerate(fund_sets):
        q = pd.Period("2005Q1", freq="Q") + t
        consts = [f"C_{f}" for f in funds]
        snaps[q] = _snap(np.eye(len(funds)) * 10, funds, consts, q=str(q))
    idx = pd.bdate_range("2005-01-03", "2006-12-29")
    fac = pd.DataFrame(0.0, index=idx, columns=["mkt_rf", "smb", "hml", "rmw", "cma", "rf"])
    return SamplePanel(tuple(sorted(snaps)), snaps, pd.DataFrame(index=idx), fac)


def test_consecutive_filter_examples():
    panel = _panel([["A", "B", "D"], ["B", "C", "D"], ["B", "C", "D"], ["B", "C"]])
    out = filter_consecutive(panel)
    labels = {str(q): snap.funds for q, snap in out.snapshots.items()}
    assert "2005Q1" not in labels
    assert labels["2005Q2"] == ("B", "D")
    assert labels["2005Q3"] == ("B", "C", "D")
    assert labels["2005Q4"] == ("B", "C")
    # constituent held only by the ineligible fund C at Q2 is gone
    assert "C_C" not in out.snapshots[pd.Period("2005Q2", freq="Q")].constituents


def test_filters_never_add_funds():
    panel = _panel([["A", "B"], ["A", "B", "C"], ["C"]])
    out = apply_filters(panel)
    for q, snap in out.snapshots.items():
        assert set(snap.funds) <= set(panel.snapshots[q].funds)
        assert set(snap.constituents) <= set(panel.snapshots[q].constituents)


def test_single_quarter_panel_explains_itself():
    with pytest.raises(InputError, match="single quarter"):
        apply_filters(_panel([["A"]]))
    assert apply_filters(_panel([["A"]]), IngestConfig(consecutive=False)).quarters


def test_storage_choice():
    dense = np.ones((3, 3))
    assert isinstance(choose_storage(dense), np.ndarray)
    sparse = np.zeros((20, 20))
    sparse[0, 0] = 1
    assert hasattr(choose_storage(sparse), "tocsr")


def test_parse_inputs_drops_orphans(tmp_path):
    h = _write(tmp_path / "h.csv", "quarter_end,fund_id,constituent_id,market_value,is_equity",
               ["2005-03-31,A,X,10,1", "2005-06-30,A,X,10,1"])
    r = _write(tmp_path / "r.csv", "date,fund_id,net_return,expense_ratio,fee_12b1",
               ["2005-01-03,A,0.01,0.0,0.0", "2005-01-03,ZZ,0.01,0.0,0.0"])
    f = _factors_csv(tmp_path / "f.csv")
    panel = parse_inputs(h, r, f)
    assert panel.provenance["orphan_return_rows"] == 1
    assert list(panel.gross_returns.columns) == ["A"]


def test_build_panel_on_synthetic_triple(small_triple):
    panel = build_panel(small_triple["holdings"], small_triple["returns"], small_triple["factors"])
    assert len(panel.quarters) == 5
    q = panel.quarters[0]
    covered, excluded = evaluation_coverage(panel, q, panel.snapshots[q].funds)
    assert not excluded and len(covered) == 60


def test_missing_returns_exclusion(small_triple):
    panel = build_panel(small_triple["holdings"], small_triple["returns"], small_triple["factors"])
    q = panel.quarters[0]
    dates = panel.evaluation_dates(q)
    R = panel.gross_returns.copy()
    R.loc[dates[: int(0.25 * len(dates))], "F0000"] = np.nan   # > 20% missing
    R.loc[dates[: int(0.10 * len(dates))], "F0001"] = np.nan   # tolerated
    p2 = SamplePanel(panel.quarters, panel.snapshots, R, panel.factors)
    covered, excluded = evaluation_coverage(p2, q, panel.snapshots[q].funds)
    assert excluded == ["F0000"] and "F0001" in covered
