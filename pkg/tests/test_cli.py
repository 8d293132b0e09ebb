import json

import pandas as pd
import pytest

from conftest import write_config
from fundnet.cli import load_config, main
from fundnet.errors import InputError


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err.strip().splitlines()
    return code, (json.loads(err[-1]) if err and err[-1].startswith("{") else None)


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "run_manifest.json"}


@pytest.fixture(scope="module")
def pipeline_out(small_triple, tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    cfg = write_config(d / "run.ini", small_triple["holdings"].parent, "out")
    assert main(["pipeline", "--config", str(cfg)]) == 0
    return d / "out", cfg


def test_pipeline_writes_all_stages(pipeline_out):
    out, _ = pipeline_out
    for sub in ("network", "alphas", "reports", "stats"):
        assert (out / sub / "manifest.json").is_file()
    man = json.loads((out / "run_manifest.json").read_text())
    assert set(man["inputs"]) == {"holdings", "returns", "factors"}
    assert "report_oneway_acc_3f_full" in man["reports"]
    rep = pd.read_csv(out / "reports" / "report_double_past_alpha_acc_5f_full.csv")
    assert {"Avg", "top-bottom"} <= set(rep["col"]) | set(rep["row"])


def test_stages_compose_to_pipeline(pipeline_out, small_triple, tmp_path):
    out, _ = pipeline_out
    cfg = write_config(tmp_path / "run.ini", small_triple["holdings"].parent, "out")
    for stage in ("network", "alphas", "sort", "stats"):
        assert main([stage, "--config", str(cfg)]) == 0
    assert _files(tmp_path / "out") == _files(out)


def test_missing_factors_file(small_triple, tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[inputs]\nholdings = {small_triple['holdings']}\nreturns = {small_triple['returns']}\n"
                   f"factors = nowhere/factors.csv\n[run]\nout = out\n")
    code, err = _run(capsys, "network", "--config", cfg)
    assert code == 2
    assert "nowhere/factors.csv" in err["message"] and err["error"] == "InputError"


def test_empty_window_exit_code(pipeline_out, small_triple, tmp_path, capsys):
    out, _ = pipeline_out
    cfg = write_config(tmp_path / "run.ini", small_triple["holdings"].parent, str(out),
                       "[windows]\nfuture = 2030-01-01 : 2031-12-31\n")
    code, err = _run(capsys, "sort", "--config", cfg)
    assert code == 3 and "future" in err["message"]


def test_stale_dumps_are_refused(small_triple, tmp_path, capsys):
    cfg = write_config(tmp_path / "a.ini", small_triple["holdings"].parent, "out")
    assert main(["network", "--config", str(cfg)]) == 0
    assert main(["alphas", "--config", str(cfg)]) == 0
    cfg2 = write_config(tmp_path / "b.ini", small_triple["holdings"].parent, "out", "threshold = 2.0\n")
    code, err = _run(capsys, "sort", "--config", cfg2)
    assert code == 2 and "stale network" in err["message"]


def test_network_on_two_by_two_example(tmp_path):
    (tmp_path / "h.csv").write_text("quarter_end,fund_id,constituent_id,market_value,is_equity\n"
                                    "2005-03-31,A,X,100,1\n2005-03-31,B,X,100,1\n2005-03-31,B,Y,100,1\n")
    days = pd.bdate_range("2005-01-03", "2005-06-30")
    (tmp_path / "r.csv").write_text("date,fund_id,net_return,expense_ratio,fee_12b1\n" + "".join(
        f"{d:%Y-%m-%d},{f},0.001,0.01,0.0\n" for d in days for f in "AB"))
    (tmp_path / "f.csv").write_text("date,mkt_rf,smb,hml,rmw,cma,rf\n" + "".join(
        f"{d:%Y-%m-%d},0.001,0.0,0.0,0.0,0.0,0.0001\n" for d in days))
    (tmp_path / "run.ini").write_text("[inputs]\nholdings = h.csv\nreturns = r.csv\nfactors = f.csv\n"
                                      "[run]\nout = out\nconsecutive = false\nmodels = 3f\n")
    assert main(["network", "--config", str(tmp_path / "run.ini")]) == 0
    adj = pd.read_csv(tmp_path / "out" / "network" / "adjacency_2005-03-31.csv")
    assert adj.values.tolist() == [["A", "X", 1], ["B", "Y", 1]]
    rh = pd.read_csv(tmp_path / "out" / "network" / "rh_2005-03-31.csv")
    assert sorted(rh.iloc[:, 2].tolist()) == [0.75, 1.5, 1.5]


def test_sort_with_twenty_funds(tmp_path):
    (tmp_path / "synth.ini").write_text("[run]\nseed = 4\nout = data\n[synth]\nn_funds = 20\nn_constituents = 200\n"
                                        "n_quarters = 4\npopular_pool = 40\nholdings_per_fund = 8\nsigma = 0.002\n")
    assert main(["synth", "--config", str(tmp_path / "synth.ini")]) == 0
    cfg = write_config(tmp_path / "run.ini", tmp_path / "data", "out", "k = 10\nmodels = 3f\n")
    assert main(["pipeline", "--config", str(cfg)]) == 0
    man = json.loads((tmp_path / "out" / "reports" / "manifest.json").read_text())
    assert "report_oneway_acc_3f_full" in man["reports"]
    # 20 funds cannot fill a 5x5 grid
    assert "double_past_alpha_acc_3f_full" in man["skipped"]
    rep = pd.read_csv(tmp_path / "out" / "reports" / "report_oneway_acc_3f_full.csv")
    assert rep["col"].tolist() == [f"Q{i}" for i in range(1, 11)] + ["top-bottom"]


def test_stats_input(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("x\n1\n2\n3\n")
    assert main(["stats", "--input", str(tmp_path / "x.csv"), "--out", str(tmp_path / "o")]) == 0
    table = pd.read_csv(tmp_path / "o" / "stats" / "summary_x.csv")
    assert table.loc[0, "mean"] == 2 and table.loc[0, "std"] == 1
    assert "quantity" in capsys.readouterr().out


def test_config_rejects_unknown_key(tmp_path):
    (tmp_path / "c.ini").write_text("[run]\nthreshhold = 1\n")
    with pytest.raises(InputError, match="threshhold"):
        load_config(tmp_path / "c.ini")


def test_config_windows(tmp_path):
    (tmp_path / "c.ini").write_text("[windows]\npre = : 2007-06-30\ncrisis = 2007-07-01 : 2009-03-31\n")
    cfg = load_config(tmp_path / "c.ini")
    assert cfg.windows["pre"] == (None, pd.Timestamp("2007-06-30"))
    assert cfg.windows["crisis"][0] == pd.Timestamp("2007-07-01")
