"""Command-line driver: ``fundnet <stage> --config run.ini``.

Stages read and write plain CSV dumps under the output directory::

    network/  rh_<date>.csv  adjacency_<date>.csv  profile_<date>.csv  density_sweep.csv
    alphas/   alphas_<model>_<date>.csv
    reports/  report_<experiment>_<window>.csv/.txt  median_split_<model>_<window>.csv
    stats/    summary_<window>.csv  scatter_<window>.csv

Every stage directory carries a manifest.json fingerprinting the inputs and
parameters it was built from; later stages refuse stale or missing dumps.
``pipeline`` runs network, alphas, sort and stats in that order and adds a
run_manifest.json (the only output carrying a timestamp).
"""

from __future__ import annotations

import argparse
import configparser
import datetime as dt
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import EmptyResultError, FundnetError, InputError
from .factors import MODELS, annualize_alpha
from .formations import MIN_LOOKBACK_FRACTION, assemble_formation, formation_quarters, past_alphas
from .ingest import (MAX_MISSING_FRACTION, MAX_MISSING_WEEKDAYS, MIN_EQUITY_SHARE, IngestConfig, build_panel,
                     parse_quarter, quarter_label)
from .io import check_manifest, read_manifest, sha256_file, write_csv, write_json, write_text
from .network import density_sweep, profile_frame, profile_from_frame, snapshot_profile, triplets
from .skill import scatter_export, summary_stats
from .sorts import CRITERIA, FormationSet, double_sort, median_split_series, one_way_sort, reverse_sort
from .synthgen import SynthSpec, generate

log = logging.getLogger("fundnet")

DEFAULT_DENSITY_THRESHOLDS = (0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0)
STAT_COLUMNS = ["acc", "diversification", "size", "past_alpha_3f", "past_alpha_5f", "delta_3f", "delta_5f"]


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    holdings: Path | None = None
    returns: Path | None = None
    factors: Path | None = None
    portfolio_map: Path | None = None
    windows: dict = field(default_factory=lambda: {"full": (None, None)})
    models: tuple[str, ...] = ("3f", "5f")
    criteria: tuple[str, ...] = ("acc", "diversification", "past_alpha", "cohen_delta")
    threshold: float = 1.0
    n_max: int = 2
    k: int = 10
    core_trim: bool = True
    double_sorts: bool = True
    density_thresholds: tuple[float, ...] = DEFAULT_DENSITY_THRESHOLDS
    out: Path = Path("out")
    seed: int = 0
    consecutive: bool = True
    min_equity_share: float = MIN_EQUITY_SHARE
    max_missing_fraction: float = MAX_MISSING_FRACTION
    max_missing_weekdays: int = MAX_MISSING_WEEKDAYS
    min_lookback_fraction: float = MIN_LOOKBACK_FRACTION
    synth: dict = field(default_factory=dict)
    source: Path | None = None

    def ingest_config(self) -> IngestConfig:
        return IngestConfig(self.min_equity_share, self.max_missing_fraction, self.max_missing_weekdays,
                            self.portfolio_map, self.consecutive)

    def input_paths(self) -> dict[str, Path]:
        paths = {"holdings": self.holdings, "returns": self.returns, "factors": self.factors}
        missing = [k for k, v in paths.items() if v is None]
        if missing:
            raise InputError(f"config lacks input path(s): {', '.join(missing)} (section [inputs])")
        if self.portfolio_map is not None:
            paths["portfolio_map"] = self.portfolio_map
        for name, p in paths.items():
            if not p.is_file():
                raise InputError(f"{name} file not found: {p}")
        return paths


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def _bool(value: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"config: {key} must be true or false, got {value!r}")


def _date(text: str, key: str):
    text = text.strip()
    if not text:
        return None
    try:
        return pd.Timestamp(text)
    except (ValueError, TypeError):
        raise InputError(f"config: bad date {text!r} in window {key!r}") from None


def load_config(path=None) -> RunConfig:
    """Parse an INI-style config; relative paths resolve against its folder."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = path.read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError:
        parser.read_string("[synth]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    base = path.resolve().parent
    resolve = lambda v: (base / v.strip()) if v.strip() else None
    vals: dict = {"source": path.resolve()}

    if parser.has_section("inputs"):
        for key, value in parser.items("inputs"):
            if key not in ("holdings", "returns", "factors", "portfolio_map"):
                raise InputError(f"{path}: unknown key {key!r} in [inputs]")
            vals[key] = resolve(value)
    if parser.has_section("run"):
        sec = parser["run"]
        conv = {
            "models": lambda v: tuple(_model(m) for m in _split(v)),
            "criteria": lambda v: tuple(_criterion(c) for c in _split(v)),
            "threshold": float, "n_max": int, "k": int, "seed": int,
            "core_trim": lambda v: _bool(v, "core_trim"), "double_sorts": lambda v: _bool(v, "double_sorts"),
            "consecutive": lambda v: _bool(v, "consecutive"),
            "density_thresholds": lambda v: tuple(float(x) for x in _split(v)),
            "out": resolve, "min_equity_share": float, "max_missing_fraction": float,
            "max_missing_weekdays": int, "min_lookback_fraction": float,
        }
        for key, value in sec.items():
            if key not in conv:
                raise InputError(f"{path}: unknown key {key!r} in [run]")
            try:
                vals[key] = conv[key](value)
            except ValueError as exc:
                raise InputError(f"{path}: bad value for {key}: {exc}") from None
    if parser.has_section("windows"):
        windows = {}
        for label, value in parser.items("windows"):
            if ":" not in value and " to " not in value:
                raise InputError(f"{path}: window {label!r} must read 'start : end'")
            start, end = value.split(":", 1) if ":" in value else value.split(" to ", 1)
            windows[label.strip()] = (_date(start, label), _date(end, label))
        if not windows:
            raise InputError(f"{path}: [windows] is empty")
        vals["windows"] = windows
    if parser.has_section("synth"):
        vals["synth"] = dict(parser.items("synth"))
    cfg = RunConfig(**vals)
    _validate(cfg)
    return cfg


def _model(m: str) -> str:
    key = m.lower()
    if key not in MODELS:
        raise ValueError(f"unknown model {m!r} (expected 3f or 5f)")
    return key


def _criterion(c: str) -> str:
    if c not in CRITERIA:
        raise ValueError(f"unknown criterion {c!r} (expected one of {', '.join(sorted(CRITERIA))})")
    return c


def _validate(cfg: RunConfig):
    if cfg.n_max < 1:
        raise InputError("config: n_max must be at least 1 (ACC is order 1)")
    if cfg.threshold < 0:
        raise InputError("config: threshold must be nonnegative")
    if cfg.k < 2:
        raise InputError("config: k must be at least 2")
    if not cfg.models or not cfg.criteria:
        raise InputError("config: models and criteria must be nonempty")


# ---------------------------------------------------------------------------
# run context


class Run:
    """One invocation: resolved config, output folder and the lazily built panel."""

    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.out = Path(cfg.out)

    @cached_property
    def input_hashes(self) -> dict[str, str]:
        return {name: sha256_file(p) for name, p in sorted(self.cfg.input_paths().items())}

    @cached_property
    def panel(self):
        paths = self.cfg.input_paths()
        panel = build_panel(paths["holdings"], paths["returns"], paths["factors"], self.cfg.ingest_config())
        if "5f" in self.cfg.models and not panel.has_five_factors:
            raise InputError(f"{paths['factors']}: rmw/cma values are required by the 5f model")
        return panel

    def ingest_fingerprint(self) -> dict:
        c = self.cfg
        return {"inputs": self.input_hashes, "min_equity_share": c.min_equity_share,
                "max_missing_weekdays": c.max_missing_weekdays, "consecutive": c.consecutive,
                "version": __version__}

    def network_fingerprint(self) -> dict:
        return dict(self.ingest_fingerprint(), threshold=self.cfg.threshold, n_max=self.cfg.n_max)

    def alphas_fingerprint(self) -> dict:
        return dict(self.ingest_fingerprint(), min_lookback_fraction=self.cfg.min_lookback_fraction)

    def map(self, fn, items):
        items = list(items)
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# stages


def cmd_network(run: Run) -> dict:
    cfg, panel = run.cfg, run.panel
    d = run.out / "network"

    def one(q):
        rh, adj, prof = snapshot_profile(panel.snapshots[q], cfg.threshold, cfg.n_max)
        sweep = density_sweep(rh, cfg.density_thresholds)
        return q, rh, adj, prof, sweep

    sweeps, iso = [], {}
    for q, rh, adj, prof, sweep in run.map(one, panel.quarters):
        date = quarter_label(q)
        write_csv(triplets(rh), d / f"rh_{date}.csv")
        write_csv(triplets(adj), d / f"adjacency_{date}.csv")
        write_csv(profile_frame(prof), d / f"profile_{date}.csv")
        sweeps += [{"quarter": date, "threshold": x, "density": v} for x, v in sweep]
        iso[date] = int(prof.isolated_funds.sum())
    write_csv(pd.DataFrame(sweeps, columns=["quarter", "threshold", "density"]), d / "density_sweep.csv")
    manifest = {"stage": "network", "fingerprint": run.network_fingerprint(),
                "quarters": [quarter_label(q) for q in panel.quarters], "isolated_funds": iso,
                "provenance": panel.provenance}
    write_json(manifest, d / "manifest.json")
    return manifest


def cmd_alphas(run: Run) -> dict:
    cfg, panel = run.cfg, run.panel
    d = run.out / "alphas"
    quarters, skipped_q = formation_quarters(panel)
    jobs = [(q, m) for q in quarters for m in cfg.models]
    results = run.map(lambda job: past_alphas(panel, job[0], job[1], cfg.min_lookback_fraction), jobs)
    skipped_funds = {}
    for (q, m), (df, skipped) in zip(jobs, results):
        date = quarter_label(q)
        betas = [c for c in df.columns if c.startswith("beta_")]
        out = pd.DataFrame({"fund_id": df.index, "alpha_daily": df["alpha_daily"].to_numpy(),
                            "alpha_annual_pct": annualize_alpha(df["alpha_daily"].to_numpy()),
                            "t_alpha": df["t_alpha"].to_numpy()})
        for b in betas:
            out[b] = df[b].to_numpy()
        out["n_obs"] = df["n_obs"].to_numpy()
        write_csv(out, d / f"alphas_{m}_{date}.csv")
        skipped_funds[f"{m}_{date}"] = len(skipped)
    manifest = {"stage": "alphas", "fingerprint": run.alphas_fingerprint(), "models": list(cfg.models),
                "quarters": [quarter_label(q) for q in quarters], "skipped_quarters": skipped_q,
                "skipped_funds": skipped_funds}
    write_json(manifest, d / "manifest.json")
    return manifest


def load_formations(run: Run) -> FormationSet:
    """Rebuild the per-quarter ranking inputs from the network and alpha dumps."""
    cfg, panel = run.cfg, run.panel
    net = check_manifest(run.out / "network" / "manifest.json", run.network_fingerprint(), "network")
    al = check_manifest(run.out / "alphas" / "manifest.json", run.alphas_fingerprint(), "alphas")
    missing = [m for m in cfg.models if m not in al.get("models", [])]
    if missing:
        raise InputError(f"alpha dumps lack model(s) {', '.join(missing)}; rerun the alphas stage")
    known = set(net.get("quarters", []))

    def one(label):
        if label not in known:
            raise InputError(f"no network dump for quarter {label}; rerun the network stage")
        q = parse_quarter(label)
        prof = profile_from_frame(_read_dump(run.out / "network" / f"profile_{label}.csv", "node_id"), q)
        alphas = {m: _read_dump(run.out / "alphas" / f"alphas_{m}_{label}.csv", "fund_id").set_index("fund_id")
                  for m in cfg.models}
        return assemble_formation(panel, q, prof, alphas, cfg.max_missing_fraction)

    forms = run.map(one, al.get("quarters", []))
    return FormationSet(tuple(forms), panel.gross_returns, panel.factors, "all")


def _read_dump(path: Path, id_col: str) -> pd.DataFrame:
    if not path.is_file():
        raise InputError(f"missing intermediate dump {path}; rerun the earlier stage")
    return pd.read_csv(path, dtype={id_col: str}, keep_default_na=False, na_values=[""])


def _window_sets(run: Run, fset: FormationSet) -> dict[str, FormationSet]:
    out = {}
    for label, (start, end) in run.cfg.windows.items():
        w = fset.window(start, end, label)
        if not len(w):
            raise EmptyResultError(f"window {label!r} contains no usable formation quarter")
        out[label] = w
    return out


def _experiments(cfg: RunConfig, model: str):
    """(name, callable(fset)) pairs for one post-ranking model."""
    jobs = []
    for crit in cfg.criteria:
        jobs.append((f"oneway_{crit}_{model}", lambda f, c=crit: one_way_sort(f, c, model, cfg.k)))
        if cfg.core_trim:
            jobs.append((f"oneway_{crit}_{model}_core",
                         lambda f, c=crit: one_way_sort(f, c, model, cfg.k, core_trim=True)))
    if cfg.double_sorts:
        pairs = [("past_alpha", "acc")]
        if "cohen_delta" in cfg.criteria:
            pairs.append(("cohen_delta", "acc"))
        for first, second in pairs:
            for core in ([False, True] if cfg.core_trim else [False]):
                sfx = f"_{model}" + ("_core" if core else "")
                jobs.append((f"double_{first}_{second}{sfx}",
                             lambda f, a=first, b=second, c=core: double_sort(f, a, b, model, core_trim=c)))
                jobs.append((f"reverse_{second}_{first}{sfx}",
                             lambda f, a=first, b=second, c=core: reverse_sort(f, model, b, a, core_trim=c)))
    return jobs


def cmd_sort(run: Run, fset: FormationSet | None = None) -> dict:
    cfg = run.cfg
    fset = fset or load_formations(run)
    windows = _window_sets(run, fset)
    d = run.out / "reports"
    jobs = [(w, m, name, fn) for w in windows for m in cfg.models for name, fn in _experiments(cfg, m)]

    def one(job):
        w, m, name, fn = job
        try:
            return fn(windows[w]), None
        except EmptyResultError as exc:
            return None, str(exc)

    results = run.map(one, jobs)
    written, skipped = [], {}
    for (w, m, name, _), (report, why) in zip(jobs, results):
        if report is None:
            log.warning("%s/%s skipped: %s", name, w, why)
            skipped[f"{name}_{w}"] = why
            continue
        stem = f"report_{name}_{w}"
        write_csv(report.to_frame(), d / f"{stem}.csv")
        write_text(report.to_text(), d / f"{stem}.txt")
        written.append(stem)
    for w in windows:
        for m in cfg.models:
            try:
                ms = median_split_series(windows[w], m)
            except EmptyResultError as exc:
                skipped[f"median_split_{m}_{w}"] = str(exc)
                continue
            write_csv(ms, d / f"median_split_{m}_{w}.csv")
            written.append(f"median_split_{m}_{w}")
    if not written:
        raise EmptyResultError("no report could be produced for any window")
    manifest = {"stage": "sort", "reports": written, "skipped": skipped,
                "windows": {w: [f.quarter_label for f in s.formations] for w, s in windows.items()}}
    write_json(manifest, d / "manifest.json")
    return manifest


def window_summary(fset: FormationSet) -> pd.DataFrame:
    """Cross-sectional statistics per quarter, averaged over the window's quarters."""
    recs = []
    for col in STAT_COLUMNS:
        per_q = []
        for form in fset.formations:
            if col not in form.criteria:
                continue
            x = form.criteria[col].to_numpy(dtype=float)
            x = x[np.isfinite(x)]
            if len(x) >= 2:
                per_q.append(summary_stats(x))
        if not per_q:
            continue
        rec = {"quantity": col, "n_quarters": len(per_q), "n_obs": int(sum(s.n for s in per_q))}
        for stat in ("min", "max", "mean", "std", "skew", "kurt"):
            rec[stat] = float(np.mean([getattr(s, stat) for s in per_q]))
        rec["moments_defined"] = all(s.moments_defined for s in per_q)
        recs.append(rec)
    cols = ["quantity", "n_quarters", "n_obs", "min", "max", "mean", "std", "skew", "kurt", "moments_defined"]
    return pd.DataFrame.from_records(recs, columns=cols)


def cmd_stats(run: Run, fset: FormationSet | None = None) -> dict:
    fset = fset or load_formations(run)
    windows = _window_sets(run, fset)
    d = run.out / "stats"
    for w, s in windows.items():
        write_csv(window_summary(s), d / f"summary_{w}.csv")
        write_csv(scatter_export(s.formations, run.cfg.k), d / f"scatter_{w}.csv")
    manifest = {"stage": "stats", "windows": sorted(windows)}
    write_json(manifest, d / "manifest.json")
    return manifest


def stats_of_file(path, out: Path | None = None) -> pd.DataFrame:
    """Summary statistics of every numeric column in a CSV file."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    df = pd.read_csv(path)
    num = df.select_dtypes(include="number")
    if num.empty:
        raise InputError(f"{path}: no numeric columns")
    recs = []
    for col in num.columns:
        try:
            recs.append(dict(quantity=col, **summary_stats(num[col]).as_dict()))
        except ValueError as exc:
            raise InputError(f"{path}: column {col!r}: {exc}") from None
    table = pd.DataFrame.from_records(recs)
    if out is not None:
        write_csv(table, Path(out) / "stats" / f"summary_{path.stem}.csv")
    return table


def cmd_pipeline(run: Run) -> dict:
    net = cmd_network(run)
    al = cmd_alphas(run)
    fset = load_formations(run)
    rep = cmd_sort(run, fset)
    st = cmd_stats(run, fset)
    cfg_hash = hashlib.sha256(Path(run.cfg.source).read_bytes()).hexdigest() if run.cfg.source else None
    manifest = {
        "version": __version__,
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "config": str(run.cfg.source) if run.cfg.source else None,
        "config_sha256": cfg_hash,
        "inputs": run.input_hashes,
        "filters": net["provenance"],
        "skipped_quarters": al["skipped_quarters"],
        "reports": rep["reports"],
        "skipped_experiments": rep["skipped"],
        "stats_windows": st["windows"],
    }
    write_json(manifest, run.out / "run_manifest.json")
    return manifest


def cmd_synth(cfg: RunConfig, out: Path) -> dict:
    values = dict(cfg.synth)
    values.setdefault("seed", str(cfg.seed))
    spec = SynthSpec.from_mapping(values)
    paths = generate(spec, out)
    return {k: str(v) for k, v in paths.items()}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fundnet", description="Holdings-network commonality and fund sorting backtests.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("pipeline", "run every stage"), ("network", "relative holdings, links and reflections"),
                       ("alphas", "look-back factor alphas"), ("sort", "sorting experiments and reports"),
                       ("synth", "write a synthetic input triple"), ("stats", "summary statistics and scatter data")]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", type=Path, help="INI config file")
        s.add_argument("--out", type=Path, help="output directory (overrides [run] out)")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--threshold", type=float, help="link threshold x on relative holdings")
        s.add_argument("--model", choices=sorted(MODELS), help="restrict to one factor model")
        s.add_argument("--window", help="restrict to one window label")
        s.add_argument("--k", type=int, help="number of buckets in one-way sorts")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "stats":
            s.add_argument("--input", type=Path, help="summarise the numeric columns of this CSV instead")
        if name == "synth":
            s.add_argument("--seed", type=int)
    return p


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.threshold is not None:
        changes["threshold"] = args.threshold
    if args.model is not None:
        changes["models"] = (args.model,)
    if args.k is not None:
        changes["k"] = args.k
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
        changes["synth"] = dict(cfg.synth, seed=str(args.seed))
    if args.window is not None:
        if args.window not in cfg.windows:
            raise InputError(f"unknown window {args.window!r}; configured: {', '.join(cfg.windows)}")
        changes["windows"] = {args.window: cfg.windows[args.window]}
    cfg = replace(cfg, **changes)
    _validate(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="fundnet: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        if args.command == "synth":
            result = cmd_synth(cfg, Path(cfg.out))
        elif args.command == "stats" and args.input is not None:
            table = stats_of_file(args.input, Path(cfg.out))
            sys.stdout.write(table.to_string(index=False) + "\n")
            return 0
        else:
            run = Run(cfg, args.threads)
            result = {"pipeline": cmd_pipeline, "network": cmd_network, "alphas": cmd_alphas,
                      "sort": cmd_sort, "stats": cmd_stats}[args.command](run)
        if args.verbose:
            sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
        return 0
    except FundnetError as exc:
        return _fail(exc, exc.exit_code)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(exc, InputError.exit_code)
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        return _fail(exc, FundnetError.exit_code)


def _fail(exc: BaseException, code: int) -> int:
    msg = str(exc).replace("\n", " ")
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
