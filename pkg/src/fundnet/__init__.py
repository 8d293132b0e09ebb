"""Holdings-network commonality (ACC) and fund sorting backtests."""

__version__ = "0.1.0"

from .errors import EmptyResultError, EstimationError, FundnetError, InputError
from .factors import AlphaEstimate, FactorModelSpec, annualize_alpha, estimate_alpha, estimate_alphas, lookback_window
from .formations import build_formations, formation_quarters
from .ingest import (HoldingsSnapshot, IngestConfig, SamplePanel, build_panel, filter_consecutive,
                     filter_equity_funds, gross_return, parse_inputs)
from .network import (BipartiteAdjacency, ReflectionProfile, RelativeHoldings, acc, binarize, density,
                      density_sweep, diversification, reflections, relative_holdings)
from .skill import cohen_delta, fund_size, scatter_export, summary_stats
from .sorts import (FormationSet, QuantilePartition, RankingCriterion, SortReport, concatenate_quarters, core_trim,
                    double_sort, median_split_series, one_way_sort, portfolio_returns, rank_and_bucket, reverse_sort)
from .synthgen import SynthSpec, generate, generate_frames

__all__ = [n for n, v in list(globals().items()) if not n.startswith("_") and not hasattr(v, "__path__")
           and getattr(v, "__module__", "").startswith("fundnet")]
