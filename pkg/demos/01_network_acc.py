"""
Holdings network and ACC
========================

Relative holdings, links and reflections on a tiny hand-made portfolio set,
then on one quarter of a synthetic panel.
"""

import numpy as np

from fundnet import acc, binarize, density_sweep, diversification, reflections, relative_holdings
from fundnet.synthgen import SynthSpec, generate_frames

# two funds, two stocks: fund B holds both, fund A only the first
H = np.array([[100.0, 0.0], [100.0, 100.0]])
rh = relative_holdings(H)
print("relative holdings\n", rh.values)

# a link is an overweight position (RH >= 1)
adj = binarize(rh, 1.0)
print("adjacency\n", adj.dense())
print("density sweep", density_sweep(rh, [0.5, 1.0, 2.0]))

# ACC is the mean degree of the stocks a fund links to
prof = reflections(np.array([[1, 1, 1], [1, 0, 0]]), n_max=2)
print("ACC", acc(prof).round(3).tolist(), "diversification", diversification(prof).tolist())

# on synthetic data niche funds (own block of stocks) sit at the low end
data = generate_frames(SynthSpec(seed=1, n_funds=60, n_constituents=400, n_quarters=2, popular_pool=60,
                                 holdings_per_fund=10))
first = data.holdings[data.holdings["quarter_end"] == data.holdings["quarter_end"].min()]
H = first.pivot_table(index="fund_id", columns="constituent_id", values="market_value", fill_value=0.0)
a = acc(reflections(binarize(relative_holdings(H.to_numpy()), 1.0), 2))
a.index = H.index
niche = a.index.isin(data.niche[first["quarter_end"].iloc[0]])
print(f"mean ACC  niche {a[niche].mean():.2f}  popular {a[~niche].mean():.2f}")
