"""
Factor-model alphas
===================

Daily alpha of a fund on the three- and five-factor models, annualised in
percent, plus the look-back window used for ranking.
"""

import numpy as np
import pandas as pd

from fundnet import annualize_alpha, estimate_alpha, lookback_window

rng = np.random.default_rng(0)
days = pd.bdate_range("2005-01-03", periods=189)
factors = pd.DataFrame(rng.normal(0, [0.01, 0.005, 0.005, 0.004, 0.004], (len(days), 5)), index=days,
                       columns=["mkt_rf", "smb", "hml", "rmw", "cma"])
factors["rf"] = 1e-4

# 4 bp a day of skill on top of a market beta of 0.9
fund = factors["rf"] + 0.0004 + 0.9 * factors["mkt_rf"] + rng.normal(0, 0.004, len(days))

for model in ("3f", "5f"):
    est = estimate_alpha(fund, factors, model)
    print(f"{model}: alpha {annualize_alpha(est.alpha_daily):6.2f} %/yr  t={est.t_alpha:5.2f}  "
          f"beta_mkt={est.betas['mkt_rf']:.3f}  n={est.n_obs}")

start, end = lookback_window(pd.Period("2005Q3", freq="Q"))
print("ranking at 2005Q3 uses returns from", start.date(), "to", end.date())
