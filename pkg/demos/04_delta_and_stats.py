"""
Ownership-weighted skill and summary statistics
===============================================

delta* averages the alpha of the funds that own each stock, then maps it
back to funds by portfolio weight.  The summary table reports the raw
moments used for the cross-sectional tables.
"""

import numpy as np

from fundnet import cohen_delta, summary_stats

H = np.array([[10.0, 0.0, 5.0], [10.0, 10.0, 0.0], [0.0, 10.0, 5.0]])
alpha = np.array([0.3, 0.1, -0.2])
print("delta*", cohen_delta(H, alpha).round(4).tolist())

# constant alpha is a fixed point
print("constant", cohen_delta(H, np.full(3, 0.05)).round(12).tolist())

x = np.random.default_rng(0).standard_t(5, size=5000)
s = summary_stats(x)
print(f"n={s.n} mean={s.mean:.3f} std={s.std:.3f} skew={s.skew:.3f} kurt={s.kurt:.3f}")
