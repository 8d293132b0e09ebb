"""
Synthetic horse race
====================

Plant a commonality premium and a skill premium, then check that the double
sort keeps the ACC spread after conditioning on past alpha, while the reverse
sort keeps the past-alpha spread after conditioning on ACC.
"""

import tempfile
from pathlib import Path

from fundnet.formations import build_formations
from fundnet.ingest import build_panel
from fundnet.sorts import double_sort, one_way_sort, reverse_sort
from fundnet.synthgen import SynthSpec, generate

spec = SynthSpec(seed=7, s_c=0.0004, s_a=0.0008, sigma=0.001, skill_fraction=0.4, redraw_niche=True)
with tempfile.TemporaryDirectory() as tmp:
    paths = generate(spec, Path(tmp))
    panel = build_panel(paths["holdings"], paths["returns"], paths["factors"])
fset = build_formations(panel, models=("3f",))

oneway = one_way_sort(fset, "acc", "3f", k=10)
print(oneway.to_text())

double = double_sort(fset, "past_alpha", "acc", "3f")
print(double.to_text())

reverse = reverse_sort(fset, "3f")
print(reverse.to_text())

print("planted ACC spread  %.2f %%/yr, planted skill %.2f %%/yr" % (spec.s_c * 25200, spec.s_a * 25200))
print("double  top-bottom Avg %.2f" % double.alpha.at["top-bottom", "Avg"])
print("reverse top-bottom Avg %.2f" % reverse.alpha.at["top-bottom", "Avg"])
