"""
How many LSTM units?
====================

Fit a parabola to test score against units per layer and read off the peak
and how much the score drops 25 units away from it.
"""
import numpy as np

from seqtag.study import binned_medians, poly_fit

rng = np.random.default_rng(0)

# Scores from a made-up study: a broad optimum near 70 units plus run-to-run noise.
units = rng.choice(np.arange(25, 126, 25), size=300)
score = 0.90 - 2e-5 * (units - 70) ** 2 + rng.normal(0, 0.01, size=units.size)

for u, median, count in binned_medians(units, score):
    print(f"{u:5.0f} units  median {median:.4f}  ({count} runs)")

# %%
fit = poly_fit(units, score)
print(f"a={fit.a:.3e} b={fit.b:.3e} c={fit.c:.4f}")
print(f"peak at {fit.x_opt:.1f} units (inside the sampled range: {fit.in_range})")
print(f"25 units away from the peak costs {-fit.gamma25 * 100:.2f} points")

# %%
# The same fit is available on a sweep's results file:
#   seqtag analyze-units --results results.csv --layers 2
