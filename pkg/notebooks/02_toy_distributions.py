"""
Toy score distributions
=======================

An over-confident model whose training scores are sharper than its test
scores, and a base score that under-weights one binary feature.
"""

# %%
import numpy as np

from hetcal import metrics, synth

# %%
# Over-confidence: training AUC overstates test AUC.

train, test = synth.gen_overconfident(100_000, seed=0)
print("train AUC", metrics.empirical_auc(train))
print("test AUC ", metrics.empirical_auc(test))

# %%
# Population AUC of base + w*x + b as the feature weight w changes.
# The shift b never matters.

for w, b in ((0.0, 0.0), (1.8, -0.9), (3.6, -1.8)):
    print(f"w={w:3.1f} b={b:4.1f} AUC={synth.true_auc_heterogeneous(w, b):.5f}")

# %%
# The whole curve on a 0.2 grid; its peak sits at w = ln(3) * sigma^2.

rows = synth.figure2_sweep(0.2 * np.arange(31))
w_best = rows[np.argmax(rows[:, 1]), 0]
print("grid maximiser", w_best, "analytic", np.log(3) * synth.SIGMA_BASE ** 2)

# %%
# Monte Carlo agrees with the integral.

d = synth.gen_heterogeneous(200_000, 1.8, -0.9, seed=1)
print("sampled AUC", metrics.empirical_auc(d), "population", synth.true_auc_heterogeneous(1.8, -0.9))
