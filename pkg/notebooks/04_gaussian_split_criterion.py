"""
AUC-driven split criterion
==========================

Score a candidate split by modelling each side's scores as Gaussians,
Platt-calibrating each side in closed form and computing the AUC of the
resulting mixture.
"""

# %%
import math

from hetcal import synth
from hetcal.partitioner import LeafStats, TreeConfig, fit_tree, gaussian_calibrated_auc, gaussian_platt_params

# %%
# Symmetric Gaussians: the calibrating slope is 2*mu/sigma^2.

print(gaussian_platt_params(-1.0, math.sqrt(2), 1.0, math.sqrt(2), 0.5))
print(gaussian_platt_params(-1.0, 1.0, 1.0, 1.0, 0.5))

# %%
# Candidate splits on the heterogeneous toy at w = 0.

d = synth.gen_heterogeneous(20_000, 0.0, 0.0, seed=3)


def split_value(mask):
    left = LeafStats.from_scores(d.scores[mask], d.labels[mask])
    right = LeafStats.from_scores(d.scores[~mask], d.labels[~mask])
    return gaussian_calibrated_auc(left, right)


print("heterogeneous feature", split_value(d.features[:, 0] <= 0.5))
print("noise feature        ", split_value(d.features[:, 1] <= 0.5))

# %%
tree = fit_tree(d, TreeConfig(criterion="auc_gaussian", max_depth=2, min_samples_leaf=500))
print(tree, "root splits on", d.feature_names[tree.nodes[0].feature])
