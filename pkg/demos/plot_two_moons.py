"""
Classifying two moons in latent space
=====================================

Train a small coupling flow on the two-moons toy set and look at where the
data ends up: each class should settle around its own latent mean, and the
decision boundary in input space is the preimage of the hyperplane halfway
between the two means.
"""

import matplotlib.pyplot as plt
import numpy as np

from dxann import TrainConfig, evaluate, gen_two_moons, predict_batch, split, train

###############################################################################
# Data and training
# -----------------
# 1000 noisy points, an 80/20 split and the library defaults (four blocks,
# two hidden layers of 64, class means at -1 and +1).

train_set, test_set = split(gen_two_moons(1000, noise=0.1, seed=7), 0.8, seed=7)
model, heads, log = train(train_set, test_set, TrainConfig(seed=7))
print("test accuracy:", evaluate(model, heads, test_set).accuracy)

###############################################################################
# Input space versus latent space
# -------------------------------

xx, yy = np.meshgrid(np.linspace(-1.5, 2.5, 200), np.linspace(-1.0, 1.5, 200))
grid_labels, _, _ = predict_batch(np.c_[xx.ravel(), yy.ravel()], model, heads)
labels, z, _ = predict_batch(test_set.features, model, heads)

fig, (ax0, ax1, ax2) = plt.subplots(1, 3, figsize=(13, 4))
ax0.contourf(xx, yy, grid_labels.reshape(xx.shape), alpha=0.3, cmap="coolwarm")
ax0.scatter(*test_set.features.T, c=test_set.labels, s=8, cmap="coolwarm")
ax0.set_title("inputs and decision regions")

ax1.scatter(*z.T, c=test_set.labels, s=8, cmap="coolwarm")
ax1.scatter(*np.stack([heads.mu0, heads.mu1]).T, marker="x", c="k", s=80)
ax1.set_title("latent codes and class means")

ax2.plot([r.train_loss for r in log.records])
ax2.set_xlabel("epoch")
ax2.set_title("training loss")
fig.tight_layout()
plt.show()
