"""Monte-Carlo dropout: predictive distributions, entropy, threshold acquisition.

Keeping dropout on at inference and averaging many stochastic softmax
outputs gives an uncertainty-aware distribution; its entropy separates
confidently-classified inputs from confusing ones.

Run:  python3 demos/03_mc_dropout_entropy.py
"""

import math

import numpy as np

import epal
from epal.uncertainty import McConfig, acquire, entropy, mc_predict

data = epal.make_synthetic(classes=10, per_class=60, seed=1, noise=0.5, dtype=np.float32)
plan = epal.make_split_plan(len(data), 5, seed=2, n_test=100)
train_idx = np.concatenate([plan.initial, plan.episodes[0]])

arch = epal.small_architecture(dropout_rate=0.2)
net = epal.build_network(arch, seed=7, dtype=np.float32)
cfg = epal.TrainConfig(learning_rate=3e-3, batch_size=32, max_epochs=20,
                       early_stop_patience=4, seed=11)
trained = epal.fine_tune(net, data.images[train_idx], data.labels[train_idx], cfg)

print("entropy reference points (nats):")
print(f"  uniform over 10 classes: {entropy(np.full(10, 0.1)):.4f}  (= ln 10)")
print(f"  one-hot:                 {entropy(np.eye(10)[0]):.4f}")
print(f"  50/50 over two classes:  {entropy(np.array([.5, .5] + [0.]*8)):.4f}  (= ln 2)")

img = data.images[plan.episodes[1][0]]
print("\npredictive distribution of one image vs number of passes:")
for passes in (1, 4, 16, 64):
    dist = mc_predict(trained, img, McConfig(passes=passes, seed=3))
    top = int(dist.probs.argmax())
    print(f"  T={passes:3d}: H={dist.entropy_nats:.3f} nats, argmax class {top} "
          f"p={dist.probs[top]:.3f}, sum={dist.probs.sum():.9f}")

episode = data.images[plan.episodes[1]]
print(f"\nscoring an episode of {len(episode)} unseen images, threshold sweep:")
for theta in (0.2, 0.8, 1.4, math.log(10)):
    picked = acquire(episode, trained, McConfig(passes=16, seed=3), theta)
    print(f"  theta={theta:.2f}: acquire {len(picked):3d} images")
print("(a higher threshold always selects a subset of a lower one)")
