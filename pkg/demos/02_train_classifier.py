"""Train the small CNN on synthetic blob images, then snapshot and restore it.

Run:  python3 demos/02_train_classifier.py
"""

import numpy as np

import epal

print("generating 10-class synthetic images (3x32x32 blobs + pixel noise)")
data = epal.make_synthetic(classes=10, per_class=60, seed=1, noise=0.5, dtype=np.float32)
plan = epal.make_split_plan(len(data), 5, seed=2, n_test=100)   # 5 splits of 100
train_idx = np.concatenate([plan.initial, *plan.episodes])
test = data.subset(plan.test)

arch = epal.small_architecture(dropout_rate=0.2)
net = epal.build_network(arch, seed=7, dtype=np.float32)
print(f"network: {arch.to_descriptor()}")
print(f"parameters: {net.parameter_count():,}")

cfg = epal.TrainConfig(learning_rate=3e-3, batch_size=32, max_epochs=20,
                       early_stop_patience=4, seed=11)
print(f"\ntraining on {len(train_idx)} images (10% held out for early stopping)...")
trained = epal.fine_tune(net, data.images[train_idx], data.labels[train_idx], cfg, tag="demo")

print(f"test accuracy: {epal.evaluate_accuracy(trained, test.images, test.labels):.3f}")
print(f"provenance:    {trained.provenance}")

blob = trained.to_bytes()
restored = epal.NetworkSnapshot.from_bytes(blob)
same = all(np.array_equal(p, q) for p, q in zip(trained.params, restored.params))
print(f"\nsnapshot container: {len(blob):,} bytes, bit-exact restore: {same}")

again = epal.fine_tune(net, data.images[train_idx], data.labels[train_idx], cfg, tag="demo")
identical = all(np.array_equal(p, q) for p, q in zip(trained.params, again.params))
print(f"same seed trains to bit-identical parameters: {identical}")
