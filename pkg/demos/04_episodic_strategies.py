"""Episode-based active learning: compare update/final-training strategies.

Each strategy sees the same stream of episodes. After every episode the
engine evaluates the network that would result from stopping there, so one
run traces the whole learning curve. Strategies differ in what they
fine-tune on (newest acquisitions vs everything so far) and where they
restart from (previous network vs the initial one).

Run:  python3 demos/04_episodic_strategies.py      (about a minute)
"""

import numpy as np

import epal
from epal.episodic import initial_network, run_strategy, strategy
from epal.uncertainty import McConfig

data = epal.make_synthetic(classes=10, per_class=49, seed=3, noise=0.6, dtype=np.float32)
plan = epal.make_split_plan(len(data), 4, seed=4, n_test=90)    # initial + 3 episodes of 100
cfg = epal.TrainConfig(learning_rate=3e-3, batch_size=32, max_epochs=10,
                       early_stop_patience=3, seed=0)
arch = epal.small_architecture(dropout_rate=0.2)
mc = McConfig(passes=16, seed=0)
THETA = 0.8

print(f"pool: {plan.train_pool_size} train / {len(plan.test)} test, "
      f"{plan.n_episodes} episodes of {len(plan.episodes[0])}")
net0 = initial_network(plan, data, cfg, arch, seed=42, dtype=np.float32)
print(f"initial network accuracy: "
      f"{epal.evaluate_accuracy(net0, data.images[plan.test], data.labels[plan.test]):.3f}\n")

for sid in (1, 2, 3, 4, 5):
    spec = strategy(sid)
    records, final = run_strategy(spec, plan, data, cfg, mc, THETA, seed=42,
                                  initial_net=net0)
    accs = " ".join(f"{r.final_test_accuracy:.2f}" for r in records)
    counts = " ".join(f"{r.acquired_count:3d}" for r in records)
    last = records[-1]
    print(f"strategy {sid} ({spec.update_rule.value} / {spec.final_rule.value})")
    print(f"  acquired per episode: {counts}")
    print(f"  accuracy if stopped:  {accs}")
    print(f"  final: acc={last.final_test_accuracy:.3f} "
          f"used={last.used_fraction:.0%} of the pool\n")

rec6, _ = epal.run_baseline(strategy(6), data.subset(np.concatenate([plan.initial, *plan.episodes])),
                            cfg, seed=42, architecture=arch,
                            test_data=data.subset(plan.test), dtype=np.float32)
print(f"baseline 6 (full training set): acc={rec6.final_test_accuracy:.3f} used=100%")
