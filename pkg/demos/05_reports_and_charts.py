"""Efficiency metrics, trial aggregation, CSV emission, and SVG line charts.

Run:  python3 demos/05_reports_and_charts.py
Then open demo_out/*.svg in a browser.
"""

import os

import numpy as np

import epal
from epal.episodic import initial_network, run_strategy, strategy
from epal.report import aggregate, efficiency, emit_csv, emit_svg_chart, rows_from_records
from epal.rng import RngStream
from epal.uncertainty import McConfig

print("== efficiency score ==")
print("accuracy 0.81 using 74% of the data:   xi =", round(efficiency(0.810, 0.74), 4))
print("accuracy 0.805 using all of the data:  xi =", round(efficiency(0.805, 1.00), 4))
rel = efficiency(0.810, 0.74) / efficiency(0.805, 1.00)
print(f"relative efficiency of the first run: {rel:.2f}")

print("\n== two trials of two strategies on a small synthetic stream ==")
data = epal.make_synthetic(classes=10, per_class=55, seed=5, noise=0.6, dtype=np.float32)
plan = epal.make_split_plan(len(data), 5, seed=6, n_test=50)    # 5 splits of 100
cfg = epal.TrainConfig(learning_rate=3e-3, batch_size=32, max_epochs=10,
                       early_stop_patience=3, seed=0)
arch = epal.small_architecture(dropout_rate=0.2)
mc = McConfig(passes=8, seed=0)

results = {}
for sid in (1, 3):
    for trial in range(2):
        seed = RngStream(99).child(trial).derive_seed()
        net0 = initial_network(plan, data, cfg, arch, seed, dtype=np.float32)
        records, _ = run_strategy(strategy(sid), plan, data, cfg, mc, 0.8, seed,
                                  initial_net=net0)
        results[(sid, trial)] = records
        print(f"  strategy {sid} trial {trial}: "
              f"final acc {records[-1].final_test_accuracy:.3f}")

os.makedirs("demo_out", exist_ok=True)
rows = []
for (sid, trial), records in sorted(results.items()):
    rows.extend(rows_from_records(sid, trial, records))
emit_csv(rows, "demo_out/trials.csv")
print(f"\nwrote demo_out/trials.csv ({len(rows)} data rows)")

reports = [aggregate(sid, {t: results[(sid, t)] for t in range(2)}) for sid in (1, 3)]
for kind in ("accuracy_vs_episode", "accuracy_vs_acquired", "acquisitions_vs_episode"):
    emit_svg_chart(reports, kind, f"demo_out/{kind}.svg")
    print(f"wrote demo_out/{kind}.svg")
print("\nidentical inputs always produce byte-identical files.")
