"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
per-criterion lines as they pass). The desk-scale trend check retrains
dozens of small networks and dominates the runtime.
"""

import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest

import _desk
import epal
from epal import ops
from epal.cli import main as cli_main
from epal.episodic import run_strategy, strategy
from epal.network import TrainConfig, mlp_architecture
from epal.report import efficiency
from epal.rng import RngStream
from epal.uncertainty import McConfig, entropy, mc_predict, mc_predict_batch

from test_gradients import numerical_grad, rel_err


def _report(n, text):
    print(f"\nACCEPTANCE {n} PASS: {text}")


# ---------------------------------------------------------------------------
# 1. Relative-efficiency arithmetic reproduces the published table
# ---------------------------------------------------------------------------

def test_criterion_1_table_metric_arithmetic():
    rows = [
        (0.810, 0.74, 1.36),
        (0.808, 0.70, 1.43),
        (0.767, 0.73, 1.31),
        (0.793, 0.82, 1.20),
        (0.787, 0.73, 1.34),
        (0.805, 1.00, 1.0),
        (0.781, 0.74, 1.31),
    ]
    xi_full = efficiency(0.805, 1.00)
    for acc, frac, expected in rows:
        relative = efficiency(acc, frac) / xi_full
        assert abs(relative - expected) <= 0.005, (acc, frac, relative, expected)
    _report(1, "all seven relative-efficiency values reproduced within ±0.005")


# ---------------------------------------------------------------------------
# 2. Gradient correctness (64-bit central differences, 1e-4 relative)
# ---------------------------------------------------------------------------

def test_criterion_2_gradient_correctness():
    checked = 0
    for seed in range(10):
        g = np.random.default_rng(seed)

        x = g.normal(size=(2, 2, 4, 4))
        k = g.normal(size=(3, 2, 3, 3)) * 0.5
        b = g.normal(size=3) * 0.1
        r = g.normal(size=(2, 3, 4, 4))
        _, cache = ops.conv2d_forward(x, k, b)
        gx, gk, gb = ops.conv2d_backward(r, cache)
        for analytic, wrt in ((gx, x), (gk, k), (gb, b)):
            numeric = numerical_grad(lambda: (ops.conv2d_forward(x, k, b)[0] * r).sum(), wrt)
            assert rel_err(analytic, numeric) < 1e-4

        xp = g.permuted(np.arange(2 * 2 * 4 * 4, dtype=np.float64)).reshape(2, 2, 4, 4)
        rp = g.normal(size=(2, 2, 2, 2))
        _, pc = ops.maxpool2_forward(xp)
        gp = ops.maxpool2_backward(rp, pc)
        assert rel_err(gp, numerical_grad(lambda: (ops.maxpool2_forward(xp)[0] * rp).sum(), xp)) < 1e-4

        xd = g.normal(size=(3, 5))
        wd = g.normal(size=(5, 4))
        bd = g.normal(size=4)
        rd = g.normal(size=(3, 4))
        _, dc = ops.dense_forward(xd, wd, bd)
        gxd, gwd, gbd = ops.dense_backward(rd, dc)
        for analytic, wrt in ((gxd, xd), (gwd, wd), (gbd, bd)):
            numeric = numerical_grad(lambda: (ops.dense_forward(xd, wd, bd)[0] * rd).sum(), wrt)
            assert rel_err(analytic, numeric) < 1e-4

        xm = g.normal(size=(3, 8))
        mask = ops.dropout_mask(xm.shape, 0.5, np.random.default_rng(100 + seed), xm.dtype)
        rm = g.normal(size=(3, 8))
        assert rel_err(rm * mask, numerical_grad(lambda: (xm * mask * rm).sum(), xm)) < 1e-4

        logits = g.normal(size=(4, 6)) * 2
        labels = g.integers(0, 6, size=4)
        _, _, xc = ops.softmax_xent_forward(logits, labels)
        grad = ops.softmax_xent_backward(xc)
        assert rel_err(grad, numerical_grad(lambda: ops.softmax_xent_forward(logits, labels)[0], logits)) < 1e-4

        checked += 1
    assert checked == 10
    _report(2, "conv/pool/dense/dropout/softmax-xent gradients match finite differences "
               "within 1e-4 on 10 instances each")


# ---------------------------------------------------------------------------
# 3. Uncertainty invariants
# ---------------------------------------------------------------------------

def test_criterion_3_uncertainty_invariants():
    # normalization of MC predictions
    net = epal.build_network(epal.small_architecture(0.5), seed=4)
    imgs = np.random.default_rng(0).random((6, 3, 32, 32))
    for d in mc_predict_batch(net, imgs, McConfig(passes=8, seed=1)):
        assert abs(d.probs.sum() - 1.0) <= 1e-6

    # dropout 0 equals the deterministic pass exactly
    net0 = epal.build_network(epal.small_architecture(0.0), seed=4)
    from epal.network import network_forward
    for img in imgs[:3]:
        dist = mc_predict(net0, img, McConfig(passes=16, seed=2))
        det = ops.softmax(network_forward(net0.params, net0.architecture, img[None]))[0]
        assert np.array_equal(dist.probs, det)

    # entropy of the uniform 10-class distribution
    assert abs(entropy(np.full(10, 0.1)) - math.log(10)) <= 1e-9

    # acquisition monotone in theta on 1000 random prediction vectors
    g = np.random.default_rng(42)
    probs = ops.softmax(g.normal(size=(1000, 10)) * g.uniform(0.1, 6.0, size=(1000, 1)))
    ents = np.array([entropy(p) for p in probs])
    prev = None
    for theta in np.sort(g.uniform(0.0, math.log(10), size=16)):
        picked = set(np.nonzero(ents > theta)[0])
        if prev is not None:
            assert picked.issubset(prev)
        prev = picked
    _report(3, "MC normalization, exact rate-0 equality, ln10 uniform entropy, "
               "theta-monotone acquisition on 1000 vectors")


# ---------------------------------------------------------------------------
# 4. Strategy-rule fidelity via provenance tagging (k = 4 episodes)
# ---------------------------------------------------------------------------

def test_criterion_4_strategy_rule_fidelity():
    def tagging_fine_tune(net, images, labels, config, tag=None):
        out = net.clone()
        out.metadata["provenance"] = f"ft({net.provenance},{tag})"
        return out

    g = np.random.default_rng(0)
    n = 5 * 4 + 4
    data = epal.Dataset(g.normal(size=(n, 2)), g.integers(0, 10, size=n))
    plan = epal.make_split_plan(n, 5, seed=1, n_test=4)   # 4 episodes
    net0 = epal.build_network(mlp_architecture(2, (), 10, dropout_rate=0.0), seed=0)
    for p in net0.params:
        p[...] = 0.0          # uniform predictions: everything is acquired
    net0.metadata["provenance"] = "N0"

    expected = {
        1: "ft(ft(ft(ft(ft(N0,A1),A2),A3),A4),A1+A2+A3+A4)",
        2: "ft(ft(ft(ft(N0,A1),A1+A2),A1+A2+A3),A1+A2+A3+A4)",
        3: "ft(ft(ft(ft(N0,A1),A2),A3),A4)",
        4: "ft(N0,A1+A2+A3+A4)",
        5: "ft(N0,A1+A2+A3+A4)",
    }
    for sid, want in expected.items():
        _, final = run_strategy(strategy(sid), plan, data, TrainConfig(),
                                McConfig(passes=1, seed=0), 0.8, seed=3,
                                initial_net=net0, fine_tune_fn=tagging_fine_tune)
        assert final.provenance == want, f"strategy {sid}: {final.provenance}"
    _report(4, "symbolic provenance after k=4 episodes matches the published "
               "formula expansion for strategies 1-5")


# ---------------------------------------------------------------------------
# 5. Desk-scale trend check (the slow one)
# ---------------------------------------------------------------------------

MASTERS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="module")
def desk_results():
    workers = min(2, os.cpu_count() or 1)
    if workers > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(workers, mp_context=ctx) as ex:
            per_seed = list(ex.map(_desk.run_desk_seed, MASTERS))
    else:
        per_seed = [_desk.run_desk_seed(m) for m in MASTERS]
    return dict(zip(MASTERS, per_seed))


def test_criterion_5a_accumulated_training_beats_recent_only(desk_results):
    final_acc = {
        sid: float(np.mean([desk_results[m][(sid, 0.8)][-1][1] for m in MASTERS]))
        for sid in (1, 2, 3)
    }
    assert final_acc[1] >= final_acc[3], final_acc
    assert final_acc[2] >= final_acc[3], final_acc
    _report("5a", f"mean final accuracy s1={final_acc[1]:.3f}, s2={final_acc[2]:.3f} "
                  f">= s3={final_acc[3]:.3f}")


def test_criterion_5b_initial_based_updates_acquire_steadily(desk_results):
    def mean_cv(sid):
        cvs = []
        for m in MASTERS:
            counts = np.array([a for a, _ in desk_results[m][(sid, 0.8)]], dtype=float)
            cvs.append(counts.std() / counts.mean() if counts.mean() else 0.0)
        return float(np.mean(cvs))

    cv2, cv4 = mean_cv(2), mean_cv(4)
    assert cv4 < cv2, (cv4, cv2)
    _report("5b", f"acquisition-count variation: strategy 4 CV {cv4:.3f} < strategy 2 CV {cv2:.3f}")


def test_criterion_5c_acquisitions_non_increasing_in_theta(desk_results):
    means = []
    for theta in _desk.THETAS:
        per_episode = [a for m in MASTERS for a, _ in desk_results[m][(1, theta)]]
        means.append(float(np.mean(per_episode)))
    assert means[0] >= means[1] >= means[2], means
    _report("5c", "mean acquisitions/episode non-increasing over theta "
                  + ", ".join(f"{t}:{v:.1f}" for t, v in zip(_desk.THETAS, means)))


# ---------------------------------------------------------------------------
# 6. End-to-end determinism of the desk config at any parallelism degree
# ---------------------------------------------------------------------------

def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_6_desk_config_byte_identical(tmp_path, monkeypatch):
    desk = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"
    base = desk.read_text()
    trees = {}
    for name, workers in (("a", 1), ("b", 2)):
        cfg_path = tmp_path / f"desk_{name}.cfg"
        text = "\n".join(
            f"workers = {workers}" if line.startswith("workers") else line
            for line in base.splitlines()
        )
        cfg_path.write_text(text + "\n")
        out = tmp_path / f"out_{name}"
        monkeypatch.setenv("EPAL_OUTPUT_DIR", str(out))
        assert cli_main(["run", str(cfg_path)]) == 0
        trees[name] = _tree_bytes(out)
    assert set(trees["a"]) == set(trees["b"])
    assert {k for k in trees["a"] if k.endswith(".csv")}
    assert {k for k in trees["a"] if k.endswith(".svg")}
    assert trees["a"] == trees["b"]
    _report(6, f"desk config produced {len(trees['a'])} byte-identical files at "
               "parallelism 1 and 2")


# ---------------------------------------------------------------------------
# 7. Episode-stream discipline (instrumented run)
# ---------------------------------------------------------------------------

def test_criterion_7_episode_stream_discipline():
    g = np.random.default_rng(1)
    n = 64
    data = epal.Dataset(g.normal(size=(n, 2)), g.integers(0, 2, size=n))
    plan = epal.make_split_plan(n, 4, seed=2, n_test=8)
    arch = mlp_architecture(2, (8,), 2, dropout_rate=0.3)
    cfg = TrainConfig(max_epochs=30, batch_size=8, seed=0, learning_rate=1e-2)
    net0 = epal.initial_network(plan, data, cfg, arch, seed=7)

    trace = epal.RunTrace()
    records, _ = run_strategy(strategy(1), plan, data, cfg, McConfig(passes=8, seed=0),
                              0.6, seed=7, initial_net=net0, trace=trace)

    acquired_total = sum(r.acquired_count for r in records)
    pool_total = sum(len(e) for e in plan.episodes)
    assert 0 < acquired_total < pool_total, "need a selective run for this check"

    scored = np.concatenate([trace.scored[t] for t in sorted(trace.scored)])
    assert len(scored) == len(np.unique(scored)), "an image was scored twice"

    acquired_set = set(np.concatenate(list(trace.acquired.values())).tolist())
    unacquired = set(scored.tolist()) - acquired_set
    allowed = set(plan.initial.tolist()) | acquired_set
    for tag, ids in trace.fine_tune_sets:
        got = set(ids.tolist())
        assert got <= allowed, f"{tag} trained on an unacquired image"
        assert not (got & unacquired), f"{tag} contains unacquired episode images"
    assert len(unacquired) == pool_total - acquired_total
    _report(7, f"{pool_total} images scored exactly once; {len(unacquired)} unacquired "
               "images never entered a fine-tune set")


# ---------------------------------------------------------------------------
# 8. Optional full-scale protocol (excluded from the default suite)
# ---------------------------------------------------------------------------

@pytest.mark.skipif("EPAL_CIFAR10_DIR" not in os.environ,
                    reason="full protocol takes many CPU-hours; set EPAL_CIFAR10_DIR to run")
def test_criterion_8_full_protocol_long_run():
    import dataclasses

    from epal.cli import _collect_results
    from epal.config import RunConfig, validate

    config = RunConfig(
        dataset="cifar10",
        cifar10_dir=os.environ["EPAL_CIFAR10_DIR"],
        strategies=(1, 2, 3, 4, 5, 6, 7),
        trials=10,
        theta=0.8,
        mc_passes=64,
        master_seed=20240501,
        architecture="paper",
        dropout_rate=0.5,
        precision="float32",
        learning_rate=1e-3,
        batch_size=64,
        max_epochs=100,
        early_stop_patience=5,
        workers=int(os.environ.get("EPAL_WORKERS", "2")),
    )
    assert validate(config) == []
    results = _collect_results(config, 0.8)

    mean_final = {
        sid: float(np.mean([results[(sid, t)][-1].final_test_accuracy for t in range(10)]))
        for sid in (1, 2, 3, 4, 5)
    }
    published = {1: 0.810, 2: 0.808, 3: 0.767, 4: 0.793, 5: 0.787}
    for sid, want in published.items():
        assert abs(mean_final[sid] - want) <= 0.03, (sid, mean_final[sid], want)
    # ordering: 1 ≈ 2 > 5 ≈ 4 > 3
    assert min(mean_final[1], mean_final[2]) > max(mean_final[4], mean_final[5])
    assert min(mean_final[4], mean_final[5]) > mean_final[3]
    # strategy 2 acquires the least
    mean_accum = {
        sid: float(np.mean([results[(sid, t)][-1].accumulated_count for t in range(10)]))
        for sid in (1, 2, 3, 4, 5)
    }
    assert mean_accum[2] == min(mean_accum.values())
    _report(8, "full protocol matches published accuracies within ±0.03 with the "
               "expected strategy ordering")
