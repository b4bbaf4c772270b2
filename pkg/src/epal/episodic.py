"""The strategy engine: episode loop, update rules, final training, evaluation.

Starting from a network trained on an initial labeled split, the engine
walks a sequence of episode splits. Each episode's images are scored once
by the acquisition function against the current network; the selected ones
are labeled by the oracle and folded into the network according to the
strategy's update rule. After every episode the engine also evaluates the
network that *would* result from stopping there (applying the strategy's
final-training rule to a throwaway copy), so a single run yields the whole
accuracy-versus-episode curve.

Update rules differ along two axes: whether training continues from the
previous network or restarts from the initial one, and whether it uses only
the newest acquisitions or everything acquired so far. Final training
either keeps the last network or fine-tunes on the full accumulated
acquisition set, starting from the same base network the update rule uses.
"""

from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Oracle, SplitPlan
from .network import Architecture, NetworkSnapshot, TrainConfig, build_network, evaluate_accuracy, fine_tune
from .rng import RngStream
from .uncertainty import McConfig, mc_predict_batch

# substream ids for the phases of a run
_SUB_INIT_BUILD = 0
_SUB_INIT_TRAIN = 1
_SUB_SCORE = 2
_SUB_UPDATE = 3
_SUB_FINAL = 4
_SUB_BASELINE = 5


class UpdateRule(enum.Enum):
    """How the network is retrained after an episode's acquisitions."""

    PREV_ON_RECENT = "prev_on_recent"   # continue chain, newest set only
    PREV_ON_ACCUM = "prev_on_accum"     # continue chain, all acquired so far
    INIT_ON_RECENT = "init_on_recent"   # restart from initial, newest set only
    INIT_ON_ACCUM = "init_on_accum"     # restart from initial, all acquired so far

    @property
    def from_initial(self) -> bool:
        return self in (UpdateRule.INIT_ON_RECENT, UpdateRule.INIT_ON_ACCUM)

    @property
    def on_accumulated(self) -> bool:
        return self in (UpdateRule.PREV_ON_ACCUM, UpdateRule.INIT_ON_ACCUM)


class FinalRule(enum.Enum):
    """How the final network is produced when the run stops."""

    LAST_NETWORK = "last_network"
    FINE_TUNE_ACCUM = "fine_tune_accum"  # base network + full acquisition set


@dataclass(frozen=True)
class StrategySpec:
    """One numbered strategy: an update/final rule pair, or a baseline."""

    id: int
    update_rule: UpdateRule | None = None
    final_rule: FinalRule | None = None
    fraction: float = 1.0   # training-set fraction for the subsample baseline

    @property
    def is_baseline(self) -> bool:
        return self.update_rule is None


_STRATEGY_RULES: dict[int, tuple[UpdateRule, FinalRule]] = {
    1: (UpdateRule.PREV_ON_RECENT, FinalRule.FINE_TUNE_ACCUM),
    2: (UpdateRule.PREV_ON_ACCUM, FinalRule.LAST_NETWORK),
    3: (UpdateRule.PREV_ON_RECENT, FinalRule.LAST_NETWORK),
    4: (UpdateRule.INIT_ON_RECENT, FinalRule.FINE_TUNE_ACCUM),
    5: (UpdateRule.INIT_ON_ACCUM, FinalRule.FINE_TUNE_ACCUM),
}


def strategy(id: int, fraction: float = 0.74) -> StrategySpec:
    """The fixed numbered strategies: 1-5 are rule pairs, 6 trains on the
    full set, 7 on a random fraction (default 74%) of it."""
    if id in _STRATEGY_RULES:
        update, final = _STRATEGY_RULES[id]
        return StrategySpec(id, update, final)
    if id == 6:
        return StrategySpec(6, fraction=1.0)
    if id == 7:
        if not 0.0 < fraction <= 1.0:
            raise ValueError("baseline fraction must be in (0, 1]")
        return StrategySpec(7, fraction=fraction)
    raise ValueError(f"unknown strategy id {id}")


@dataclass(frozen=True)
class EpisodeRecord:
    """Measurements taken after one episode (or one baseline run)."""

    episode: int
    acquired_count: int
    accumulated_count: int
    used_fraction: float
    final_test_accuracy: float
    wall_time: float = field(compare=False, default=0.0)


def used_fraction(initial_size: int, accumulated_count: int, full_train_size: int) -> float:
    """Fraction of the full training set consumed: the initial split plus
    everything acquired, over the whole pool."""
    if min(initial_size, accumulated_count) < 0 or full_train_size <= 0:
        raise ValueError("counts must be >= 0 and pool size > 0")
    return (initial_size + accumulated_count) / full_train_size


class RunTrace:
    """Instrumentation hook: records which pool indices were scored and which
    entered each fine-tune set."""

    def __init__(self):
        self.scored: dict[int, np.ndarray] = {}          # episode -> global ids
        self.acquired: dict[int, np.ndarray] = {}        # episode -> global ids
        self.fine_tune_sets: list[tuple[str, np.ndarray]] = []

    def record_scored(self, episode: int, indices: np.ndarray) -> None:
        self.scored[episode] = np.asarray(indices).copy()

    def record_acquired(self, episode: int, indices: np.ndarray) -> None:
        self.acquired[episode] = np.asarray(indices).copy()

    def record_fine_tune(self, tag: str, indices: np.ndarray) -> None:
        self.fine_tune_sets.append((tag, np.asarray(indices).copy()))


class StrategyRunError(RuntimeError):
    """A failure inside a strategy run, annotated with its episode."""

    def __init__(self, episode: int, message: str):
        super().__init__(message)
        self.episode = episode


def _resolve_test(plan: SplitPlan, data: Dataset, test_data: Dataset | None) -> Dataset:
    if test_data is not None:
        return test_data
    if len(plan.test):
        return data.subset(plan.test)
    raise ValueError("no test set: plan.test is empty and test_data was not given")


def initial_network(
    plan: SplitPlan,
    data: Dataset,
    train_cfg: TrainConfig,
    architecture: Architecture,
    seed: int,
    dtype=np.float64,
    fine_tune_fn=fine_tune,
    trace: RunTrace | None = None,
) -> NetworkSnapshot:
    """Build and train the shared starting network on the initial split.

    Derived only from ``seed`` (never from a strategy), so every strategy of
    a trial starts from the identical network.
    """
    stream = RngStream(seed)
    raw = build_network(architecture, stream.child(_SUB_INIT_BUILD).derive_seed(), dtype)
    cfg = dataclasses.replace(train_cfg, seed=stream.child(_SUB_INIT_TRAIN).derive_seed())
    if trace is not None:
        trace.record_fine_tune("D0", plan.initial)
    net = fine_tune_fn(raw, data.images[plan.initial], data.labels[plan.initial], cfg, tag="D0")
    net.metadata["episode"] = 0
    return net


def _accum_tag(t: int) -> str:
    return "+".join(f"A{i}" for i in range(1, t + 1))


def run_strategy(
    spec: StrategySpec,
    plan: SplitPlan,
    data: Dataset,
    train_cfg: TrainConfig,
    mc_cfg: McConfig,
    theta: float,
    seed: int,
    *,
    architecture: Architecture | None = None,
    initial_net: NetworkSnapshot | None = None,
    test_data: Dataset | None = None,
    dtype=np.float64,
    fine_tune_fn=fine_tune,
    trace: RunTrace | None = None,
) -> tuple[list[EpisodeRecord], NetworkSnapshot]:
    """Run one acquisition strategy over the plan's episodes.

    Returns the per-episode records plus the true final network (the final
    rule applied after the last episode). Per-episode evaluation always
    fine-tunes a throwaway copy, so the episodic chain itself is unaffected
    by the measurements.

    An episode whose acquisition set comes back empty skips its fine-tune
    and carries the network forward unchanged.
    """
    if spec.is_baseline:
        raise ValueError(f"strategy {spec.id} is a baseline; use run_baseline")
    if plan.n_episodes == 0:
        raise ValueError("plan has no episodes")
    test = _resolve_test(plan, data, test_data)

    if initial_net is None:
        if architecture is None:
            raise ValueError("need architecture or initial_net")
        current = initial_network(plan, data, train_cfg, architecture, seed, dtype,
                                  fine_tune_fn, trace)
    else:
        current = initial_net
    if data.images.dtype != current.dtype:
        data = data.astype(current.dtype)
        test = test.astype(current.dtype)
    initial = current

    stream = RngStream(seed)
    oracle = Oracle(data.labels)
    # the full training pool: everything that is not held-out test data.
    # Independent of how many episodes the plan retains, so records do not
    # change when a run is stopped early.
    pool_size = len(data) - len(plan.test)
    init_size = len(plan.initial)

    acc_indices = np.zeros(0, dtype=np.int64)
    acc_labels = np.zeros(0, dtype=np.int64)
    records: list[EpisodeRecord] = []
    final = current

    for t, episode_ids in enumerate(plan.episodes, start=1):
        t0 = time.perf_counter()
        try:
            # score the episode once, against the current network
            streams = [stream.child(_SUB_SCORE, t, i) for i in range(len(episode_ids))]
            dists = mc_predict_batch(current, data.images[episode_ids], mc_cfg, streams)
            picked = [i for i, d in enumerate(dists) if d.entropy_nats > theta]
            if trace is not None:
                trace.record_scored(t, episode_ids)

            new_ids = np.asarray(episode_ids)[picked]
            if trace is not None:
                trace.record_acquired(t, new_ids)
            new_labels = oracle.lookup(new_ids)
            acc_indices = np.concatenate([acc_indices, new_ids])
            acc_labels = np.concatenate([acc_labels, new_labels])

            # network update
            if len(new_ids):
                base = initial if spec.update_rule.from_initial else current
                if spec.update_rule.on_accumulated:
                    ft_ids, ft_labels, tag = acc_indices, acc_labels, _accum_tag(t)
                else:
                    ft_ids, ft_labels, tag = new_ids, new_labels, f"A{t}"
                cfg = dataclasses.replace(train_cfg, seed=stream.child(_SUB_UPDATE, t).derive_seed())
                if trace is not None:
                    trace.record_fine_tune(f"update:{tag}", ft_ids)
                current = fine_tune_fn(base, data.images[ft_ids], ft_labels, cfg, tag=tag)
                current.metadata["episode"] = t

            # the network that would result from stopping now
            if spec.final_rule is FinalRule.LAST_NETWORK:
                final = current
            else:
                base = initial if spec.update_rule.from_initial else current
                if len(acc_indices):
                    cfg = dataclasses.replace(train_cfg, seed=stream.child(_SUB_FINAL, t).derive_seed())
                    tag = _accum_tag(t)
                    if trace is not None:
                        trace.record_fine_tune(f"final:{tag}", acc_indices)
                    final = fine_tune_fn(base, data.images[acc_indices], acc_labels, cfg, tag=tag)
                    final.metadata["episode"] = t
                else:
                    final = base

            accuracy = evaluate_accuracy(final, test.images, test.labels)
        except Exception as e:
            raise StrategyRunError(t, f"episode {t}: {e}") from e

        records.append(EpisodeRecord(
            episode=t,
            acquired_count=len(new_ids),
            accumulated_count=len(acc_indices),
            used_fraction=used_fraction(init_size, len(acc_indices), pool_size),
            final_test_accuracy=accuracy,
            wall_time=time.perf_counter() - t0,
        ))

    return records, final


def run_baseline(
    spec: StrategySpec,
    data: Dataset,
    train_cfg: TrainConfig,
    seed: int,
    *,
    architecture: Architecture | None = None,
    initial_net: NetworkSnapshot | None = None,
    test_data: Dataset,
    dtype=np.float64,
    fine_tune_fn=fine_tune,
) -> tuple[EpisodeRecord, NetworkSnapshot]:
    """Regular (non-episodic) training on the full pool or a random fraction.

    By default the network starts from a fresh seeded initialization; pass
    ``initial_net`` to start from an existing snapshot instead.
    """
    if not spec.is_baseline:
        raise ValueError(f"strategy {spec.id} is not a baseline; use run_strategy")
    t0 = time.perf_counter()
    stream = RngStream(seed)
    n = len(data)

    if spec.fraction < 1.0:
        k = int(round(spec.fraction * n))
        gen = stream.child(_SUB_BASELINE).generator()
        chosen = np.sort(gen.choice(n, size=k, replace=False))
        tag = f"sample{k}"
    else:
        chosen = np.arange(n)
        tag = "full"

    if initial_net is None:
        if architecture is None:
            raise ValueError("need architecture or initial_net")
        net0 = build_network(architecture, stream.child(_SUB_INIT_BUILD).derive_seed(), dtype)
    else:
        net0 = initial_net
    if data.images.dtype != net0.dtype:
        data = data.astype(net0.dtype)
        test_data = test_data.astype(net0.dtype)

    cfg = dataclasses.replace(train_cfg, seed=stream.child(_SUB_INIT_TRAIN).derive_seed())
    net = fine_tune_fn(net0, data.images[chosen], data.labels[chosen], cfg, tag=tag)
    accuracy = evaluate_accuracy(net, test_data.images, test_data.labels)
    record = EpisodeRecord(
        episode=0,
        acquired_count=len(chosen),
        accumulated_count=len(chosen),
        used_fraction=len(chosen) / n,
        final_test_accuracy=accuracy,
        wall_time=time.perf_counter() - t0,
    )
    return record, net
