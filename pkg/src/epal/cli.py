"""Experiment runner CLI: ``epal run|validate|sweep <config>``.

Executes every configured (strategy, trial) pair with seeds derived from
the master seed, then writes per-trial CSV rows, per-strategy aggregates,
and SVG charts into the output directory. Outputs are byte-identical for
identical configs and seeds, at any worker count: jobs are pure functions
of (config, theta, trial) and results are ordered before emission.

Exit codes: 0 success, 1 runtime failure (with the failing strategy, trial
and episode), 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import multiprocessing
import os
import sys
import time

import numpy as np

from .config import RunConfig, load_config, validate
from .data import Dataset, load_cifar10_dir, make_split_plan, make_synthetic
from .episodic import EpisodeRecord, StrategyRunError, initial_network, run_baseline, run_strategy, strategy
from .network import TrainConfig
from .report import (ResultRow, TrialReport, aggregate, efficiency, emit_csv,
                     emit_svg_chart, rows_from_records)
from .rng import RngStream
from .uncertainty import McConfig

OUTPUT_DIR_ENV = "EPAL_OUTPUT_DIR"

# master-seed channels
_CH_DATASET = 0
_CH_SPLIT = 1
_CH_TRIAL = 2

_dataset_cache: dict = {}
_initial_cache: dict = {}


def _train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        early_stop_patience=config.early_stop_patience,
        validation_fraction=config.validation_fraction,
        seed=0,  # replaced per fine-tune call by the engine
    )


def _experiment_data(config: RunConfig):
    """Dataset, split plan, and resolved test set for a config (cached)."""
    if config in _dataset_cache:
        return _dataset_cache[config]
    master = RngStream(config.master_seed)
    if config.dataset == "synthetic":
        data = make_synthetic(
            classes=config.synthetic_classes,
            per_class=config.synthetic_per_class,
            seed=master.child(_CH_DATASET).derive_seed(),
            noise=config.synthetic_noise,
            dtype=config.dtype(),
        )
        plan = make_split_plan(
            len(data), config.n_splits,
            seed=master.child(_CH_SPLIT).derive_seed(),
            n_test=config.synthetic_test_count,
        )
        test = data.subset(plan.test)
    else:
        data, test = load_cifar10_dir(config.cifar10_dir, dtype=config.dtype())
        plan = make_split_plan(len(data), config.n_splits,
                               seed=master.child(_CH_SPLIT).derive_seed())
    _dataset_cache[config] = (data, plan, test)
    return data, plan, test


def _trial_seed(config: RunConfig, trial: int) -> int:
    return RngStream(config.master_seed).child(_CH_TRIAL, trial).derive_seed()


def _trial_initial_net(config: RunConfig, trial: int):
    """The initial network shared by all episodic strategies of a trial."""
    key = (config, trial)
    if key not in _initial_cache:
        data, plan, _ = _experiment_data(config)
        _initial_cache[key] = initial_network(
            plan, data, _train_config(config), config.build_architecture(),
            seed=_trial_seed(config, trial), dtype=config.dtype(),
        )
    return _initial_cache[key]


def _run_trial_job(config: RunConfig, theta: float, trial: int):
    """Run every configured strategy for one trial; returns (sid, records) pairs."""
    data, plan, test = _experiment_data(config)
    train_cfg = _train_config(config)
    mc_cfg = McConfig(passes=config.mc_passes, seed=0)
    seed = _trial_seed(config, trial)
    out: list[tuple[int, list[EpisodeRecord]]] = []
    for sid in sorted(config.strategies):
        try:
            if sid <= 5:
                records, _ = run_strategy(
                    strategy(sid), plan, data, train_cfg, mc_cfg, theta, seed,
                    initial_net=_trial_initial_net(config, trial), test_data=test,
                )
            else:
                spec = strategy(sid, fraction=config.baseline_fraction)
                record, _ = run_baseline(
                    spec, data, train_cfg, seed,
                    architecture=config.build_architecture(),
                    test_data=test, dtype=config.dtype(),
                )
                records = [record]
        except StrategyRunError as e:
            raise RuntimeError(f"strategy {sid}, trial {trial}, {e}") from e
        except Exception as e:
            raise RuntimeError(f"strategy {sid}, trial {trial}: {e}") from e
        out.append((sid, records))
    return trial, out


def _collect_results(config: RunConfig, theta: float, log=print):
    """Execute all trials (possibly in parallel) and key results by (sid, trial)."""
    results: dict[tuple[int, int], list[EpisodeRecord]] = {}
    trials = list(range(config.trials))
    if config.workers == 1:
        completed = (_run_trial_job(config, theta, t) for t in trials)
    else:
        ctx = multiprocessing.get_context("spawn")
        pool = concurrent.futures.ProcessPoolExecutor(
            max_workers=min(config.workers, len(trials)), mp_context=ctx)
        completed = pool.map(_run_trial_job, [config] * len(trials),
                             [theta] * len(trials), trials)
    t0 = time.perf_counter()
    for trial, pairs in completed:
        for sid, records in pairs:
            results[(sid, trial)] = records
        log(f"[epal] theta={theta:g} trial {trial} done ({time.perf_counter() - t0:.1f}s)")
    if config.workers > 1:
        pool.shutdown()
    return results


def _xi_baseline_by_trial(config: RunConfig, results) -> dict[int, float | None] | None:
    """Full-training efficiency per trial: from config if set, else strategy 6.

    A trial whose baseline scored zero accuracy has no usable reference;
    its value is None and relative columns stay empty for that trial.
    """
    if config.xi_baseline > 0:
        return {t: config.xi_baseline for t in range(config.trials)}
    if 6 in config.strategies:
        out = {}
        for t in range(config.trials):
            xi = efficiency(results[(6, t)][0].final_test_accuracy, results[(6, t)][0].used_fraction)
            out[t] = xi if xi > 0 else None
        return out
    return None


def _write_outputs(config: RunConfig, results, out_dir: str) -> dict[int, TrialReport]:
    os.makedirs(os.path.join(out_dir, "charts"), exist_ok=True)
    xi_f = _xi_baseline_by_trial(config, results)

    rows: list[ResultRow] = []
    for sid in sorted(config.strategies):
        for trial in range(config.trials):
            rows.extend(rows_from_records(
                sid, trial, results[(sid, trial)],
                xi_baseline=None if xi_f is None else xi_f[trial],
            ))
    emit_csv(rows, os.path.join(out_dir, "trials.csv"))

    agg_xi_f = None
    if xi_f is not None:
        usable = [v for v in xi_f.values() if v is not None]
        agg_xi_f = float(np.mean(usable)) if usable else None
    reports: dict[int, TrialReport] = {}
    agg_lines = [
        "strategy,episode,n_trials,mean_accuracy,std_accuracy,mean_acquired,"
        "std_acquired,mean_accumulated,mean_used_fraction,mean_xi,relative_xi"
    ]
    for sid in sorted(config.strategies):
        report = aggregate(sid, {t: results[(sid, t)] for t in range(config.trials)},
                           xi_baseline=agg_xi_f)
        reports[sid] = report
        for i, ep in enumerate(report.episodes):
            xi = efficiency(report.mean_accuracy[i], report.mean_used_fraction[i])
            rel = "" if agg_xi_f is None else repr(xi / agg_xi_f)
            agg_lines.append(
                f"{sid},{ep},{report.n_trials},{report.mean_accuracy[i]!r},"
                f"{report.std_accuracy[i]!r},{report.mean_acquired[i]!r},"
                f"{report.std_acquired[i]!r},{report.mean_accumulated[i]!r},"
                f"{report.mean_used_fraction[i]!r},{xi!r},{rel}"
            )
    with open(os.path.join(out_dir, "aggregate.csv"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(agg_lines) + "\n")

    episodic_reports = [reports[s] for s in sorted(config.strategies) if s <= 5]
    if episodic_reports:
        charts = os.path.join(out_dir, "charts")
        for kind in ("accuracy_vs_episode", "accuracy_vs_acquired", "acquisitions_vs_episode"):
            emit_svg_chart(episodic_reports, kind, os.path.join(charts, f"{kind}.svg"))
    return reports


def run_experiment(config: RunConfig, theta: float, out_dir: str, log=print):
    results = _collect_results(config, theta, log)
    return _write_outputs(config, results, out_dir)


def _theta_dir_name(theta: float) -> str:
    return f"theta_{float(theta)!r}"


def cmd_run(config: RunConfig, out_dir: str, thetas: tuple[float, ...] | None = None, log=print) -> int:
    """Scalar-theta run, or a sweep when a theta list is configured/supplied."""
    sweep = thetas if thetas is not None else config.theta_sweep
    try:
        if not sweep:
            run_experiment(config, config.theta, out_dir, log)
        else:
            sweep_reports = []
            for theta in sweep:
                reports = run_experiment(config, theta, os.path.join(out_dir, _theta_dir_name(theta)), log)
                sweep_reports.append((theta, reports))
            lead = min(s for s in config.strategies if s <= 5) if any(s <= 5 for s in config.strategies) else None
            if lead is not None:
                os.makedirs(os.path.join(out_dir, "charts"), exist_ok=True)
                emit_svg_chart(
                    [reports[lead] for _, reports in sweep_reports],
                    "theta_sweep",
                    os.path.join(out_dir, "charts", "theta_sweep.svg"),
                    labels=[f"theta={theta:g}" for theta, _ in sweep_reports],
                )
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="epal",
        description="Episode-based active learning experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute the experiment described by a config file"),
        ("validate", "check a config file and report every problem"),
        ("sweep", "run the experiment once per acquisition threshold"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a key = value config file")
        if name == "sweep":
            p.add_argument("--theta", required=True,
                           help="comma-separated threshold list, e.g. 0.2,0.8,1.4")
    args = parser.parse_args(argv)

    config, diags = load_config(args.config)
    if diags:
        for d in diags:
            print(f"invalid config: {d}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print("ok")
        return 0

    out_dir = os.environ.get(OUTPUT_DIR_ENV) or config.output_dir
    thetas = None
    if args.command == "sweep":
        try:
            thetas = tuple(float(v) for v in args.theta.split(",") if v.strip())
        except ValueError:
            print(f"invalid config: --theta: cannot parse {args.theta!r}", file=sys.stderr)
            return 2
        if not thetas or any(t < 0 for t in thetas):
            print("invalid config: --theta: need a non-empty list of values >= 0", file=sys.stderr)
            return 2
    return cmd_run(config, out_dir, thetas)


if __name__ == "__main__":
    sys.exit(main())
