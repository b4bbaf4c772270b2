"""Episode-based active learning with MC-dropout CNN classifiers, in numpy."""

from .data import (Dataset, LabeledImage, Oracle, SplitPlan, load_cifar10,
                   load_cifar10_dir, make_split_plan, make_synthetic, save_cifar10)
from .episodic import (EpisodeRecord, FinalRule, RunTrace, StrategySpec,
                       UpdateRule, initial_network, run_baseline, run_strategy,
                       strategy, used_fraction)
from .network import (Architecture, Conv, Dense, Flatten, NetworkSnapshot, Pool,
                      TrainConfig, adam_step, build_network, build_paper_network,
                      evaluate_accuracy, fine_tune, mlp_architecture,
                      paper_architecture, small_architecture)
from .ops import conv2d, maxpool2, softmax
from .report import (EfficiencyScore, ResultRow, TrialReport, aggregate,
                     efficiency, efficiency_score, emit_csv, emit_svg_chart,
                     parse_csv, rows_from_records)
from .rng import RngStream
from .uncertainty import (McConfig, PredictiveDistribution, acquire, entropy,
                          mc_predict, mc_predict_batch, predictive_from_passes)

__all__ = [name for name in dir() if not name.startswith("_")]
