"""Predictive distributions via Monte-Carlo dropout and entropy-threshold acquisition.

Keeping dropout active at inference time and averaging the softmax outputs
of several stochastic passes approximates a Bayesian predictive
distribution. An input's informativeness is then measured by the entropy of
that averaged distribution, and inputs whose entropy exceeds a threshold
are selected for labeling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .network import NetworkSnapshot, PerSampleMasks, network_forward
from .rng import RngStream


@dataclass(frozen=True)
class McConfig:
    """Number of stochastic forward passes and the seed for their masks."""

    passes: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.passes < 1:
            raise ValueError("passes must be >= 1")


@dataclass(frozen=True)
class PredictiveDistribution:
    probs: np.ndarray       # length-K probability vector
    entropy_nats: float

    def __post_init__(self):
        s = float(self.probs.sum())
        if abs(s - 1.0) > 1e-6 or (self.probs < -1e-12).any():
            raise ValueError(f"probs is not a distribution (sum={s})")


def entropy(probs: np.ndarray, base: float | None = None) -> float:
    """Shannon entropy of a probability vector, in nats unless ``base`` given.

    Zero probabilities contribute zero. Inputs whose mass deviates from 1
    by more than 1e-6 are rejected.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"expected a probability vector, got shape {p.shape}")
    s = float(p.sum())
    if abs(s - 1.0) > 1e-6 or (p < -1e-12).any():
        raise ValueError(f"not a probability vector (sum={s})")
    nz = p[p > 0.0]
    h = float(-(nz * np.log(nz)).sum())
    if base is not None:
        h /= float(np.log(base))
    return max(h, 0.0)


def predictive_from_passes(pass_probs: np.ndarray) -> PredictiveDistribution:
    """Average per-pass class distributions and attach the entropy of the mean."""
    pass_probs = np.asarray(pass_probs, dtype=np.float64)
    if pass_probs.ndim != 2 or pass_probs.shape[0] < 1:
        raise ValueError(f"expected (T, K) pass probabilities, got {pass_probs.shape}")
    mean = pass_probs.mean(axis=0)
    return PredictiveDistribution(mean, entropy(mean))


def mc_predict(
    net: NetworkSnapshot,
    image: np.ndarray,
    cfg: McConfig,
    stream: RngStream | None = None,
) -> PredictiveDistribution:
    """Predictive distribution of one image from ``cfg.passes`` dropout passes.

    With dropout rate 0 the result equals the deterministic single pass
    exactly (no randomness is consumed).
    """
    return mc_predict_batch(net, image[None], cfg, streams=[stream] if stream else None)[0]


def mc_predict_batch(
    net: NetworkSnapshot,
    images: np.ndarray,
    cfg: McConfig,
    streams: list[RngStream] | None = None,
    chunk_rows: int = 512,
) -> list[PredictiveDistribution]:
    """mc_predict for many images, one independent mask substream per image.

    Results are identical whether images are scored together, in chunks, or
    one at a time, because image i's masks come only from ``streams[i]``.
    """
    n = len(images)
    if streams is None:
        base = RngStream(cfg.seed)
        streams = [base.child(i) for i in range(n)]
    if len(streams) != n:
        raise ValueError(f"{n} images but {len(streams)} streams")

    rate = net.architecture.dropout_rate
    if rate == 0.0:
        # no stochasticity: one deterministic pass, independent of cfg.passes
        dists = []
        for start in range(0, n, chunk_rows):
            logits = network_forward(net.params, net.architecture, images[start : start + chunk_rows])
            probs = ops.softmax(logits)
            dists.extend(PredictiveDistribution(row, entropy(row)) for row in probs)
        return dists

    t = cfg.passes
    per_chunk = max(1, chunk_rows // t)
    dists: list[PredictiveDistribution] = []
    for start in range(0, n, per_chunk):
        chunk = images[start : start + per_chunk]
        x = np.repeat(chunk, t, axis=0)            # (n_chunk*T, ...) pass copies
        masks = PerSampleMasks(rate, streams[start : start + per_chunk], t)
        logits = network_forward(net.params, net.architecture, x, masks)
        probs = ops.softmax(logits).reshape(len(chunk), t, -1)
        dists.extend(predictive_from_passes(rows) for rows in probs)
    return dists


def acquire(
    images: np.ndarray,
    net: NetworkSnapshot,
    cfg: McConfig,
    theta: float,
    streams: list[RngStream] | None = None,
) -> list[int]:
    """Indices of the images whose predictive entropy strictly exceeds theta.

    Order follows the input order. Entropy exactly equal to the threshold
    does not acquire.
    """
    if len(images) == 0:
        raise ValueError("empty episode")
    dists = mc_predict_batch(net, images, cfg, streams)
    return [i for i, d in enumerate(dists) if d.entropy_nats > theta]
