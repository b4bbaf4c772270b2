"""CNN classifier: architecture description, snapshots, Adam training, evaluation.

A network is a `NetworkSnapshot`: an immutable-by-convention pairing of an
`Architecture` with a flat list of parameter arrays plus provenance
metadata. Training (`fine_tune`) always clones first and returns a new
snapshot, so callers can keep chains of network states around cheaply and
safely.

Dropout is the only stochastic element of a forward pass. It is injected
through a mask source object so the same forward code serves training
(fresh masks per batch), deterministic evaluation (no masks), and
Monte-Carlo inference (per-sample mask substreams, see `epal.uncertainty`).
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .rng import RngStream

# substream ids used inside fine_tune
_SUB_VALSPLIT = 0
_SUB_SHUFFLE = 1
_SUB_DROPOUT = 2


# ---------------------------------------------------------------------------
# Architecture
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    """3x3 same-padding conv block; optionally followed by relu and dropout."""
    in_channels: int
    out_channels: int
    relu: bool = True
    dropout: bool = True


@dataclass(frozen=True)
class Pool:
    """Non-overlapping 2x2 max pool."""


@dataclass(frozen=True)
class Flatten:
    """Collapse (C, H, W) activations to a feature vector."""


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    relu: bool = True
    dropout: bool = True


Layer = Conv | Pool | Flatten | Dense


@dataclass(frozen=True)
class Architecture:
    """Ordered layer list plus the single dropout rate shared by all sites."""

    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]
    dropout_rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        self.output_features()  # validates layer shape chaining

    def output_features(self) -> int:
        """Number of classes produced; raises if the layer shapes do not chain."""
        shape = tuple(self.input_shape)
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if len(shape) != 3 or shape[0] != layer.in_channels:
                    raise ValueError(f"layer {i}: conv expects ({layer.in_channels},H,W), got {shape}")
                shape = (layer.out_channels, shape[1], shape[2])
            elif isinstance(layer, Pool):
                if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                    raise ValueError(f"layer {i}: pool needs even (C,H,W), got {shape}")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if len(shape) != 1 or shape[0] != layer.in_features:
                    raise ValueError(f"layer {i}: dense expects ({layer.in_features},), got {shape}")
                shape = (layer.out_features,)
            else:
                raise ValueError(f"layer {i}: unknown layer {layer!r}")
        if len(shape) != 1:
            raise ValueError("architecture must end in a dense layer")
        return shape[0]

    def to_descriptor(self) -> str:
        parts = [
            "epal-arch-v1",
            "in=" + "x".join(str(d) for d in self.input_shape),
            "drop=" + repr(float(self.dropout_rate)),
        ]
        for layer in self.layers:
            if isinstance(layer, Conv):
                flags = ("r" if layer.relu else "-") + ("d" if layer.dropout else "-")
                parts.append(f"conv({layer.in_channels},{layer.out_channels},{flags})")
            elif isinstance(layer, Pool):
                parts.append("pool")
            elif isinstance(layer, Flatten):
                parts.append("flatten")
            else:
                flags = ("r" if layer.relu else "-") + ("d" if layer.dropout else "-")
                parts.append(f"dense({layer.in_features},{layer.out_features},{flags})")
        return "|".join(parts)

    @staticmethod
    def from_descriptor(descriptor: str) -> "Architecture":
        parts = descriptor.split("|")
        if not parts or parts[0] != "epal-arch-v1":
            raise ValueError(f"unknown architecture descriptor: {descriptor[:40]!r}")
        input_shape = tuple(int(d) for d in parts[1].removeprefix("in=").split("x"))
        rate = float(parts[2].removeprefix("drop="))
        layers: list[Layer] = []
        for token in parts[3:]:
            if token == "pool":
                layers.append(Pool())
            elif token == "flatten":
                layers.append(Flatten())
            elif token.startswith(("conv(", "dense(")):
                kind, rest = token.split("(", 1)
                a, b, flags = rest.rstrip(")").split(",")
                cls = Conv if kind == "conv" else Dense
                layers.append(cls(int(a), int(b), relu=flags[0] == "r", dropout=flags[1] == "d"))
            else:
                raise ValueError(f"bad descriptor token {token!r}")
        return Architecture(input_shape, tuple(layers), rate)


def paper_architecture(dropout_rate: float = 0.5) -> Architecture:
    """The reference classifier for 3x32x32 inputs: four 3x3 conv layers
    (2x32 then 2x64 channels) with pooling after the second and fourth,
    a 512-unit dense layer, and a 10-way output, dropout at every
    parameterized layer except the output."""
    return Architecture(
        input_shape=(3, 32, 32),
        layers=(
            Conv(3, 32), Conv(32, 32), Pool(),
            Conv(32, 64), Conv(64, 64), Pool(),
            Flatten(),
            Dense(4096, 512),
            Dense(512, 10, relu=False, dropout=False),
        ),
        dropout_rate=dropout_rate,
    )


def small_architecture(dropout_rate: float = 0.5) -> Architecture:
    """A reduced two-conv net for the same 3x32x32 inputs; fast enough for
    desk-scale experiments while keeping the same pipeline."""
    return Architecture(
        input_shape=(3, 32, 32),
        layers=(
            Conv(3, 8), Pool(),
            Conv(8, 16), Pool(),
            Flatten(),
            Dense(1024, 64),
            Dense(64, 10, relu=False, dropout=False),
        ),
        dropout_rate=dropout_rate,
    )


def mlp_architecture(
    in_features: int,
    hidden: tuple[int, ...],
    n_classes: int,
    dropout_rate: float = 0.0,
) -> Architecture:
    """Dense-only debug network for low-dimensional toy problems."""
    layers: list[Layer] = []
    prev = in_features
    for width in hidden:
        layers.append(Dense(prev, width))
        prev = width
    layers.append(Dense(prev, n_classes, relu=False, dropout=False))
    return Architecture((in_features,), tuple(layers), dropout_rate)


# ---------------------------------------------------------------------------
# Snapshot
# ---------------------------------------------------------------------------

_MAGIC = b"EPALNET1"
_DTYPE_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


@dataclass
class NetworkSnapshot:
    """A fully materialized classifier state, cloneable and serializable."""

    architecture: Architecture
    params: list[np.ndarray]
    metadata: dict = field(default_factory=dict)

    @property
    def dtype(self) -> np.dtype:
        return self.params[0].dtype

    @property
    def provenance(self) -> str:
        return self.metadata.get("provenance", "?")

    def clone(self) -> "NetworkSnapshot":
        return NetworkSnapshot(
            self.architecture,
            [p.copy() for p in self.params],
            json.loads(json.dumps(self.metadata)),
        )

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_MAGIC)
        desc = self.architecture.to_descriptor().encode()
        meta = json.dumps(self.metadata, sort_keys=True).encode()
        buf.write(struct.pack("<I", len(desc)))
        buf.write(desc)
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
        buf.write(struct.pack("<I", len(self.params)))
        for p in self.params:
            code = _DTYPE_CODES[p.dtype]
            buf.write(struct.pack("<BB", code, p.ndim))
            buf.write(struct.pack(f"<{p.ndim}Q", *p.shape))
            buf.write(np.ascontiguousarray(p, dtype=_CODE_DTYPES[code]).tobytes())
        return buf.getvalue()

    @staticmethod
    def from_bytes(data: bytes) -> "NetworkSnapshot":
        buf = io.BytesIO(data)
        if buf.read(8) != _MAGIC:
            raise ValueError("not a network snapshot container")
        (n,) = struct.unpack("<I", buf.read(4))
        arch = Architecture.from_descriptor(buf.read(n).decode())
        (n,) = struct.unpack("<I", buf.read(4))
        metadata = json.loads(buf.read(n).decode())
        (n_params,) = struct.unpack("<I", buf.read(4))
        params = []
        for _ in range(n_params):
            code, ndim = struct.unpack("<BB", buf.read(2))
            shape = struct.unpack(f"<{ndim}Q", buf.read(8 * ndim))
            dtype = _CODE_DTYPES[code]
            raw = buf.read(int(np.prod(shape)) * dtype.itemsize)
            params.append(np.frombuffer(raw, dtype=dtype).reshape(shape).copy())
        return NetworkSnapshot(arch, params, metadata)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @staticmethod
    def load(path) -> "NetworkSnapshot":
        with open(path, "rb") as f:
            return NetworkSnapshot.from_bytes(f.read())


def build_network(
    architecture: Architecture,
    seed: int,
    dtype=np.float64,
    tag: str = "init",
) -> NetworkSnapshot:
    """Initialize parameters with fan-in-scaled zero-mean normal draws.

    Identical seeds produce bit-identical snapshots.
    """
    gen = RngStream(seed).generator()
    params: list[np.ndarray] = []
    for layer in architecture.layers:
        if isinstance(layer, Conv):
            fan_in = layer.in_channels * 9
            w = gen.standard_normal((layer.out_channels, layer.in_channels, 3, 3))
            params.append((w / np.sqrt(fan_in)).astype(dtype))
            params.append(np.zeros(layer.out_channels, dtype=dtype))
        elif isinstance(layer, Dense):
            w = gen.standard_normal((layer.in_features, layer.out_features))
            params.append((w / np.sqrt(layer.in_features)).astype(dtype))
            params.append(np.zeros(layer.out_features, dtype=dtype))
    return NetworkSnapshot(architecture, params, {"provenance": tag, "episode": None})


def build_paper_network(seed: int, dropout_rate: float = 0.5, dtype=np.float64) -> NetworkSnapshot:
    return build_network(paper_architecture(dropout_rate), seed, dtype)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

class BatchMasks:
    """Dropout mask source drawing one full-batch mask per site from a
    single stream; used during training."""

    def __init__(self, rate: float, stream: RngStream):
        self.rate = rate
        self._gen = stream.generator() if rate > 0.0 else None

    def mask(self, site: int, shape, dtype):
        if self._gen is None:
            return None
        return ops.dropout_mask(shape, self.rate, self._gen, dtype)


class PerSampleMasks:
    """Dropout masks drawn from one substream per sample group.

    The batch is a concatenation of ``len(streams)`` groups of
    ``rows_per_stream`` rows each; group i's masks come only from
    ``streams[i]``, so results do not depend on how samples are batched
    together.
    """

    def __init__(self, rate: float, streams, rows_per_stream: int):
        self.rate = rate
        self.rows = rows_per_stream
        self._gens = [s.generator() for s in streams] if rate > 0.0 else None

    def mask(self, site: int, shape, dtype):
        if self._gens is None:
            return None
        rest = shape[1:]
        parts = [ops.dropout_mask((self.rows,) + rest, self.rate, g, dtype) for g in self._gens]
        return np.concatenate(parts, axis=0)


def network_forward(params, architecture: Architecture, x: np.ndarray,
                    mask_source=None, collect: bool = False):
    """Run the network, returning logits and (optionally) backward caches.

    ``mask_source=None`` disables dropout entirely (deterministic pass).
    """
    caches: list | None = [] if collect else None
    h = x
    pi = 0
    site = 0
    for layer in architecture.layers:
        if isinstance(layer, Conv):
            w, b = params[pi], params[pi + 1]
            h, cache = ops.conv2d_forward(h, w, b)
            if collect:
                caches.append(("conv", cache, pi))
            pi += 2
        elif isinstance(layer, Dense):
            w, b = params[pi], params[pi + 1]
            h, cache = ops.dense_forward(h, w, b)
            if collect:
                caches.append(("dense", cache, pi))
            pi += 2
        elif isinstance(layer, Pool):
            h, cache = ops.maxpool2_forward(h, record_argmax=collect)
            if collect:
                caches.append(("pool", cache, None))
            continue
        else:  # Flatten
            if collect:
                caches.append(("flatten", h.shape, None))
            h = h.reshape(h.shape[0], -1)
            continue
        # relu / dropout attached to conv and dense layers
        if layer.relu:
            if collect:
                h, mask = ops.relu_forward(h)
                caches.append(("relu", mask, None))
            else:
                h = np.maximum(h, 0.0)
        if layer.dropout:
            m = None if mask_source is None else mask_source.mask(site, h.shape, h.dtype)
            site += 1
            if m is not None:
                h = h * m
                if collect:
                    caches.append(("drop", m, None))
    return (h, caches) if collect else h


def network_backward(params, caches, grad_logits: np.ndarray):
    """Backpropagate through recorded caches; returns per-parameter grads."""
    grads: list = [None] * len(params)
    g = grad_logits
    for kind, cache, pi in reversed(caches):
        if kind == "conv":
            g, gw, gb = ops.conv2d_backward(g, cache)
            grads[pi], grads[pi + 1] = gw, gb
        elif kind == "dense":
            g, gw, gb = ops.dense_backward(g, cache)
            grads[pi], grads[pi + 1] = gw, gb
        elif kind == "pool":
            g = ops.maxpool2_backward(g, cache)
        elif kind == "flatten":
            g = g.reshape(cache)
        elif kind == "relu":
            g = ops.relu_backward(g, cache)
        else:  # drop
            g = g * cache
    return grads, g


def predict_logits(net: NetworkSnapshot, images: np.ndarray, batch: int = 256) -> np.ndarray:
    """Deterministic logits (dropout disabled), computed in fixed-size chunks."""
    outs = [
        network_forward(net.params, net.architecture, images[i : i + batch])
        for i in range(0, len(images), batch)
    ]
    return np.concatenate(outs, axis=0)


def evaluate_accuracy(net: NetworkSnapshot, images: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of correct argmax predictions with dropout disabled.

    Ties in the output distribution resolve to the lowest class index.
    """
    if len(images) == 0:
        raise ValueError("empty test set")
    logits = predict_logits(net, images)
    pred = logits.argmax(axis=1)
    return float((pred == labels).mean())


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]


def init_adam_state(params) -> AdamState:
    return AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, config: "TrainConfig"):
    """One bias-corrected Adam update; returns new params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"param/grad shape mismatch: {p.shape} vs {g.shape}")
    t = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(t, new_m, new_v)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    early_stop_patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _eval_accuracy_raw(params, architecture, images, labels) -> float:
    logits = network_forward(params, architecture, images)
    return float((logits.argmax(axis=1) == labels).mean())


def fine_tune(
    net: NetworkSnapshot,
    images: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    tag: str | None = None,
) -> NetworkSnapshot:
    """Continue training a network on a labeled set; returns a new snapshot.

    The input snapshot is never modified. A seeded fraction of the data is
    held out; after each epoch the held-out accuracy decides early stopping,
    and the best-scoring epoch's parameters are restored at the end. When
    the set is too small to hold anything out, training simply runs for
    ``max_epochs``. Optimizer state is fresh on every call.
    """
    if len(images) == 0:
        raise ValueError("empty fine-tune set")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")

    arch = net.architecture
    params = [p.copy() for p in net.params]
    metadata = json.loads(json.dumps(net.metadata))
    metadata["provenance"] = f"ft({net.provenance},{tag if tag else f'set{len(images)}'})"

    if config.max_epochs == 0:
        return NetworkSnapshot(arch, params, metadata)

    stream = RngStream(config.seed)
    n = len(images)
    n_val = int(round(config.validation_fraction * n))
    if 1 <= n_val <= n - 1:
        perm = stream.child(_SUB_VALSPLIT).generator().permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    else:
        val_idx, train_idx = None, np.arange(n)

    state = init_adam_state(params)
    rate = arch.dropout_rate
    best_params = None
    best_acc = -1.0
    since_best = 0

    for epoch in range(config.max_epochs):
        order = stream.child(_SUB_SHUFFLE, epoch).generator().permutation(len(train_idx))
        shuffled = train_idx[order]
        for bi in range(0, len(shuffled), config.batch_size):
            batch = shuffled[bi : bi + config.batch_size]
            masks = BatchMasks(rate, stream.child(_SUB_DROPOUT, epoch, bi))
            logits, caches = network_forward(params, arch, images[batch], masks, collect=True)
            _, _, xc = ops.softmax_xent_forward(logits, labels[batch])
            grads, _ = network_backward(params, caches, ops.softmax_xent_backward(xc))
            params, state = adam_step(params, grads, state, config)
        if val_idx is not None:
            acc = _eval_accuracy_raw(params, arch, images[val_idx], labels[val_idx])
            if acc > best_acc:
                best_acc = acc
                best_params = [p.copy() for p in params]
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.early_stop_patience:
                    break

    if best_params is not None:
        params = best_params
    return NetworkSnapshot(arch, params, metadata)
