"""Dense-tensor layer arithmetic: forward passes and hand-written backward passes.

Everything operates on plain numpy arrays. Convolutions are 3x3, stride 1,
same-padding (pad 1), so spatial size only changes at pooling layers.
Images and activations are laid out channels-first: (C, H, W) for a single
image, (B, C, H, W) for a batch.

The ``*_forward`` functions return ``(output, cache)`` pairs; the matching
``*_backward`` functions consume the cache and the upstream gradient. The
public single-purpose wrappers (`conv2d`, `maxpool2`, `softmax`) validate
their inputs and are the ones you want for one-off computation.
"""

from __future__ import annotations

import numpy as np


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Promote (C,H,W) to (1,C,H,W); report whether promotion happened."""
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected a (C,H,W) or (B,C,H,W) array, got shape {x.shape}")


# ---------------------------------------------------------------------------
# Convolution (3x3, stride 1, pad 1)
# ---------------------------------------------------------------------------

def _im2col3(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """All 3x3 patches of a channels-first padded (C,B,H+2,W+2) batch as
    (C*9, B*H*W).

    Nine straight slice copies (no transposes on the hot path); the layout
    feeds one large GEMM against the (C_out, C_in*9) kernel matrix.
    """
    c, b = xp.shape[:2]
    cols = np.empty((c, 3, 3, b, h, w), dtype=xp.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, i, j] = xp[:, :, i : i + h, j : j + w]
    return cols.reshape(c * 9, b * h * w)


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray):
    """Batched 3x3 same-padding convolution.

    x: (B, C_in, H, W); kernels: (C_out, C_in, 3, 3); bias: (C_out,).
    Returns (out, cache) with out of shape (B, C_out, H, W).
    """
    b, c_in, h, w = x.shape
    c_out = kernels.shape[0]
    xp = np.zeros((c_in, b, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1 : h + 1, 1 : w + 1] = x.transpose(1, 0, 2, 3)
    cols = _im2col3(xp, h, w)                      # (C_in*9, B*H*W)
    w_mat = kernels.reshape(c_out, c_in * 9)
    out2 = w_mat @ cols                            # (C_out, B*H*W)
    out2 += bias[:, None]
    out = np.ascontiguousarray(out2.reshape(c_out, b, h, w).transpose(1, 0, 2, 3))
    return out, (cols, kernels, x.shape)


def conv2d_backward(grad_out: np.ndarray, cache):
    """Gradients of conv2d_forward w.r.t. input, kernels and bias."""
    cols, kernels, x_shape = cache
    b, c_in, h, w = x_shape
    c_out = kernels.shape[0]
    go = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(c_out, b * h * w)
    grad_b = go.sum(axis=1)
    grad_w = (go @ cols.T).reshape(kernels.shape)
    w_mat = kernels.reshape(c_out, c_in * 9)
    gcols = w_mat.T @ go                           # (C_in*9, B*H*W)
    g6 = gcols.reshape(c_in, 3, 3, b, h, w)
    gxp = np.zeros((b, c_in, h + 2, w + 2), dtype=grad_out.dtype)
    for i in range(3):
        for j in range(3):
            gxp[:, :, i : i + h, j : j + w] += g6[:, i, j].transpose(1, 0, 2, 3)
    return gxp[:, :, 1 : h + 1, 1 : w + 1], grad_w, grad_b


def conv2d(input: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 same-padding convolution of one image or a batch.

    Raises ValueError when the kernel spatial size is not 3x3 or the input
    channel count does not match the kernels.
    """
    x, single = _as_batch(np.asarray(input))
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ValueError(f"kernels must have shape (C_out, C_in, 3, 3), got {kernels.shape}")
    if kernels.shape[1] != x.shape[1]:
        raise ValueError(
            f"channel mismatch: input has C_in={x.shape[1]} but kernels expect "
            f"C_in={kernels.shape[1]} (kernels shape {kernels.shape})"
        )
    if bias.shape != (kernels.shape[0],):
        raise ValueError(f"bias must have shape ({kernels.shape[0]},), got {bias.shape}")
    out, _ = conv2d_forward(x, kernels, bias)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Max pooling (2x2, non-overlapping)
# ---------------------------------------------------------------------------

def maxpool2_forward(x: np.ndarray, record_argmax: bool = True):
    """2x2 max pooling; records argmax positions for the backward pass.

    Inference-only callers pass record_argmax=False, which skips the
    argmax bookkeeping (the output values are identical either way).
    """
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    xr = x.reshape(b, c, h // 2, 2, w // 2, 2)
    if not record_argmax:
        # pairwise maxima over the four window corners; same values as the
        # argmax path, several times faster than a multi-axis reduce
        out = np.maximum(xr[:, :, :, 0, :, 0], xr[:, :, :, 0, :, 1])
        np.maximum(out, xr[:, :, :, 1, :, 0], out=out)
        np.maximum(out, xr[:, :, :, 1, :, 1], out=out)
        return out, None
    windows = xr.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)                  # first max wins on ties
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    arg, x_shape = cache
    b, c, h, w = x_shape
    gwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(gwin, arg[..., None], grad_out[..., None], axis=-1)
    gx = gwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return gx.reshape(b, c, h, w)


def maxpool2(input: np.ndarray) -> np.ndarray:
    """2x2 max pooling of one image or a batch; spatial dims must be even."""
    x, single = _as_batch(np.asarray(input))
    out, _ = maxpool2_forward(x)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Dense, activation, dropout
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Affine layer: x (B, D_in) @ weights (D_in, D_out) + bias."""
    if x.shape[1] != weights.shape[0]:
        raise ValueError(
            f"dense shape mismatch: input has {x.shape[1]} features, "
            f"weights expect {weights.shape[0]}"
        )
    return x @ weights + bias, (x, weights)


def dense_backward(grad_out: np.ndarray, cache):
    x, weights = cache
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_out: np.ndarray, mask) -> np.ndarray:
    return grad_out * mask


def dropout_mask(shape, rate: float, gen: np.random.Generator, dtype) -> np.ndarray:
    """Inverted-dropout mask: entries are 0 or 1/(1-rate)."""
    keep = 1.0 - rate
    mask = (gen.random(shape, dtype=dtype) >= rate).astype(dtype)
    mask /= keep
    return mask


def dropout_apply(x: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return x if mask is None else x * mask


# ---------------------------------------------------------------------------
# Softmax and cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis (max-subtraction before exp)."""
    z = np.asarray(logits)
    if z.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax requires finite logits")
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_xent_forward(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, probs, cache). Computed through log-softmax so the loss
    stays finite for extreme logits.
    """
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    probs = np.exp(logp)
    return loss, probs, (probs, labels)


def softmax_xent_backward(cache) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the logits."""
    probs, labels = cache
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return grad
