"""Layer arithmetic basics: convolution, pooling, softmax, and a gradient spot-check.

Run:  python3 demos/01_layers_and_gradients.py
"""

import numpy as np

from epal import conv2d, maxpool2, softmax
from epal.ops import conv2d_backward, conv2d_forward

print("== 3x3 same-padding convolution ==")
image = np.array([[[1.0, 2.0], [3.0, 4.0]]])          # one channel, 2x2
kernel = np.ones((1, 1, 3, 3))                        # a single all-ones kernel
out = conv2d(image, kernel, np.zeros(1))
print("input:\n", image[0])
print("all-ones kernel output (every cell sums the whole image):\n", out[0])

x = np.random.default_rng(0).normal(size=(3, 32, 32))
k = np.random.default_rng(1).normal(size=(32, 3, 3, 3))
print("32x32 image through 32 kernels ->", conv2d(x, k, np.zeros(32)).shape)

print("\n== 2x2 max pooling ==")
grid = np.arange(1.0, 17.0).reshape(1, 4, 4)
print("input:\n", grid[0])
print("window maxima:\n", maxpool2(grid)[0])

print("\n== softmax ==")
logits = np.array([0.0, np.log(3.0)])
print(f"softmax([0, ln 3]) = {softmax(logits)}   (exactly [0.25, 0.75])")
print(f"softmax is shift-invariant: {np.allclose(softmax(logits), softmax(logits + 100))}")

print("\n== analytic vs numerical gradient ==")
g = np.random.default_rng(2)
x = g.normal(size=(1, 2, 4, 4))
k = g.normal(size=(3, 2, 3, 3))
b = g.normal(size=3)
r = g.normal(size=(1, 3, 4, 4))   # fixed weights define a scalar objective

_, cache = conv2d_forward(x, k, b)
gx, _, _ = conv2d_backward(r, cache)

h = 1e-5
i = (0, 1, 2, 2)
x[i] += h
fp = (conv2d_forward(x, k, b)[0] * r).sum()
x[i] -= 2 * h
fm = (conv2d_forward(x, k, b)[0] * r).sum()
x[i] += h
numeric = (fp - fm) / (2 * h)
print(f"analytic d/dx at {i}: {gx[i]:+.8f}")
print(f"numerical            : {numeric:+.8f}")
print(f"relative error       : {abs(gx[i] - numeric) / abs(numeric):.2e}")
