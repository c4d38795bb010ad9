"""Parameterised layers: convolutions and affine maps with He-uniform init."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, conv1d_valid, conv2d, dense

__all__ = ["Conv2d", "Conv1dValid", "Dense", "he_uniform"]


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype, scale: float = 1.0):
    """Uniform(-b, b) with b = scale * sqrt(6 / fan_in)."""
    bound = scale * np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d:
    """Same-padded strided 2-D convolution (NHWC)."""

    def __init__(self, c_in, c_out, kernel, stride, rng, dtype=np.float32, scale=1.0):
        fan_in = c_in * kernel * kernel
        self.w = Tensor(
            he_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, dtype, scale),
            requires_grad=True,
        )
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, self.stride)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class Conv1dValid:
    """Unpadded 1-D convolution over the sequence axis (NLC)."""

    def __init__(self, c_in, c_out, kernel, rng, dtype=np.float32, scale=1.0):
        fan_in = c_in * kernel
        self.w = Tensor(
            he_uniform(rng, (c_out, c_in, kernel), fan_in, dtype, scale),
            requires_grad=True,
        )
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_valid(x, self.w, self.b)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class Dense:
    """Affine layer on (N, fan_in) inputs."""

    def __init__(self, n_in, n_out, rng, dtype=np.float32, scale=1.0):
        self.w = Tensor(
            he_uniform(rng, (n_in, n_out), n_in, dtype, scale), requires_grad=True
        )
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.w, self.b)

    def params(self):
        return [("w", self.w), ("b", self.b)]
