"""Layer forward/backward rules for [batch, length, channels] float tensors.

Every layer caches what its backward pass needs during forward, accumulates
parameter gradients into its ParamSlots, and returns the gradient with respect
to its input. Layers are dtype-generic: they compute in the dtype of their
parameters, so a float64 twin of any layer can be built for gradient checking.
Reductions (pooling, batch statistics) accumulate in float64 regardless of the
storage dtype.
"""

from __future__ import annotations

import numpy as np

from modclass.engine.optim import ParamSlot


class EngineNumericsError(RuntimeError):
    """A forward pass produced NaN/Inf, or training hit a non-finite loss."""


def check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise EngineNumericsError(f"non-finite values in output of {where}")


def conv1d_output_length(length: int, kernel: int, stride: int, padding: str) -> int:
    """Output length of a 1-D convolution: ceil(L/stride) for same padding,
    floor((L-k)/stride)+1 for valid."""
    if padding == "same":
        return -(-length // stride)
    if padding == "valid":
        return (length - kernel) // stride + 1
    raise ValueError(f"unknown padding {padding!r}")


def _same_padding(length: int, kernel: int, stride: int) -> tuple[int, int]:
    # Right-heavy split: odd totals put the extra zero on the right.
    out_len = -(-length // stride)
    total = max(0, (out_len - 1) * stride + kernel - length)
    left = total // 2
    return left, total - left


class Layer:
    """Base class: parameter registry plus a numerics-check switch."""

    name: str
    check_numerics: bool = False

    def params(self) -> list[ParamSlot]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that must survive a checkpoint (e.g. BN stats)."""
        return {}

    def _maybe_check(self, out: np.ndarray) -> None:
        if self.check_numerics:
            check_finite(out, self.name)


class Conv1D(Layer):
    """Cross-correlation along the length axis.

    weight: [kernel, c_in, c_out], bias: [c_out]. Padding is "same"
    (zero-padded, ceil(L/stride) outputs) or "valid".
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        stride: int = 1,
        padding: str = "same",
        name: str = "conv1d",
        dtype=np.float32,
        use_bias: bool = True,
    ):
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        if padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {padding!r}")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.name = name
        self.weight = ParamSlot(f"{name}.weight", np.zeros((kernel, c_in, c_out), dtype=dtype))
        # A bias feeding straight into batchnorm is a flat direction of the
        # loss; layers followed by BN are built without one.
        self.bias = ParamSlot(f"{name}.bias", np.zeros(c_out, dtype=dtype)) if use_bias else None
        self._cache = None

    def params(self) -> list[ParamSlot]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, length, c_in = x.shape
        if c_in != self.c_in:
            raise ValueError(f"{self.name}: expected {self.c_in} input channels, got {c_in}")
        out_len = conv1d_output_length(length, self.kernel, self.stride, self.padding)
        if out_len < 1:
            raise ValueError(f"{self.name}: output length < 1 for input length {length}")
        if self.padding == "same":
            left, right = _same_padding(length, self.kernel, self.stride)
            if left or right:
                x_pad = np.pad(x, ((0, 0), (left, right), (0, 0)))
            else:
                x_pad = x
        else:
            left = 0
            x_pad = x
        w = self.weight.value
        span = (out_len - 1) * self.stride + 1
        out = np.empty((b, out_len, self.c_out), dtype=x.dtype)
        out[...] = 0.0 if self.bias is None else self.bias.value
        for kk in range(self.kernel):
            xs = x_pad[:, kk : kk + span : self.stride, :]
            out += xs @ w[kk]
        self._cache = (x_pad, left, length, out_len, span)
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_pad, left, length, out_len, span = self._cache
        if grad_out.shape != (x_pad.shape[0], out_len, self.c_out):
            raise ValueError(f"{self.name}: grad shape mismatch")
        w = self.weight.value
        if self.bias is not None:
            self.bias.grad += grad_out.sum(axis=(0, 1))
        grad_pad = np.zeros_like(x_pad)
        for kk in range(self.kernel):
            xs = x_pad[:, kk : kk + span : self.stride, :]
            # batched gemm on the strided view avoids the copy a flat reshape
            # would force; BLAS takes the strides directly
            self.weight.grad[kk] += np.matmul(xs.transpose(0, 2, 1), grad_out).sum(axis=0)
            grad_pad[:, kk : kk + span : self.stride, :] += grad_out @ w[kk].T
        return grad_pad[:, left : left + length, :]


class BatchNorm1D(Layer):
    """Per-channel normalization over (batch x length).

    Train mode uses batch statistics (biased variance) and folds them into the
    running averages with weight ``momentum``; infer mode uses the running
    statistics only.
    """

    def __init__(
        self,
        channels: int,
        momentum: float = 0.1,
        eps: float = 1e-5,
        name: str = "batchnorm",
        dtype=np.float32,
    ):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.name = name
        self.gamma = ParamSlot(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = ParamSlot(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def params(self) -> list[ParamSlot]:
        return [self.gamma, self.beta]

    def buffers(self) -> dict[str, np.ndarray]:
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, length, c = x.shape
        if c != self.channels:
            raise ValueError(f"{self.name}: expected {self.channels} channels, got {c}")
        dtype = x.dtype
        if train:
            n = b * length
            if n < 2:
                raise ValueError(f"{self.name}: batch x length must be >= 2 in train mode")
            mean64 = x.mean(axis=(0, 1), dtype=np.float64)
            var64 = np.square(x.astype(np.float64) - mean64).mean(axis=(0, 1))
            inv = (1.0 / np.sqrt(var64 + self.eps)).astype(dtype)
            xhat = (x - mean64.astype(dtype)) * inv
            self.running_mean[...] = (
                (1.0 - self.momentum) * self.running_mean + self.momentum * mean64
            ).astype(self.running_mean.dtype)
            self.running_var[...] = (
                (1.0 - self.momentum) * self.running_var + self.momentum * var64
            ).astype(self.running_var.dtype)
            self._cache = ("train", xhat, inv, n)
        else:
            inv = (1.0 / np.sqrt(self.running_var.astype(np.float64) + self.eps)).astype(dtype)
            xhat = (x - self.running_mean.astype(dtype)) * inv
            self._cache = ("infer", xhat, inv, b * length)
        out = self.gamma.value * xhat + self.beta.value
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        mode, xhat, inv, n = self._cache
        g_xhat_sum = (grad_out * xhat).sum(axis=(0, 1))
        g_sum = grad_out.sum(axis=(0, 1))
        self.gamma.grad += g_xhat_sum
        self.beta.grad += g_sum
        if mode == "infer":
            return grad_out * (self.gamma.value * inv)
        coeff = self.gamma.value * inv / n
        return coeff * (n * grad_out - xhat * g_xhat_sum - g_sum)


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._mask = x > 0
        # np.maximum (not where-select) so NaN propagates instead of
        # silently mapping to zero
        out = np.maximum(x, x.dtype.type(0))
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, grad_out.dtype.type(0))


class Sigmoid(Layer):
    def __init__(self, name: str = "sigmoid"):
        self.name = name
        self._out = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        # Overflow-free: exp is only ever taken of a non-positive argument.
        e = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
        self._out = out
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        y = self._out
        return grad_out * y * (1.0 - y)


class GlobalAvgPool1D(Layer):
    """[b, W, C] -> [b, 1, C], averaging along the length axis."""

    def __init__(self, name: str = "gap"):
        self.name = name
        self._width = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._width = x.shape[1]
        out = x.mean(axis=1, keepdims=True, dtype=np.float64).astype(x.dtype)
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        w = self._width
        return np.repeat(grad_out / grad_out.dtype.type(w), w, axis=1)


class Dense(Layer):
    """Affine map on [b, n] inputs. weight: [n, m], bias: [m]."""

    def __init__(self, n_in: int, n_out: int, name: str = "dense", dtype=np.float32):
        self.n_in = n_in
        self.n_out = n_out
        self.name = name
        self.weight = ParamSlot(f"{name}.weight", np.zeros((n_in, n_out), dtype=dtype))
        self.bias = ParamSlot(f"{name}.bias", np.zeros(n_out, dtype=dtype))
        self._x = None

    def params(self) -> list[ParamSlot]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"{self.name}: expected [b, {self.n_in}] input, got {x.shape}")
        self._x = x
        out = x @ self.weight.value + self.bias.value
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.weight.grad += self._x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value.T


class Upsample1D(Layer):
    """Nearest-neighbor repetition along the length axis."""

    def __init__(self, factor: int, name: str = "upsample"):
        if factor < 1:
            raise ValueError("factor must be >= 1")
        self.factor = factor
        self.name = name
        self._in_len = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._in_len = x.shape[1]
        if self.factor == 1:
            return x
        out = np.repeat(x, self.factor, axis=1)
        self._maybe_check(out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self.factor == 1:
            return grad_out
        b, _, c = grad_out.shape
        return grad_out.reshape(b, self._in_len, self.factor, c).sum(axis=2)
