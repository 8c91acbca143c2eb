"""Small module system: parameter containers with deterministic naming."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


class Module:
    training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v
            elif isinstance(value, dict):
                for k, v in value.items():
                    if isinstance(v, Module):
                        yield f"{name}.{k}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        """Parameters in attribute-definition order; shared modules appear once."""
        seen: set = set()
        for name, p in self._named_parameters(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    def _named_parameters(self, prefix):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child._named_parameters(prefix + name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple]:
        seen: set = set()
        for name, b in self._named_buffers(prefix):
            if id(b) not in seen:
                seen.add(id(b))
                yield name, b

    def _named_buffers(self, prefix):
        for name in getattr(self, "_buffer_names", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child._named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self, trainable_only: bool = False) -> int:
        return int(sum(p.size for p in self.parameters() if p.requires_grad or not trainable_only))

    def state_dict(self) -> dict:
        out = {name: p.data.copy() for name, p in self.named_parameters()}
        out.update({name: b.copy() for name, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        unexpected = set(state) - (set(params) | set(buffers))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)
        for name, b in buffers.items():
            b[...] = state[name]

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for m in self.modules():
            for name in getattr(m, "_buffer_names", ()):
                setattr(m, name, getattr(m, name).astype(dtype))
        return self


def _uniform(rng: np.random.Generator, bound: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, din: int, dout: int, bias: bool = True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng()
        bound = 1.0 / np.sqrt(din)
        self.weight = Parameter(_uniform(rng, bound, (dout, din), dtype))
        self.bias = Parameter(_uniform(rng, bound, (dout,), dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.affine(x, self.weight, self.bias)


class TemporalConv(Module):
    def __init__(self, cin: int, cout: int, kernel_size: int, bias: bool = True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng()
        bound = 1.0 / np.sqrt(cin * kernel_size)
        self.weight = Parameter(_uniform(rng, bound, (cout, cin, kernel_size), dtype))
        self.bias = Parameter(_uniform(rng, bound, (cout,), dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.temporal_conv(x, self.weight, self.bias)


class BatchNorm(Module):
    """Batch-norm state: learnable gamma/beta plus running mean/variance buffers."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, axis: int = 1, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.axis = axis
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self, axis=self.axis)


class MLPEmbed(Module):
    """Two fully connected layers, each followed by relu."""

    def __init__(self, din: int, dhidden: int, dout: int, rng=None, dtype=np.float32):
        self.fc1 = Linear(din, dhidden, rng=rng, dtype=dtype)
        self.fc2 = Linear(dhidden, dout, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.fc2(F.relu(self.fc1(x))))

    def zero_(self) -> None:
        for p in self.parameters():
            p.data[...] = 0


def one_hot(indices, depth: int, dtype=np.float32) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros(idx.shape + (depth,), dtype=dtype)
    np.put_along_axis(out, idx[..., None], 1, axis=-1)
    return out


def constant(x, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype))
