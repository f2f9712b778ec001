"""Small neural-net layer zoo on top of the tensor kernel.

Modules discover their parameters by attribute reflection (insertion order,
so parameter naming is deterministic for a fixed construction order), which
gives us named checkpoints for free via the TNSR1 manifest format.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import DataError
from .tensor import Tensor


def normal_param(rng: np.random.Generator, shape, scale: float, dtype=np.float32) -> Tensor:
    return Tensor((rng.standard_normal(shape) * scale).astype(dtype), requires_grad=True)


def zeros_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


class Module:
    """Base class: parameter traversal, freezing, state (de)serialization."""

    def named_params(self, prefix: str = ""):
        for key, val in vars(self).items():
            if isinstance(val, Tensor):
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_params(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{prefix}{key}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{prefix}{key}.{i}", item

    def params(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def param_count(self) -> int:
        return sum(t.size for t in self.params())

    def freeze(self) -> "Module":
        for t in self.params():
            t.requires_grad = False
        return self

    def unfreeze(self) -> "Module":
        for t in self.params():
            t.requires_grad = True
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_params())
        missing = set(own) - set(state)
        if missing:
            raise DataError(f"checkpoint missing parameters: {sorted(missing)[:5]} ...")
        for name, t in own.items():
            arr = np.asarray(state[name])
            if arr.shape != t.data.shape:
                raise DataError(f"{name}: checkpoint shape {arr.shape} != model {t.data.shape}")
            t.data = arr.astype(t.data.dtype, copy=True)

    def clone_from(self, other: "Module") -> None:
        self.load_state_dict(other.state_dict())


class Linear(Module):
    def __init__(self, rng, din: int, dout: int, dtype=np.float32, out_scale: float = 1.0):
        self.w = normal_param(rng, (din, dout), out_scale / math.sqrt(din), dtype)
        self.b = zeros_param((dout,), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.w) + self.b


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = ones_param((dim,), dtype)
        self.bias = zeros_param((dim,), dtype)
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, eps=self._eps)


class Conv3d(Module):
    """NCDHW conv layer; bias broadcast over (B, C, D, H, W)."""

    def __init__(self, rng, cin: int, cout: int, kernel, stride=1, padding=0, dtype=np.float32):
        k = kernel if isinstance(kernel, tuple) else (kernel, kernel, kernel)
        fan_in = cin * k[0] * k[1] * k[2]
        self.w = normal_param(rng, (cout, cin) + k, 1.0 / math.sqrt(fan_in), dtype)
        self.b = zeros_param((cout,), dtype)
        self._stride = stride
        self._padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        y = T.conv3d(x, self.w, stride=self._stride, padding=self._padding)
        return y + T.reshape(self.b, (1, -1, 1, 1, 1))


class AdamW:
    """Adam with decoupled weight decay. State is exportable for exact resume."""

    def __init__(self, named_params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.items: list[tuple[str, Tensor]] = list(named_params)
        names = [n for n, _ in self.items]
        if len(names) != len(set(names)):
            raise DataError("duplicate parameter names in optimizer")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.items}
        self._v = {n: np.zeros_like(p.data) for n, p in self.items}

    def zero_grad(self) -> None:
        for _, p in self.items:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.items:
            if p.grad is None:
                continue
            g = p.grad.astype(p.data.dtype, copy=False)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                p.data = p.data - self.lr * self.weight_decay * p.data - self.lr * update
            else:
                p.data = p.data - self.lr * update

    def state_tensors(self, prefix: str = "opt.") -> dict[str, np.ndarray]:
        out = {f"{prefix}t": np.float64(self.t)}
        for name, _ in self.items:
            out[f"{prefix}m.{name}"] = self._m[name]
            out[f"{prefix}v.{name}"] = self._v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], prefix: str = "opt.") -> None:
        key = f"{prefix}t"
        if key not in tensors:
            raise DataError("optimizer state missing step counter")
        self.t = int(tensors[key])
        for name, p in self.items:
            m = tensors.get(f"{prefix}m.{name}")
            v = tensors.get(f"{prefix}v.{name}")
            if m is None or v is None:
                raise DataError(f"optimizer state missing moments for {name}")
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise DataError(f"optimizer moment shape mismatch for {name}")
            self._m[name] = m.astype(p.data.dtype, copy=True)
            self._v[name] = v.astype(p.data.dtype, copy=True)


def sinusoidal_embedding(values: np.ndarray, dim: int, dtype=np.float32) -> np.ndarray:
    """Classic sin/cos embedding of scalar values, non-trainable."""
    if dim % 2:
        raise DataError("sinusoidal embedding dim must be even")
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = vals[:, None] * freqs[None, :] * 100.0
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    return emb.astype(dtype)
