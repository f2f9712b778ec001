"""Dense n-d tensors with reverse-mode automatic differentiation over numpy.

Design:

* ``Tensor`` wraps a float32/float64 numpy array. Every operation validates
  that its output is finite (NaN/Inf raises :class:`NonFiniteError`) and
  records a backward closure on the active :class:`GradTape`, if any.
* Recording is opt-in: outside a ``with GradTape() as tape:`` block all ops
  run as plain numpy with zero overhead beyond the finite check. Inside a
  block, a node is recorded only when at least one input requires gradients.
  ``pause_recording()`` temporarily turns recording off (used for frozen
  networks evaluated in the middle of a training step).
* ``tape.backward(loss)`` walks the recorded nodes in reverse execution
  order (a valid reverse-topological order) and deposits ``.grad`` numpy
  arrays on every leaf tensor flagged ``requires_grad``. Gradients
  *accumulate* across tapes, which is what gradient accumulation over
  micro-batches relies on; optimizers reset ``.grad`` to ``None``.
* conv3d uses offset accumulation: one strided slice and one small matmul
  per kernel tap, with a fixed tap order. The per-output-element reduction
  order is therefore independent of the spatial extents, which is what makes
  cropped decoding bit-identical to full decoding downstream.
* 64-bit mode exists for verification (``grad_check``); everything defaults
  to float32 in real use.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError

__all__ = [
    "Tensor",
    "GradTape",
    "pause_recording",
    "tensor",
    "zeros",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sqrt",
    "square",
    "abs_",
    "pow_scalar",
    "tanh",
    "sigmoid",
    "relu",
    "gelu",
    "clip",
    "matmul",
    "conv3d",
    "softmax",
    "layer_norm",
    "sum_",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "pad",
    "repeat",
    "stop_gradient",
    "grad_check",
]

FLOAT_DTYPES = (np.float32, np.float64)


def _as_dtype(dtype) -> np.dtype:
    d = np.dtype(dtype)
    if d not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ShapeMismatchError(f"only float32/float64 tensors are supported, got {d}")
    return d


class Tensor:
    """A dense array of 32- or 64-bit floats, optionally carrying a gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(_as_dtype(dtype)), requires_grad=False)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, _coerce(other, self))

    def __radd__(self, other):
        return add(_coerce(other, self), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    def __rmul__(self, other):
        return mul(_coerce(other, self), self)

    def __truediv__(self, other):
        return div(self, _coerce(other, self))

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_scalar(self, float(p))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def tensor(data, dtype=np.float32, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=_as_dtype(dtype)), requires_grad=requires_grad, name=name)


def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_as_dtype(dtype)), requires_grad=requires_grad)


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


# ---------------------------------------------------------------------------
# Gradient tape
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.parents = parents
        self.backward = backward


_TAPE_STACK: list["GradTape"] = []
_PAUSE_DEPTH = 0


class GradTape:
    """Records operations for one reverse pass. Single-writer: one step, one tape."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._entered = False

    def __enter__(self) -> "GradTape":
        if self._entered:
            raise RuntimeError("GradTape is not reentrant")
        self._entered = True
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
        if loss.size != 1:
            raise ShapeMismatchError(f"backward needs a scalar loss, got shape {loss.shape}")
        produced = {id(node.out) for node in self.nodes}
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            holders.pop(id(node.out), None)
            if g is None:
                continue
            parent_grads = node.backward(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None:
                    continue
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
                    holders[pid] = parent
        for pid, g in grads.items():
            leaf = holders[pid]
            if leaf.requires_grad and pid not in produced:
                if leaf.grad is None:
                    leaf.grad = g.copy()
                else:
                    leaf.grad = leaf.grad + g
        self.nodes.clear()


@contextmanager
def pause_recording():
    """Temporarily stop recording on any active tape (frozen-network evaluation)."""
    global _PAUSE_DEPTH
    _PAUSE_DEPTH += 1
    try:
        yield
    finally:
        _PAUSE_DEPTH -= 1


def _record(out: Tensor, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if _TAPE_STACK and _PAUSE_DEPTH == 0 and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _TAPE_STACK[-1].nodes.append(_Node(out, tuple(parents), backward))
    return out


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_same_dtype(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatchError(f"{op}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# Elementwise ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "add")
    out = Tensor(_finite(a.data + b.data, "add"))
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "sub")
    out = Tensor(_finite(a.data - b.data, "sub"))
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "mul")
    ad, bd = a.data, b.data
    out = Tensor(_finite(ad * bd, "mul"))
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape))
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "div")
    bd = b.data
    with np.errstate(all="ignore"):
        out_data = _finite(a.data / bd, "div")
    return _record(
        Tensor(out_data),
        (a, b),
        lambda g: (_unbroadcast(g / bd, a.shape), _unbroadcast(-g * out_data / bd, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    with np.errstate(all="ignore"):
        out_data = _finite(np.exp(a.data), "exp")
    out = Tensor(out_data)
    return _record(out, (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    with np.errstate(all="ignore"):
        out_data = _finite(np.log(a.data), "log")
    ad = a.data
    return _record(Tensor(out_data), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(all="ignore"):
        out_data = _finite(np.sqrt(a.data), "sqrt")
    return _record(Tensor(out_data), (a,), lambda g: (g * (0.5 / out_data),))


def square(a: Tensor) -> Tensor:
    ad = a.data
    out = Tensor(_finite(ad * ad, "square"))
    return _record(out, (a,), lambda g: (g * (2.0 * ad),))


def abs_(a: Tensor) -> Tensor:
    ad = a.data
    out = Tensor(np.abs(ad))
    return _record(out, (a,), lambda g: (g * np.sign(ad),))


def pow_scalar(a: Tensor, p: float) -> Tensor:
    ad = a.data
    with np.errstate(all="ignore"):
        out_data = _finite(ad**p, "pow")
    return _record(Tensor(out_data), (a,), lambda g: (g * (p * ad ** (p - 1.0)),))


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)
    return _record(Tensor(out_data), (a,), lambda g: (g * (1.0 - out_data * out_data),))


def sigmoid(a: Tensor) -> Tensor:
    ad = a.data
    out_data = np.where(ad >= 0, 1.0 / (1.0 + np.exp(-np.abs(ad))), np.exp(-np.abs(ad)) / (1.0 + np.exp(-np.abs(ad))))
    out_data = out_data.astype(ad.dtype, copy=False)
    return _record(Tensor(out_data), (a,), lambda g: (g * out_data * (1.0 - out_data),))


def relu(a: Tensor) -> Tensor:
    ad = a.data
    out = Tensor(np.maximum(ad, 0))
    return _record(out, (a,), lambda g: (g * (ad > 0),))


_GELU_K = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    x = a.data
    inner = _GELU_K * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = Tensor((0.5 * x * (1.0 + t)).astype(x.dtype, copy=False))

    def backward(g):
        dinner = _GELU_K * (1.0 + 3 * 0.044715 * x * x)
        dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return (g * dx,)

    return _record(out, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    ad = a.data
    out = Tensor(np.clip(ad, lo, hi))
    mask = (ad >= lo) & (ad <= hi)
    return _record(out, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "matmul")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: inner dims {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(_finite(np.matmul(ad, bd), "matmul"))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _record(out, (a, b), backward)


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise ShapeMismatchError(f"expected 3 values, got {v!r}")
    return t


def _conv3d_out_shape(in_shape, k_shape, stride, padding):
    _, _, d, h, w = in_shape
    _, _, kd, kh, kw = k_shape
    sd, sh, sw = stride
    pd, ph, pw = padding
    od = (d + 2 * pd - kd) // sd + 1
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if od <= 0 or oh <= 0 or ow <= 0:
        raise ShapeMismatchError(
            f"conv3d: kernel {k_shape[2:]} with stride {stride} pad {padding} "
            f"does not fit input {in_shape[2:]}"
        )
    return od, oh, ow


def conv3d(x: Tensor, w: Tensor, stride=1, padding=0) -> Tensor:
    """3-D convolution (really cross-correlation), NCDHW layout.

    x: (B, Cin, D, H, W); w: (Cout, Cin, kd, kh, kw). Zero padding, configurable
    stride. The forward pass reduces with one unoptimized einsum per kernel
    tap, taps visited in fixed (kd, kh, kw) order: the floating-point reduction
    order per output element is then completely independent of the extents, so
    cropping the input crops the output bit-exactly (BLAS matmul does *not*
    guarantee this — it switches kernels with the row count). The backward
    pass has no such contract and uses plain matmul for speed.
    """
    _check_same_dtype(x, w, "conv3d")
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeMismatchError(f"conv3d expects 5-d input/kernel, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatchError(f"conv3d: channel mismatch {x.shape[1]} vs {w.shape[1]}")
    stride = _triple(stride)
    padding = _triple(padding)
    od, oh, ow = _conv3d_out_shape(x.shape, w.shape, stride, padding)
    b, ci, _, _, _ = x.shape
    co = w.shape[0]
    kd, kh, kw = w.shape[2:]
    sd, sh, sw = stride
    pd, ph, pw = padding

    xd = x.data
    if any(padding):
        xd = np.pad(xd, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    # channels-last copy once; slices below then stay cheap views
    xt = np.ascontiguousarray(xd.transpose(0, 2, 3, 4, 1))  # (B, Dp, Hp, Wp, Ci)
    wt = w.data.transpose(2, 3, 4, 1, 0)  # (kd, kh, kw, Ci, Co)

    out = np.zeros((b, od, oh, ow, co), dtype=x.data.dtype)
    for i in range(kd):
        for j in range(kh):
            for k in range(kw):
                sl = xt[:, i : i + sd * od : sd, j : j + sh * oh : sh, k : k + sw * ow : sw, :]
                out += np.einsum("bdhwc,co->bdhwo", sl, wt[i, j, k], optimize=False)
    out_t = Tensor(_finite(np.ascontiguousarray(out.transpose(0, 4, 1, 2, 3)), "conv3d"))

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 3, 4, 1))  # (B, od, oh, ow, Co)
        g2 = gt.reshape(-1, co)
        need_x = x.requires_grad
        need_w = w.requires_grad
        gxt = np.zeros_like(xt) if need_x else None
        gwt = np.zeros_like(wt) if need_w else None
        for i in range(kd):
            for j in range(kh):
                for k in range(kw):
                    if need_w:
                        sl = xt[
                            :, i : i + sd * od : sd, j : j + sh * oh : sh, k : k + sw * ow : sw, :
                        ]
                        gwt[i, j, k] = sl.reshape(-1, ci).T @ g2
                    if need_x:
                        gxt[
                            :, i : i + sd * od : sd, j : j + sh * oh : sh, k : k + sw * ow : sw, :
                        ] += np.matmul(gt, wt[i, j, k].T)
        gx = None
        if need_x:
            gx = gxt.transpose(0, 4, 1, 2, 3)
            if any(padding):
                gx = gx[
                    :,
                    :,
                    pd : gx.shape[2] - pd,
                    ph : gx.shape[3] - ph,
                    pw : gx.shape[4] - pw,
                ]
            gx = np.ascontiguousarray(gx)
        gw = np.ascontiguousarray(gwt.transpose(4, 3, 0, 1, 2)) if need_w else None
        return (gx, gw)

    return _record(out_t, (x, w), backward)


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``; optional boolean mask (False = excluded).

    Masked-out lanes get probability exactly 0. Implemented without any
    non-finite fill values: excluded entries are replaced by the row max
    before exponentiation and zeroed afterwards.
    """
    xd = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        if not mask.any(axis=axis).all():
            raise ShapeMismatchError("softmax: some rows have no unmasked entries")
        filled = np.where(mask, xd, np.min(xd))
        m = filled.max(axis=axis, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, xd, m) - m), 0.0)
    else:
        m = xd.max(axis=axis, keepdims=True)
        e = np.exp(xd - m)
    s = e.sum(axis=axis, keepdims=True)
    y = (e / s).astype(xd.dtype, copy=False)
    out = Tensor(_finite(y, "softmax"))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale/shift by 1-d gain/bias."""
    _check_same_dtype(x, gain, "layer_norm")
    _check_same_dtype(x, bias, "layer_norm")
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeMismatchError(
            f"layer_norm: gain/bias must be ({x.shape[-1]},), got {gain.shape}, {bias.shape}"
        )
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(_finite((xhat * gain.data + bias.data).astype(xd.dtype, copy=False), "layer_norm"))

    def backward(g):
        axes = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=axes)
        gbias = g.sum(axis=axes)
        gx_hat = g * gain.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return (gx.astype(xd.dtype, copy=False), ggain.astype(xd.dtype, copy=False), gbias.astype(xd.dtype, copy=False))

    return _record(out, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, x.ndim)
    out = Tensor(_finite(x.data.sum(axis=axis, keepdims=keepdims), "sum"))
    in_shape = x.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).astype(x.data.dtype, copy=False).copy(),)
        ge = g
        if not keepdims:
            ge = np.expand_dims(g, axis)
        return (np.broadcast_to(ge, in_shape).copy(),)

    return _record(out, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis_n = _norm_axis(axis, x.ndim)
    if axis_n is None:
        n = x.size
    else:
        n = int(np.prod([x.shape[a] for a in axis_n]))
    out = Tensor(_finite(x.data.mean(axis=axis_n, keepdims=keepdims), "mean"))
    in_shape = x.shape

    def backward(g):
        if axis_n is None:
            ge = g
        else:
            ge = g if keepdims else np.expand_dims(g, axis_n)
        return ((np.broadcast_to(ge, in_shape) / n).astype(x.data.dtype, copy=False),)

    return _record(out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    in_shape = x.shape
    return _record(out, (x,), lambda g: (g.reshape(in_shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    inv = tuple(np.argsort(axes))
    return _record(out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise ShapeMismatchError("concat of zero tensors")
    for t in ts[1:]:
        _check_same_dtype(ts[0], t, "concat")
    axis = axis % ts[0].ndim
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis))
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        pieces = []
        sl = [slice(None)] * g.ndim
        for i in range(len(sizes)):
            sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return _record(out, tuple(ts), backward)


def pad(x: Tensor, pad_width) -> Tensor:
    pw = tuple((int(a), int(b)) for a, b in pad_width)
    if len(pw) != x.ndim:
        raise ShapeMismatchError(f"pad: need {x.ndim} pairs, got {len(pw)}")
    out = Tensor(np.pad(x.data, pw))

    def backward(g):
        sl = tuple(slice(a, g.shape[i] - b if b else None) for i, (a, b) in enumerate(pw))
        return (np.ascontiguousarray(g[sl]),)

    return _record(out, (x,), backward)


def repeat(x: Tensor, k: int, axis: int) -> Tensor:
    """Repeat each entry ``k`` times along ``axis`` (nearest-neighbor upsample)."""
    axis = axis % x.ndim
    out = Tensor(np.repeat(x.data, k, axis=axis))
    in_shape = x.shape

    def backward(g):
        gshape = in_shape[: axis + 1] + (k,) + in_shape[axis + 1 :]
        return (g.reshape(gshape).sum(axis=axis + 1),)

    return _record(out, (x,), backward)


def _getitem(x: Tensor, key) -> Tensor:
    out_data = x.data[key]
    if isinstance(key, tuple):
        for k in key:
            if isinstance(k, (np.ndarray, list)):
                raise ShapeMismatchError("tensor indexing supports ints and slices only")
    out = Tensor(np.ascontiguousarray(out_data))
    in_shape = x.shape
    dtype = x.data.dtype

    def backward(g):
        gx = np.zeros(in_shape, dtype=dtype)
        gx[key] += g
        return (gx,)

    return _record(out, (x,), backward)


def stop_gradient(x: Tensor) -> Tensor:
    return x.detach()


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Relative error per coordinate is |analytic - numeric| / (|numeric| + 1e-8).
    ``x`` should be float64; eps defaults to 1e-4.
    """
    if x.data.dtype != np.float64:
        raise ShapeMismatchError("grad_check requires a float64 input tensor")
    probe = Tensor(x.data.copy(), requires_grad=True)
    with GradTape() as tape:
        y = f(probe)
        if y.size != 1:
            raise ShapeMismatchError("grad_check: f must be scalar-valued")
        tape.backward(y)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    flat = x.data.reshape(-1).copy()
    numeric = np.zeros_like(flat)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        hi = f(Tensor(flat.reshape(x.shape))).item()
        flat[idx] = orig - eps
        lo = f(Tensor(flat.reshape(x.shape))).item()
        flat[idx] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NonFiniteError("grad_check: non-finite perturbation result")
        numeric[idx] = (hi - lo) / (2.0 * eps)
    numeric = numeric.reshape(x.shape)
    rel = np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)
    return float(rel.max())
