"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray plus the bookkeeping needed to run backward():
its parent tensors and a vector-Jacobian closure. Graphs are implicit,
acyclic by construction, and single-use: build a scalar loss, call
backward(loss), read gradients off the leaves. Repeated backward passes
overwrite leaf gradients rather than accumulating across calls.

Every op validates shapes and dtypes up front and checks its output for
NaN/Inf; non-finite values raise NonFiniteError instead of propagating
silently. All ops preserve the dtype of their inputs (float32 for
training, float64 for gradient checks).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import convops
from .errors import NonFiniteError, ShapeError, UsageError
from .rng import RngStream

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_float_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


class Tensor:
    """An ndarray with an autodiff history.

    data is treated as immutable once the tensor exists; the two sanctioned
    exceptions are optimizer updates to parameters and the in-place probes
    of the finite-difference checker, both of which own their tensors.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_float_array(data)
        _require_finite(arr, "tensor input")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's data, with no history."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._vjp = None
        return out

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __mul__(self, c) -> "Tensor":
        return scale(self, c)

    __rmul__ = __mul__


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    _require_finite(data, "op output")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = parents if out.requires_grad else ()
    out._vjp = vjp if out.requires_grad else None
    return out


def _check_same_dtype(*tensors: Tensor) -> None:
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(f"mixed dtypes in op: {dt} vs {t.dtype}")


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    _check_same_shape(a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    _check_same_shape(a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def neg(x: Tensor) -> Tensor:
    return _make(-x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, c) -> Tensor:
    """Multiply by a python scalar constant (not a tensor)."""
    c = float(c)
    if not np.isfinite(c):
        raise NonFiniteError("scale constant is not finite")
    return _make(x.data * c, (x,), lambda g: (g * c,))


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def vjp(g):
        return (np.full(x.shape, g, dtype=x.dtype),)

    return _make(out, (x,), vjp)


def mean_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    n = x.size

    def vjp(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return _make(out, (x,), vjp)


def l1_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference, reduced over every element.

    The subgradient at ties (a == b) is taken as 0.
    """
    _check_same_dtype(a, b)
    _check_same_shape(a, b)
    diff = a.data - b.data
    out = np.asarray(np.abs(diff).mean(), dtype=a.dtype)
    n = diff.size

    def vjp(g):
        s = np.sign(diff) * (g / n)
        return (s, -s)

    return _make(out, (a, b), vjp)


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, x.dtype.type(1), x.dtype.type(slope))
    return _make(x.data * factor, (x,), lambda g: (g * factor,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1 - y * y),))


# ---------------------------------------------------------------------------
# structural ops


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two NCHW tensors along the channel axis."""
    _check_same_dtype(a, b)
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("concat_channels expects 4-D tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"batch/spatial mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[1]

    def vjp(g):
        return (g[:, :ca], g[:, ca:])

    return _make(np.concatenate([a.data, b.data], axis=1), (a, b), vjp)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias [c] to an NCHW tensor."""
    _check_same_dtype(x, bias)
    if x.ndim != 4 or bias.ndim != 1 or bias.shape[0] != x.shape[1]:
        raise ShapeError(f"bias {bias.shape} does not match channels of {x.shape}")

    def vjp(g):
        return (g, g.sum(axis=(0, 2, 3)))

    return _make(x.data + bias.data.reshape(1, -1, 1, 1), (x, bias), vjp)


def dropout(x: Tensor, rate: float, rng: RngStream | None, enabled: bool = True) -> Tensor:
    """Inverted dropout driven by an explicit random stream.

    Each element is zeroed with probability rate and survivors are scaled
    by 1/(1-rate), so the expectation matches the input. Disabled (or
    rate 0) is an exact identity and consumes no randomness.
    """
    if not (0.0 <= rate <= 1.0):
        raise UsageError(f"dropout rate must lie in [0, 1], got {rate}")
    if not enabled or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout with noise enabled needs an RngStream")
    if rate == 1.0:
        mask = np.zeros(x.shape, dtype=x.dtype)
        rng.uniform(x.shape)
    else:
        keep = rng.uniform(x.shape) >= rate
        mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# normalization


def channel_norm(x: Tensor, scale_t: Tensor, shift_t: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each channel over batch and spatial axes, then apply an
    affine scale and shift.

    Statistics are the biased mean/variance over axes (0, 2, 3); eps guards
    zero variance, so a constant channel maps to its shift value.
    """
    _check_same_dtype(x, scale_t, shift_t)
    if x.ndim != 4:
        raise ShapeError("channel_norm expects an NCHW tensor")
    c = x.shape[1]
    if scale_t.shape != (c,) or shift_t.shape != (c,):
        raise ShapeError(f"scale/shift must have shape ({c},)")
    axes = (0, 2, 3)
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True)
    istd = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xh = xc * istd
    y = xh * scale_t.data.reshape(1, c, 1, 1) + shift_t.data.reshape(1, c, 1, 1)
    n = x.shape[0] * x.shape[2] * x.shape[3]

    def vjp(g):
        dshift = g.sum(axis=axes)
        dscale = (g * xh).sum(axis=axes)
        gxh = g * scale_t.data.reshape(1, c, 1, 1)
        s1 = gxh.sum(axis=axes, keepdims=True)
        s2 = (gxh * xh).sum(axis=axes, keepdims=True)
        dx = (istd / n) * (n * gxh - s1 - xh * s2)
        return (dx, dscale, dshift)

    return _make(y, (x, scale_t, shift_t), vjp)


# ---------------------------------------------------------------------------
# convolutions


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Strided 2-D cross-correlation.

    x is [b, in_ch, h, w], kernel is [out_ch, in_ch, kh, kw]; output spatial
    size is floor((n + 2*pad - k) / stride) + 1 per axis.
    """
    _check_same_dtype(x, kernel)
    h, w = x.shape[2], x.shape[3]
    kh, kw = kernel.shape[2], kernel.shape[3]
    y = convops.corr_forward(x.data, kernel.data, stride, pad)

    def vjp(g):
        gx = (
            convops.corr_input_grad(g, kernel.data, stride, pad, (h, w))
            if x.requires_grad
            else None
        )
        gk = (
            convops.corr_kernel_grad(x.data, g, stride, pad, (kh, kw))
            if kernel.requires_grad
            else None
        )
        return (gx, gk)

    return _make(y, (x, kernel), vjp)


def conv2d_transpose(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Exact adjoint of conv2d with the same kernel tensor and geometry.

    x is [b, in_ch, h, w], kernel is [in_ch, out_ch, kh, kw]; output spatial
    size is (n - 1) * stride - 2*pad + k per axis, so stride 2 with k = 4,
    pad = 1 doubles the resolution.
    """
    _check_same_dtype(x, kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d_transpose expects 4-D input and kernel")
    if kernel.shape[0] != x.shape[1]:
        raise ShapeError(
            f"kernel expects {kernel.shape[0]} input channels, input has {x.shape[1]}"
        )
    h, w = x.shape[2], x.shape[3]
    kh, kw = kernel.shape[2], kernel.shape[3]
    out_h = (h - 1) * stride - 2 * pad + kh
    out_w = (w - 1) * stride - 2 * pad + kw
    y = convops.corr_input_grad(x.data, kernel.data, stride, pad, (out_h, out_w))

    def vjp(g):
        gx = convops.corr_forward(g, kernel.data, stride, pad) if x.requires_grad else None
        gk = (
            convops.corr_kernel_grad(g, x.data, stride, pad, (kh, kw))
            if kernel.requires_grad
            else None
        )
        return (gx, gk)

    return _make(y, (x, kernel), vjp)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Populate grad on every requires_grad leaf reachable from loss.

    loss must be a scalar (shape ()). Each graph node is visited exactly
    once in reverse topological order; leaf gradients are overwritten, so
    separate backward calls never accumulate into each other.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor")
    if loss.data.ndim != 0:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any requires_grad tensor")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            _require_finite(g, "leaf gradient")
            node.grad = g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            # out-of-place: vjps may hand back views or shared arrays
            grads[id(parent)] = pg if acc is None else acc + pg
