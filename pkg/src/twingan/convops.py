"""Raw 2-D cross-correlation kernels on numpy arrays.

Three routines cover forward convolution and both of its adjoints; the
autodiff layer composes them into conv2d and conv2d_transpose. All arrays
are NCHW. Kernel layouts:

    forward correlation: [out_ch, in_ch, kh, kw]
    (the transposed op in the engine reads the same rank-4 tensor as
    [in_ch, out_ch, kh, kw], which is what makes the adjoint identity
    hold with one shared kernel tensor)

Windows are extracted as strided views and contracted with tensordot, so
the fallback loops live only in the scatter of corr_input_grad.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _check_geometry(stride: int, pad: int) -> None:
    if not isinstance(stride, int) or stride < 1:
        raise ShapeError(f"stride must be a positive int, got {stride!r}")
    if not isinstance(pad, int) or pad < 0:
        raise ShapeError(f"pad must be a non-negative int, got {pad!r}")


def _pad2d(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def out_size(n: int, k: int, stride: int, pad: int) -> int:
    """Spatial output size of a VALID correlation after padding."""
    return (n + 2 * pad - k) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Read-only strided view of all correlation windows.

    Shape (b, c, oh, ow, kh, kw) over the already padded input.
    """
    b, c, hp, wp = xp.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    sb, sc, sh, sw = xp.strides
    shape = (b, c, oh, ow, kh, kw)
    strides = (sb, sc, sh * stride, sw * stride, sh, sw)
    return np.lib.stride_tricks.as_strided(xp, shape, strides, writeable=False)


def corr_forward(x: np.ndarray, k: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Cross-correlate x [b,ci,h,w] with k [co,ci,kh,kw] -> [b,co,oh,ow]."""
    _check_geometry(stride, pad)
    if x.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"conv expects 4-D input and kernel, got {x.shape} and {k.shape}")
    b, ci, h, w = x.shape
    co, kci, kh, kw = k.shape
    if kci != ci:
        raise ShapeError(f"kernel expects {kci} input channels, input has {ci}")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(
            f"padded input {h + 2 * pad}x{w + 2 * pad} smaller than kernel {kh}x{kw}"
        )
    xp = _pad2d(x, pad)
    win = _windows(xp, kh, kw, stride)
    # contract (ci, kh, kw); result (b, oh, ow, co)
    y = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def corr_input_grad(
    gy: np.ndarray, k: np.ndarray, stride: int, pad: int, in_hw: tuple[int, int]
) -> np.ndarray:
    """Adjoint of corr_forward with respect to its input.

    Scatters gy [b,co,oh,ow] back through k [co,ci,kh,kw] onto an input of
    spatial size in_hw. Also serves as the forward pass of the transposed
    convolution, in which case in_hw = ((oh-1)*stride - 2*pad + kh, ...).
    """
    _check_geometry(stride, pad)
    b, co, oh, ow = gy.shape
    kco, ci, kh, kw = k.shape
    if kco != co:
        raise ShapeError(f"kernel has {kco} output channels, gradient has {co}")
    h, w = in_hw
    hp, wp = h + 2 * pad, w + 2 * pad
    if h < 1 or w < 1:
        raise ShapeError(f"target spatial size {h}x{w} must be positive")
    if (oh - 1) * stride + kh > hp or (ow - 1) * stride + kw > wp:
        raise ShapeError(
            f"output {oh}x{ow} at stride {stride} does not fit padded input {hp}x{wp}"
        )
    # contract over co; contrib[b, oh, ow, ci, i, j]
    contrib = np.tensordot(gy, k, axes=([1], [0]))
    gxp = np.zeros((b, ci, hp, wp), dtype=gy.dtype)
    he = (oh - 1) * stride + 1
    we = (ow - 1) * stride + 1
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + he : stride, j : j + we : stride] += contrib[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if pad == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, pad : hp - pad, pad : wp - pad])


def corr_kernel_grad(
    x: np.ndarray, gy: np.ndarray, stride: int, pad: int, khw: tuple[int, int]
) -> np.ndarray:
    """Adjoint of corr_forward with respect to the kernel.

    x is the forward input [b,ci,h,w], gy the output gradient [b,co,oh,ow];
    returns [co,ci,kh,kw].
    """
    _check_geometry(stride, pad)
    kh, kw = khw
    xp = _pad2d(x, pad)
    win = _windows(xp, kh, kw, stride)
    if win.shape[2] != gy.shape[2] or win.shape[3] != gy.shape[3]:
        raise ShapeError(
            f"output gradient spatial {gy.shape[2:]} does not match windows {win.shape[2:4]}"
        )
    # contract (b, oh, ow); result (co, ci, kh, kw)
    return np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))
