"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .engine import Tensor, backward
from .errors import UsageError
from .rng import RngStream

# Relative error uses denominator max(|analytic|, |numeric|, FLOOR): the
# floor keeps coordinates where both gradients are near zero from blowing
# up a ratio of two roundoff-sized numbers.
REL_ERR_FLOOR = 1e-6


def check_gradients(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    coords_per_input: int | None = None,
    rng: RngStream | None = None,
) -> float:
    """Compare autodiff gradients of f against central differences.

    Args:
        f: maps the given tensors to a scalar Tensor. Must be a pure
            function of its inputs; anything stochastic inside must be
            frozen (e.g. clone an RngStream per call).
        inputs: float64 leaf tensors with requires_grad=True. Their data
            is perturbed in place during probing and restored afterwards.
        eps: probe half-step for (f(x+eps) - f(x-eps)) / (2*eps).
        coords_per_input: probe at most this many coordinates per input,
            sampled without replacement; None probes every coordinate.
        rng: stream for coordinate sampling (required if sampling).

    Returns:
        The maximum relative error over all probed coordinates, where
        rel = |a - n| / max(|a|, |n|, REL_ERR_FLOOR).
    """
    inputs = list(inputs)
    if not inputs:
        raise UsageError("check_gradients needs at least one input tensor")
    for t in inputs:
        if not isinstance(t, Tensor) or not t.requires_grad:
            raise UsageError("inputs must be Tensors with requires_grad=True")
        if t.dtype != np.float64:
            raise UsageError("finite differences need float64 inputs")
    if coords_per_input is not None and rng is None:
        raise UsageError("coordinate sampling needs an rng")

    out = f(*inputs)
    if out.data.ndim != 0:
        raise UsageError("f must return a scalar tensor")
    backward(out)
    analytic = []
    for t in inputs:
        if t.grad is None:
            raise UsageError("f did not propagate a gradient to every input")
        analytic.append(np.array(t.grad, dtype=np.float64, copy=True))

    max_rel = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        n_coords = flat.size
        if coords_per_input is None or coords_per_input >= n_coords:
            idxs = np.arange(n_coords)
        else:
            idxs = rng.permutation(n_coords)[:coords_per_input]
        a_flat = a.reshape(-1)
        for i in idxs:
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = f(*inputs).item()
            flat[i] = saved - eps
            f_minus = f(*inputs).item()
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(a_flat[i]), abs(numeric), REL_ERR_FLOOR)
            rel = abs(a_flat[i] - numeric) / denom
            if rel > max_rel:
                max_rel = rel
    return max_rel
