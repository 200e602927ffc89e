"""RMSProp updates and hard weight clipping.

The training scheme needs exactly these two pieces: a non-momentum
adaptive step (plain RMSProp) for both generator and critic parameters,
and elementwise clipping to [-c, c] applied to critic parameters only,
including their normalization affine terms.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .layers import ParamStore


def rmsprop_step(
    param: np.ndarray,
    grad: np.ndarray,
    acc: np.ndarray,
    lr: float,
    rho: float,
    eps: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One RMSProp update as a pure function.

    The accumulator update runs first, then the parameter step:

        acc'   = rho * acc + (1 - rho) * grad**2
        param' = param - lr * grad / (sqrt(acc') + eps)

    Returns (param', acc') without touching the inputs. The division is
    guarded so a zero gradient never produces NaN even with eps == 0.
    """
    if param.shape != grad.shape or param.shape != acc.shape:
        raise UsageError(
            f"param/grad/acc shapes differ: {param.shape}/{grad.shape}/{acc.shape}"
        )
    acc_new = rho * acc + (1.0 - rho) * (grad * grad)
    denom = np.sqrt(acc_new) + eps
    update = np.divide(
        lr * grad,
        np.where(denom > 0, denom, 1.0),
        out=np.zeros_like(param),
        where=denom > 0,
    )
    return param - update, acc_new


class RmsProp:
    """RMSProp state bound to one ParamStore.

    Keeps a squared-gradient accumulator per parameter (initialized to
    zero) and applies rmsprop_step to every parameter on step(). The
    accumulators never go negative and the update never introduces NaN
    for finite gradients.
    """

    def __init__(self, store: ParamStore, lr: float, rho: float, eps: float):
        if lr <= 0:
            raise UsageError(f"lr must be positive, got {lr}")
        if not (0.0 <= rho < 1.0):
            raise UsageError(f"rho must lie in [0, 1), got {rho}")
        if eps < 0:
            raise UsageError(f"eps must be non-negative, got {eps}")
        self.store = store
        self.lr = float(lr)
        self.rho = float(rho)
        self.eps = float(eps)
        self.acc: dict[str, np.ndarray] = {
            name: np.zeros_like(t.data) for name, t in store.items()
        }

    def step(self) -> None:
        """Update every parameter from its current gradient."""
        for name, t in self.store.items():
            if t.grad is None:
                raise UsageError(f"parameter '{name}' has no gradient; run backward first")
            if t.grad.shape != t.shape:
                raise UsageError(f"gradient shape mismatch on '{name}'")
            new_param, new_acc = rmsprop_step(
                t.data, t.grad.astype(t.dtype, copy=False), self.acc[name],
                self.lr, self.rho, self.eps,
            )
            t.data[...] = new_param
            self.acc[name] = new_acc

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: a.copy() for name, a in self.acc.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name in self.acc:
            if name not in arrays:
                raise UsageError(f"missing optimizer accumulator for '{name}'")
            arr = np.asarray(arrays[name])
            if arr.shape != self.acc[name].shape:
                raise UsageError(f"accumulator shape mismatch on '{name}'")
            if np.any(arr < 0):
                raise UsageError(f"negative accumulator for '{name}'")
            self.acc[name] = arr.astype(self.acc[name].dtype).copy()


def clip_weights(store: ParamStore, c: float) -> None:
    """Clamp every parameter in the store to [-c, c], in place.

    Applies to all roles, normalization scale/shift included. Idempotent:
    a second clip with the same c changes nothing.
    """
    if c <= 0:
        raise UsageError(f"clip bound must be positive, got {c}")
    for t in store.tensors():
        np.clip(t.data, -c, c, out=t.data)
