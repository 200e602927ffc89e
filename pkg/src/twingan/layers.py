"""Parameter containers and weight initialization.

A ParamStore is an ordered name -> Tensor mapping holding the trainable
parameters of one network. Iteration order is insertion order, which fixes
both the initialization draw order and the checkpoint record order.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .engine import Tensor, channel_norm
from .errors import ShapeError, UsageError
from .rng import RngStream

__all__ = ["ParamStore", "init_weights", "channel_norm"]


class ParamStore:
    """Ordered collection of named trainable tensors.

    Names use dotted paths whose final component declares the role:
    ``.weight`` (conv kernels), ``.bias``, and the normalization affine
    pair ``.scale`` / ``.shift``. One optimizer owns updates; everything
    else treats the stored arrays as read-only.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...], dtype=np.float32) -> Tensor:
        if name in self._params:
            raise UsageError(f"duplicate parameter name '{name}'")
        role = name.rsplit(".", 1)[-1]
        if role not in ("weight", "bias", "scale", "shift"):
            raise UsageError(f"parameter '{name}' must end in .weight/.bias/.scale/.shift")
        t = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def tensors(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of all parameter arrays, keyed by name."""
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place from a name -> array mapping."""
        missing = set(self._params) - set(arrays)
        if missing:
            raise ShapeError(f"missing parameters: {sorted(missing)[:3]}...")
        for name, t in self._params.items():
            arr = np.asarray(arrays[name])
            if arr.shape != t.shape:
                raise ShapeError(
                    f"parameter '{name}' has shape {t.shape}, got {arr.shape}"
                )
            t.data[...] = arr.astype(t.dtype)


def init_weights(store: ParamStore, rng: RngStream, std: float = 0.02) -> None:
    """Initialize a store in insertion order from one random stream.

    Conv kernels (.weight) draw from a zero-mean Gaussian with the given
    std; biases and norm shifts start at zero, norm scales at one. Only
    weights consume randomness, so two inits with the same seed produce
    bit-identical parameters.
    """
    for name, t in store.items():
        role = name.rsplit(".", 1)[-1]
        if role == "weight":
            t.data[...] = rng.normal(0.0, std, t.shape).astype(t.dtype)
        elif role in ("bias", "shift"):
            t.data[...] = 0
        elif role == "scale":
            t.data[...] = 1
        else:  # pragma: no cover - add() already rejects unknown roles
            raise UsageError(f"cannot initialize parameter '{name}'")
