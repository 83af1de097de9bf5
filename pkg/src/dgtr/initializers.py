"""Deterministic parameter initialization.

Every tensor draws from its own SplitMix64 substream, keyed by the model
seed and a running tensor index, so adding parameters at the end of a model
does not reshuffle earlier ones.  Random draws are rounded through float32
(see ``Stream.normal_f32``) so a freshly initialized model is exactly
representable in the float32 checkpoint format.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .rng import TAG_PARAMS, Stream, substream


class ParamBuilder:
    """Accumulates named parameter tensors with seeded initialization."""

    def __init__(self, seed: int):
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self._index = 0

    def _stream(self) -> Stream:
        stream = Stream(substream(self.seed, TAG_PARAMS, self._index))
        self._index += 1
        return stream

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def glorot(self, name: str, shape: tuple[int, ...],
               fan_in: int | None = None, fan_out: int | None = None,
               scale: float = 1.0) -> Tensor:
        """Glorot-normal weight: std = scale * sqrt(2 / (fan_in + fan_out))."""
        if fan_in is None:
            fan_in = int(np.prod(shape[:-1]))
        if fan_out is None:
            fan_out = shape[-1]
        std = scale * np.sqrt(2.0 / (fan_in + fan_out))
        stream = self._stream()
        data = (stream.normal_f32(int(np.prod(shape))) * np.float64(np.float32(std))).reshape(shape)
        # Product of two float32-representable values may pick up sub-float32
        # bits; round once more so checkpoints stay lossless for fresh models.
        data = data.astype(np.float32).astype(np.float64)
        return self._register(name, data)

    def normal(self, name: str, shape: tuple[int, ...], std: float) -> Tensor:
        stream = self._stream()
        data = (stream.normal_f32(int(np.prod(shape))) * np.float64(np.float32(std))).reshape(shape)
        data = data.astype(np.float32).astype(np.float64)
        return self._register(name, data)

    def constant(self, name: str, data) -> Tensor:
        arr = np.asarray(data, dtype=np.float64)
        return self._register(name, arr.astype(np.float32).astype(np.float64))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, np.ones(shape))
