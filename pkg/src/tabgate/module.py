"""Minimal parameter-container base class.

Modules discover their parameters, buffers, and sub-modules by walking
instance attributes in definition order, which makes parameter paths (and
hence initialization order and checkpoints) deterministic.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .optim import Parameter


class Buffer:
    """Non-learned persistent state (e.g. running statistics)."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)


class Module:
    def __init__(self):
        self.training = True

    def _children(self):
        for attr, value in vars(self).items():
            if isinstance(value, (Parameter, Buffer, Module)):
                yield attr, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Buffer, Module)):
                        yield f"{attr}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, child in self._children():
            path = f"{prefix}.{name}" if prefix else name
            if isinstance(child, Parameter):
                child.name = path
                yield path, child
            elif isinstance(child, Module):
                yield from child.named_parameters(path)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_state(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        """Parameters plus buffers, as (dotted path, array) pairs."""
        for name, child in self._children():
            path = f"{prefix}.{name}" if prefix else name
            if isinstance(child, Parameter):
                yield path, child.tensor.data
            elif isinstance(child, Buffer):
                yield path, child.data
            elif isinstance(child, Module):
                yield from child.named_state(path)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return dict(self.named_state())

    def load_state(self, state: dict[str, np.ndarray]):
        own = self.state_arrays()
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for path, arr in own.items():
            src = np.asarray(state[path], dtype=np.float64)
            if src.shape != arr.shape:
                raise ValueError(f"{path}: shape {src.shape} != expected {arr.shape}")
            np.copyto(arr, src)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {path: arr.copy() for path, arr in self.named_state()}

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self._children():
            if isinstance(child, Module):
                child.train(mode)
        return self

    def eval(self):
        return self.train(False)
