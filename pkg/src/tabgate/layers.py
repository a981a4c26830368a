"""Primitive layers: leaky gate, ghost batch norm, linear, field embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .module import Buffer, Module
from .optim import Parameter

DEFAULT_LEAKY_SLOPE = 0.01
GBN_MOMENTUM = 0.1
GBN_EPS = 1e-5


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """y = x @ weight + bias, weight shape (in_width, out_width)."""

    def __init__(self, in_width: int, out_width: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(uniform_init(rng, (in_width, out_width), in_width))
        self.bias = Parameter(uniform_init(rng, (out_width,), in_width))

    def forward(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.weight.tensor), self.bias.tensor)


class LeakyGate(Module):
    """Per-column affine transform followed by LeakyReLU.

    Column i passes a row's value when w_i * x_i + b_i > 0 and leaks it
    (attenuated by the slope) otherwise. Starts fully open: w = 1, b = 0.
    """

    def __init__(self, width: int, slope: float = DEFAULT_LEAKY_SLOPE):
        super().__init__()
        self.width = width
        self.slope = slope
        self.w = Parameter(np.ones(width))
        self.b = Parameter(np.zeros(width))

    def pre_activation(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.width:
            raise ShapeError("leaky_gate", x.data.shape, (self.width,))
        return ad.add(ad.mul(x, self.w.tensor), self.b.tensor)

    def forward(self, x: Tensor) -> Tensor:
        return ad.leaky_relu(self.pre_activation(x), self.slope)


@dataclass(frozen=True)
class Interval:
    """Real interval with open/closed endpoints; infinities mark unbounded sides."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi


FULL_LINE = Interval(-math.inf, math.inf)
EMPTY_SET = Interval(math.inf, -math.inf)


def gate_partition(w: float, b: float) -> tuple[Interval, Interval]:
    """Intervals of input values that pass vs leak through a gate column.

    Four cases by the sign of w (threshold t = -b / w where defined):
      w > 0         -> pass (t, +inf),  leak (-inf, t]
      w < 0         -> pass (-inf, t),  leak [t, +inf)
      w = 0, b > 0  -> pass everything, leak nothing
      w = 0, b <= 0 -> pass nothing,    leak everything
    """
    if w > 0:
        t = -b / w
        return Interval(t, math.inf), Interval(-math.inf, t, hi_closed=True)
    if w < 0:
        t = -b / w
        return Interval(-math.inf, t), Interval(t, math.inf, lo_closed=True)
    if b > 0:
        return FULL_LINE, EMPTY_SET
    return EMPTY_SET, FULL_LINE


class GhostBatchNorm(Module):
    """Batch norm whose train-mode statistics come from fixed-size sub-batches.

    The batch is split into consecutive sub-batches of ``ghost_size``. A
    ragged remainder of at least 2 rows is normalized on its own statistics;
    a remainder of exactly 1 row is merged into the previous sub-batch so
    variance stays defined. Running statistics are updated per sub-batch with
    momentum ``GBN_MOMENTUM`` using unbiased variance.
    """

    def __init__(self, width: int, ghost_size: int):
        super().__init__()
        if ghost_size < 2:
            raise ValueError(f"ghost_size must be >= 2, got {ghost_size}")
        self.width = width
        self.ghost_size = ghost_size
        self.scale = Parameter(np.ones(width))
        self.shift = Parameter(np.zeros(width))
        self.running_mean = Buffer(np.zeros(width))
        self.running_var = Buffer(np.ones(width))

    def _chunk_bounds(self, batch: int) -> list[tuple[int, int]]:
        g = self.ghost_size
        full, rem = divmod(batch, g)
        if rem == 0:
            return [(i * g, (i + 1) * g) for i in range(full)]
        if rem == 1:
            bounds = [(i * g, (i + 1) * g) for i in range(full - 1)]
            bounds.append(((full - 1) * g, batch))
            return bounds
        bounds = [(i * g, (i + 1) * g) for i in range(full)]
        bounds.append((full * g, batch))
        return bounds

    def _normalize_chunk(self, chunk: Tensor, rows: int) -> Tensor:
        # chunk is [..., rows, width]; normalize over the rows axis.
        mu, var = ad.batch_moments(chunk, axis=-2)
        self._update_running(mu.data, var.data, rows)
        return ad.div(ad.sub(chunk, mu), ad.sqrt(ad.affine(var, 1.0, GBN_EPS)))

    def _update_running(self, mu: np.ndarray, var: np.ndarray, rows: int):
        # mu/var arrive as [..., 1, width], possibly stacked over sub-batches.
        mus = mu.reshape(-1, self.width)
        unbiased = var.reshape(-1, self.width) * (rows / (rows - 1))
        m = GBN_MOMENTUM
        for k in range(mus.shape[0]):
            self.running_mean.data *= 1.0 - m
            self.running_mean.data += m * mus[k]
            self.running_var.data *= 1.0 - m
            self.running_var.data += m * unbiased[k]

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.width:
            raise ShapeError("ghost_batch_norm", x.data.shape, (-1, self.width))
        batch = x.data.shape[0]
        if self.training:
            if batch < 2:
                raise ValueError("ghost batch norm needs batch >= 2 in train mode")
            bounds = self._chunk_bounds(batch)
            equal = len({hi - lo for lo, hi in bounds}) == 1
            if equal:
                rows = bounds[0][1] - bounds[0][0]
                stacked = ad.reshape(x, (len(bounds), rows, self.width))
                normalized = ad.reshape(self._normalize_chunk(stacked, rows), (batch, self.width))
            else:
                # One vectorized block of equal sub-batches plus a ragged tail.
                tail_lo, tail_hi = bounds[-1]
                rows = bounds[0][1] - bounds[0][0]
                head = ad.reshape(x[:tail_lo], (len(bounds) - 1, rows, self.width))
                head_n = ad.reshape(self._normalize_chunk(head, rows), (tail_lo, self.width))
                tail = self._normalize_chunk(x[tail_lo:tail_hi], tail_hi - tail_lo)
                normalized = ad.concat([head_n, tail], axis=0)
        else:
            mu = Tensor(self.running_mean.data)
            std = Tensor(np.sqrt(self.running_var.data + GBN_EPS))
            normalized = ad.div(ad.sub(x, mu), std)
        return ad.add(ad.mul(normalized, self.scale.tensor), self.shift.tensor)


class CategoricalEmbedding(Module):
    """Embedding matrix of shape (m, cardinality); lookup selects one column."""

    def __init__(self, m: int, cardinality: int, rng: np.random.Generator, field: str = ""):
        super().__init__()
        if cardinality < 2:
            raise ValueError(f"categorical field {field!r} needs cardinality >= 2")
        self.field = field
        self.cardinality = cardinality
        self.table = Parameter(uniform_init(rng, (m, cardinality), m))

    def forward(self, codes: np.ndarray) -> Tensor:
        codes = np.asarray(codes)
        if codes.size and (codes.min() < 0 or codes.max() >= self.cardinality):
            bad = int(np.argmax((codes < 0) | (codes >= self.cardinality)))
            raise ValueError(
                f"field {self.field!r}: code {int(codes[bad])} out of range [0, {self.cardinality})"
            )
        return ad.embedding_lookup(self.table.tensor, codes)


class NumericEmbedding(Module):
    """Per-field vector; a value embeds as value * vector (linear in the value)."""

    def __init__(self, m: int, rng: np.random.Generator, field: str = ""):
        super().__init__()
        self.field = field
        self.vector = Parameter(uniform_init(rng, (m,), m))

    def forward(self, values: np.ndarray) -> Tensor:
        column = Tensor(np.asarray(values, dtype=np.float64).reshape(-1, 1))
        return ad.mul(column, self.vector.tensor)
