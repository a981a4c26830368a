"""Composite blocks: MLP sub-block, MLP+ block, product and attention interactions."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .layers import DEFAULT_LEAKY_SLOPE, GhostBatchNorm, LeakyGate, Linear, uniform_init
from .module import Module
from .optim import Parameter


class MlpBlock(Module):
    """Hidden layers of linear -> ghost batch norm -> leaky relu -> dropout,
    then a final linear with no activation or norm."""

    def __init__(
        self,
        in_width: int,
        layer_sizes: tuple[int, ...],
        out_width: int,
        dropout: float,
        ghost_size: int,
        rng: np.random.Generator,
        slope: float = DEFAULT_LEAKY_SLOPE,
    ):
        super().__init__()
        self.dropout = dropout
        self.slope = slope
        widths = [in_width, *layer_sizes]
        self.layers = [Linear(widths[i], widths[i + 1], rng) for i in range(len(layer_sizes))]
        self.norms = [GhostBatchNorm(w, ghost_size) for w in layer_sizes]
        self.final = Linear(widths[-1], out_width, rng)

    def forward(self, x: Tensor, rng: np.random.Generator) -> Tensor:
        for linear, norm in zip(self.layers, self.norms):
            x = linear.forward(x)
            x = norm.forward(x)
            x = ad.leaky_relu(x, self.slope)
            x = ad.dropout(x, self.dropout, rng, self.training)
        return self.final.forward(x)


class MlpPlusBlock(Module):
    """MLP sub-block plus a single-layer linear skip path, each behind its own
    leaky gate, combined by a learned convex mixture sigmoid(mix)."""

    def __init__(
        self,
        in_width: int,
        out_width: int,
        layer_sizes: tuple[int, ...],
        dropout: float,
        ghost_size: int,
        rng: np.random.Generator,
        slope: float = DEFAULT_LEAKY_SLOPE,
        use_gate: bool = True,
        use_skip: bool = True,
    ):
        super().__init__()
        self.in_width = in_width
        self.use_gate = use_gate
        self.use_skip = use_skip
        if use_gate:
            self.main_gate = LeakyGate(in_width, slope)
        self.mlp = MlpBlock(in_width, layer_sizes, out_width, dropout, ghost_size, rng, slope)
        if use_skip:
            if use_gate:
                self.skip_gate = LeakyGate(in_width, slope)
            self.skip = Linear(in_width, out_width, rng)
        # Mixture weight exists regardless of use_skip (dead when skip is off)
        # so toggling the skip path changes exactly the linear + gate counts.
        self.mix = Parameter(np.zeros(()))  # sigmoid(0) = 0.5 at start

    def forward(self, x: Tensor, rng: np.random.Generator) -> Tensor:
        if x.data.shape[-1] != self.in_width:
            raise ShapeError("mlp_plus", x.data.shape, (-1, self.in_width))
        main_in = self.main_gate.forward(x) if self.use_gate else x
        main = self.mlp.forward(main_in, rng)
        if not self.use_skip:
            return main
        skip_in = self.skip_gate.forward(x) if self.use_gate else x
        skip = self.skip.forward(skip_in)
        alpha = ad.sigmoid(self.mix.tensor)
        return ad.add(ad.mul(alpha, main), ad.mul(ad.affine(alpha, -1.0, 1.0), skip))


def inner_product_features(e: Tensor) -> Tensor:
    """Dot products of all unordered field pairs (i < j), lexicographic order."""
    if e.data.ndim != 3:
        raise ShapeError("inner_product", e.data.shape)
    batch, n_fields, _ = e.data.shape
    if n_fields < 2:
        raise ValueError(f"inner products need at least 2 fields, got {n_fields}")
    dots = ad.matmul(e, ad.transpose(e, (0, 2, 1)))
    flat = ad.reshape(dots, (batch, n_fields * n_fields))
    cols = [i * n_fields + j for i in range(n_fields) for j in range(i + 1, n_fields)]
    return ad.take_columns(flat, cols)


def outer_product_features(e: Tensor) -> Tensor:
    """Flattened outer product of the field-sum vector with itself."""
    if e.data.ndim != 3:
        raise ShapeError("outer_product", e.data.shape)
    batch, _, m = e.data.shape
    s = ad.sum_(e, axis=1)
    left = ad.reshape(s, (batch, m, 1))
    right = ad.reshape(s, (batch, 1, m))
    return ad.reshape(ad.mul(left, right), (batch, m * m))


def product_feature_width(n_fields: int, m: int, product_type: str) -> int:
    inner = n_fields * (n_fields - 1) // 2
    outer = m * m
    return {"inner": inner, "outer": outer, "both": inner + outer}[product_type]


class ProductInteraction(Module):
    """Inner/outer/both product features followed by a learned map to out_width."""

    def __init__(
        self,
        n_fields: int,
        m: int,
        product_type: str,
        out_width: int,
        rng: np.random.Generator,
    ):
        super().__init__()
        if product_type not in ("inner", "outer", "both"):
            raise ValueError(f"unknown product type {product_type!r}")
        self.product_type = product_type
        raw = product_feature_width(n_fields, m, product_type)
        self.proj = Linear(raw, out_width, rng)

    def forward(self, e: Tensor) -> Tensor:
        if self.product_type == "inner":
            feats = inner_product_features(e)
        elif self.product_type == "outer":
            feats = outer_product_features(e)
        else:
            feats = ad.concat([inner_product_features(e), outer_product_features(e)], axis=1)
        return self.proj.forward(feats)


class AttentionLayer(Module):
    """One multi-head self-attention layer over fields: [batch, F, m] -> same.

    Each head projects with full-width (m x m) matrices; head outputs are
    concatenated and projected back to m. Scores use scaled dot products
    (1/sqrt(m)); dropout applies to the attention weights in train mode.
    """

    def __init__(
        self,
        m: int,
        n_heads: int,
        dropout: float,
        residual: bool,
        activation: str,
        rng: np.random.Generator,
        slope: float = DEFAULT_LEAKY_SLOPE,
    ):
        super().__init__()
        self.m = m
        self.n_heads = n_heads
        self.dropout = dropout
        self.residual = residual
        self.activation = activation
        self.slope = slope
        self.query = [Parameter(uniform_init(rng, (m, m), m)) for _ in range(n_heads)]
        self.key = [Parameter(uniform_init(rng, (m, m), m)) for _ in range(n_heads)]
        self.value = [Parameter(uniform_init(rng, (m, m), m)) for _ in range(n_heads)]
        self.out = Parameter(uniform_init(rng, (n_heads * m, m), n_heads * m))
        if residual:
            self.res = Parameter(uniform_init(rng, (m, m), m))

    def forward(self, e: Tensor, rng: np.random.Generator) -> Tensor:
        batch, n_fields, m = e.data.shape
        flat = ad.reshape(e, (batch * n_fields, m))
        scale = 1.0 / math.sqrt(m)
        heads = []
        for h in range(self.n_heads):
            q = ad.reshape(ad.matmul(flat, self.query[h].tensor), (batch, n_fields, m))
            k = ad.reshape(ad.matmul(flat, self.key[h].tensor), (batch, n_fields, m))
            v = ad.reshape(ad.matmul(flat, self.value[h].tensor), (batch, n_fields, m))
            scores = ad.affine(ad.matmul(q, ad.transpose(k, (0, 2, 1))), scale, 0.0)
            weights = ad.softmax(scores, axis=-1)
            weights = ad.dropout(weights, self.dropout, rng, self.training)
            heads.append(ad.matmul(weights, v))
        stacked = heads[0] if self.n_heads == 1 else ad.concat(heads, axis=2)
        merged = ad.reshape(stacked, (batch * n_fields, self.n_heads * m))
        out = ad.matmul(merged, self.out.tensor)
        if self.residual:
            out = ad.add(out, ad.matmul(flat, self.res.tensor))
        out = ad.reshape(out, (batch, n_fields, m))
        if self.activation == "leaky_relu":
            out = ad.leaky_relu(out, self.slope)
        return out

    def attention_weights(self, e: Tensor) -> list[np.ndarray]:
        """Per-head softmax weight arrays for inspection (no dropout)."""
        batch, n_fields, m = e.data.shape
        flat = e.data.reshape(batch * n_fields, m)
        result = []
        for h in range(self.n_heads):
            q = (flat @ self.query[h].data).reshape(batch, n_fields, m)
            k = (flat @ self.key[h].data).reshape(batch, n_fields, m)
            scores = q @ k.transpose(0, 2, 1) / math.sqrt(m)
            shifted = np.exp(scores - scores.max(axis=-1, keepdims=True))
            result.append(shifted / shifted.sum(axis=-1, keepdims=True))
        return result


class AttentionInteraction(Module):
    """Stack of attention layers mapping [batch, F, m] -> [batch, F, m]."""

    def __init__(
        self,
        m: int,
        n_layers: int,
        n_heads: int,
        dropout: float,
        residual: bool,
        activation: str,
        rng: np.random.Generator,
        slope: float = DEFAULT_LEAKY_SLOPE,
    ):
        super().__init__()
        self.layers = [
            AttentionLayer(m, n_heads, dropout, residual, activation, rng, slope)
            for _ in range(n_layers)
        ]

    def forward(self, e: Tensor, rng: np.random.Generator) -> Tensor:
        for layer in self.layers:
            e = layer.forward(e, rng)
        return e
