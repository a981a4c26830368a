"""Model configuration and assembly for the three gated architectures.

Families:
  * mlp-plus — embeddings flattened into one MLP+ block.
  * pnn      — a leaky gate feeds a product-interaction block into one MLP+
               column; a second MLP+ column reads the flat embeddings; logits
               are a learned convex mixture of the two columns.
  * autoint  — identical two-column layout with stacked multi-head
               self-attention replacing the product block.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import AttentionInteraction, MlpPlusBlock, ProductInteraction, product_feature_width
from .data import EncodedBatch, FeatureSchema
from .layers import DEFAULT_LEAKY_SLOPE, CategoricalEmbedding, LeakyGate, NumericEmbedding
from .module import Module
from .optim import Parameter
from .rng import derive_seed

MLP_LAYER_OPTIONS = (
    (256, 192, 128, 64),
    (512, 256, 128, 64),
    (512, 256, 128, 64, 32),
    (1024, 512, 256, 128),
)
DROPOUT_OPTIONS = (0.0, 0.25, 0.50, 0.75)
LR_OPTIONS = (0.1, 0.01, 0.001)
LR_STEP_OPTIONS = (10, 15, 20)
EMBED_SIZE_OPTIONS = (8, 16, 32)
PRODUCT_TYPE_OPTIONS = ("inner", "outer", "both")
PRODUCT_OUT_OPTIONS = (20, 40, 80, 120)
ATTN_LAYER_OPTIONS = (3, 4)
ATTN_HEAD_OPTIONS = (2, 3)
ATTN_DROPOUT_OPTIONS = (0.0, 0.1)
ATTN_ACTIVATION_OPTIONS = ("none", "leaky_relu")
RESIDUAL_OPTIONS = (True, False)

FAMILIES = ("mlp-plus", "pnn", "autoint")

N_CLASSES = 2


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    family: str
    embedding_size: int = 8
    mlp_layers: tuple[int, ...] = MLP_LAYER_OPTIONS[0]
    dropout: float = 0.0
    # pnn only
    product_type: Optional[str] = None
    product_out: Optional[int] = None
    # autoint only
    attn_layers: Optional[int] = None
    attn_heads: Optional[int] = None
    attn_dropout: Optional[float] = None
    attn_activation: Optional[str] = None
    attn_residual: Optional[bool] = None
    # ablation switches and misc
    use_skip: bool = True
    use_gate: bool = True
    n_classes: int = N_CLASSES
    leaky_slope: float = DEFAULT_LEAKY_SLOPE
    raw_numeric_input: bool = False

    def __post_init__(self):
        self.mlp_layers = tuple(self.mlp_layers)

    def validate(self):
        def check(value, options, axis):
            if value not in options:
                raise ConfigError(f"{axis} must be one of {list(options)}, got {value!r}")

        check(self.family, FAMILIES, "family")
        check(self.embedding_size, EMBED_SIZE_OPTIONS, "embedding_size")
        check(self.mlp_layers, MLP_LAYER_OPTIONS, "mlp_layers")
        check(self.dropout, DROPOUT_OPTIONS, "dropout")
        pnn_axes = {"product_type": self.product_type, "product_out": self.product_out}
        attn_axes = {
            "attn_layers": self.attn_layers,
            "attn_heads": self.attn_heads,
            "attn_dropout": self.attn_dropout,
            "attn_activation": self.attn_activation,
            "attn_residual": self.attn_residual,
        }
        if self.family == "pnn":
            check(self.product_type, PRODUCT_TYPE_OPTIONS, "product_type")
            check(self.product_out, PRODUCT_OUT_OPTIONS, "product_out")
        elif any(v is not None for v in pnn_axes.values()):
            raise ConfigError(f"product settings only valid for pnn, not {self.family}")
        if self.family == "autoint":
            check(self.attn_layers, ATTN_LAYER_OPTIONS, "attn_layers")
            check(self.attn_heads, ATTN_HEAD_OPTIONS, "attn_heads")
            check(self.attn_dropout, ATTN_DROPOUT_OPTIONS, "attn_dropout")
            check(self.attn_activation, ATTN_ACTIVATION_OPTIONS, "attn_activation")
            check(self.attn_residual, RESIDUAL_OPTIONS, "attn_residual")
        elif any(v is not None for v in attn_axes.values()):
            raise ConfigError(f"attention settings only valid for autoint, not {self.family}")
        if self.n_classes != N_CLASSES:
            raise ConfigError(f"only binary heads supported, got n_classes={self.n_classes}")
        if self.raw_numeric_input and self.family != "mlp-plus":
            raise ConfigError("raw_numeric_input is an mlp-plus option")
        return self

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["mlp_layers"] = list(self.mlp_layers)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        known = dict(d)
        layers = known.get("mlp_layers")
        if layers is not None:
            known["mlp_layers"] = tuple(layers)
        return cls(**known).validate()

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_json_dict(json.loads(text))


def _mlp_param_count(in_width: int, layers: tuple[int, ...], out_width: int) -> int:
    total = 0
    prev = in_width
    for width in layers:
        total += prev * width + width  # linear
        total += 2 * width  # ghost batch norm scale/shift
        prev = width
    return total + prev * out_width + out_width


def _mlp_plus_param_count(in_width: int, out_width: int, cfg: ModelConfig) -> int:
    total = _mlp_param_count(in_width, cfg.mlp_layers, out_width) + 1  # + mixture weight
    if cfg.use_gate:
        total += 2 * in_width  # main gate
    if cfg.use_skip:
        total += in_width * out_width + out_width  # skip linear
        if cfg.use_gate:
            total += 2 * in_width  # skip gate
    return total


def parameter_count(cfg: ModelConfig, n_categorical: int, cardinalities: list[int], n_numeric: int) -> int:
    """Closed-form learned-parameter count; matches the built model exactly."""
    m = cfg.embedding_size
    n_fields = n_categorical + n_numeric
    total = m * sum(cardinalities) + m * n_numeric  # embeddings
    if cfg.family == "mlp-plus":
        if cfg.raw_numeric_input:
            width = n_numeric + n_categorical * m
            total = m * sum(cardinalities)  # numeric embeddings absent
        else:
            width = n_fields * m
        return total + _mlp_plus_param_count(width, cfg.n_classes, cfg)
    flat = n_fields * m
    if cfg.family == "pnn":
        raw = product_feature_width(n_fields, m, cfg.product_type)
        interaction = raw * cfg.product_out + cfg.product_out
        col1_width = cfg.product_out
    else:
        per_layer = 3 * cfg.attn_heads * m * m + cfg.attn_heads * m * m
        if cfg.attn_residual:
            per_layer += m * m
        interaction = cfg.attn_layers * per_layer
        col1_width = flat
    total += interaction
    if cfg.use_gate:
        total += 2 * flat  # gate before the interaction block
    total += _mlp_plus_param_count(col1_width, cfg.n_classes, cfg)
    total += _mlp_plus_param_count(flat, cfg.n_classes, cfg)
    total += 1  # column mixture weight
    return total


class TabularModel(Module):
    """One of the three architectures, assembled per config and schema."""

    def __init__(self, config: ModelConfig, schema: FeatureSchema, ghost_size: int, seed: int):
        super().__init__()
        config.validate()
        self.config = config
        self.seed = seed
        self.ghost_size = ghost_size
        init_rng = np.random.default_rng(derive_seed(seed, "init"))
        self._dropout_rng = np.random.default_rng(derive_seed(seed, "dropout"))
        m = config.embedding_size
        slope = config.leaky_slope

        self.field_kinds = [f.kind for f in schema.fields]
        self.field_names = schema.field_names()
        cat_fields = schema.categorical_fields
        num_fields = schema.numeric_fields
        self.cat_embeddings = [
            CategoricalEmbedding(m, f.cardinality, init_rng, f.name) for f in cat_fields
        ]
        if config.family == "mlp-plus" and config.raw_numeric_input:
            self.num_embeddings = []
            flat_width = len(num_fields) + len(cat_fields) * m
        else:
            self.num_embeddings = [NumericEmbedding(m, init_rng, f.name) for f in num_fields]
            flat_width = len(schema.fields) * m
        self.n_fields = len(schema.fields)
        self.flat_width = flat_width

        def mlp_plus(in_width: int) -> MlpPlusBlock:
            return MlpPlusBlock(
                in_width,
                config.n_classes,
                config.mlp_layers,
                config.dropout,
                ghost_size,
                init_rng,
                slope,
                use_gate=config.use_gate,
                use_skip=config.use_skip,
            )

        if config.family == "mlp-plus":
            self.block = mlp_plus(flat_width)
        else:
            if config.use_gate:
                self.pre_gate = LeakyGate(flat_width, slope)
            if config.family == "pnn":
                self.interaction = ProductInteraction(
                    self.n_fields, m, config.product_type, config.product_out, init_rng
                )
                col1_width = config.product_out
            else:
                self.interaction = AttentionInteraction(
                    m,
                    config.attn_layers,
                    config.attn_heads,
                    config.attn_dropout,
                    config.attn_residual,
                    config.attn_activation,
                    init_rng,
                    slope,
                )
                col1_width = flat_width
            self.column1 = mlp_plus(col1_width)
            self.column2 = mlp_plus(flat_width)
            self.column_mix = Parameter(np.zeros(()))

    # ------------------------------------------------------------------
    def _embed_flat(self, batch: EncodedBatch) -> Tensor:
        """Per-field embeddings concatenated in schema field order."""
        pieces = []
        cat_i = 0
        num_i = 0
        m = self.config.embedding_size
        raw = self.config.raw_numeric_input and self.config.family == "mlp-plus"
        for kind in self.field_kinds:
            if kind == "categorical":
                emb = self.cat_embeddings[cat_i].forward(batch.cat_codes[:, cat_i])
                pieces.append(emb)
                cat_i += 1
            elif raw:
                pieces.append(Tensor(batch.numerics[:, num_i : num_i + 1]))
                num_i += 1
            else:
                pieces.append(self.num_embeddings[num_i].forward(batch.numerics[:, num_i]))
                num_i += 1
        return pieces[0] if len(pieces) == 1 else ad.concat(pieces, axis=1)

    def forward(self, batch: EncodedBatch) -> Tensor:
        """Logits [rows, n_classes]."""
        cfg = self.config
        flat = self._embed_flat(batch)
        if cfg.family == "mlp-plus":
            return self.block.forward(flat, self._dropout_rng)
        gated = self.pre_gate.forward(flat) if cfg.use_gate else flat
        fields = ad.reshape(gated, (batch.n_rows, self.n_fields, cfg.embedding_size))
        if cfg.family == "pnn":
            interacted = self.interaction.forward(fields)
        else:
            attended = self.interaction.forward(fields, self._dropout_rng)
            interacted = ad.reshape(attended, (batch.n_rows, self.flat_width))
        col1 = self.column1.forward(interacted, self._dropout_rng)
        col2 = self.column2.forward(flat, self._dropout_rng)
        beta = ad.sigmoid(self.column_mix.tensor)
        return ad.add(ad.mul(beta, col1), ad.mul(ad.affine(beta, -1.0, 1.0), col2))

    def predict_scores(self, batch: EncodedBatch) -> np.ndarray:
        """Positive-class probabilities (softmax over the two logits)."""
        logits = self.forward(batch)
        return ad.softmax(logits, axis=-1).data[:, 1].copy()


def build_model(config: ModelConfig, schema: FeatureSchema, ghost_size: int = 8, seed: int = 0) -> TabularModel:
    return TabularModel(config, schema, ghost_size, seed)
