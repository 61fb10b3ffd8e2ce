"""Training configuration and the closed set of ablation variants."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .data import SplitSpec
from .losses import LossWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    """Which parts of the model a variant keeps.

    streams: ``"both"``, ``"visual"`` or ``"temporal"``.
    generators: ``"none"``, ``"mse"`` (regression, no discriminator) or ``"gan"``.
    joint: False trains the GANs first, freezes them, then fits the classifier
    on generated embeddings.
    """

    streams: str
    attention: bool
    generators: str
    joint: bool
    regularizer: bool
    description: str = ""

    @property
    def uses_visual(self) -> bool:
        return self.streams in ("both", "visual")

    @property
    def uses_temporal(self) -> bool:
        return self.streams in ("both", "temporal")

    @property
    def adversarial(self) -> bool:
        return self.generators == "gan"


VARIANTS: dict[str, VariantSpec] = {
    "a": VariantSpec("visual", False, "none", True, False, "classifier, visual context only"),
    "b": VariantSpec("temporal", False, "none", True, False, "classifier, temporal context only"),
    "c": VariantSpec("both", False, "none", True, False, "classifier, concatenated two-stream context"),
    "d": VariantSpec("visual", False, "mse", True, False, "(a) + visual generator trained with MSE"),
    "e": VariantSpec("temporal", False, "mse", True, False, "(b) + temporal generator trained with MSE"),
    "f": VariantSpec("both", False, "mse", True, False, "(c) + both generators trained with MSE"),
    "g": VariantSpec("both", True, "mse", True, False, "(f) + attention fusion"),
    "h": VariantSpec("visual", False, "gan", False, True, "visual GAN, classifier trained separately"),
    "i": VariantSpec("temporal", False, "gan", False, True, "temporal GAN, classifier trained separately"),
    "j": VariantSpec("both", True, "gan", False, True, "two-stream GANs, classifier trained separately"),
    "k": VariantSpec("visual", False, "gan", True, False, "joint visual GAN without regulariser"),
    "l": VariantSpec("temporal", False, "gan", True, False, "joint temporal GAN without regulariser"),
    "m": VariantSpec("visual", False, "gan", True, True, "joint visual GAN"),
    "n": VariantSpec("temporal", False, "gan", True, True, "joint temporal GAN"),
    "o": VariantSpec("both", True, "gan", True, False, "full model without regulariser"),
    "full": VariantSpec("both", True, "gan", True, True, "full model"),
}


def get_variant(name: str) -> VariantSpec:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    epochs: int = 40
    batch_size: int = 32
    lr: float = 2e-4
    decay: float = 8e-9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_dim: int = 300
    attention_hidden: tuple[int, ...] = (16,)
    split: SplitSpec = field(default_factory=SplitSpec)
    seed: int = 0
    variant: str = "full"
    generator_objective: str = "non_saturating"  # or "minimax"
    regularizer_mode: str = "similarity"  # or "distance"
    literal_attention: bool = False
    disc_updates_context: bool = False
    eval_every_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden dim must be >= 1, got {self.hidden_dim}")
        if self.generator_objective not in ("non_saturating", "minimax"):
            raise ConfigError(f"unknown generator objective {self.generator_objective!r}")
        if self.regularizer_mode not in ("similarity", "distance"):
            raise ConfigError(f"unknown regulariser mode {self.regularizer_mode!r}")
        get_variant(self.variant)

    @property
    def variant_spec(self) -> VariantSpec:
        return get_variant(self.variant)

    def effective_weights(self) -> LossWeights:
        """Loss weights with the terms a variant does not have forced to zero."""
        v = self.variant_spec
        w = self.weights
        has_gen = v.generators != "none"
        return LossWeights(
            w.w_v if has_gen and v.uses_visual else 0.0,
            w.w_tp if has_gen and v.uses_temporal else 0.0,
            w.w_c,
            w.w_r if v.regularizer else 0.0,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attention_hidden"] = list(self.attention_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "weights" in d:
            d["weights"] = _strict(LossWeights, d["weights"], "weights")
        if "split" in d:
            d["split"] = _strict(SplitSpec, d["split"], "split")
        if "attention_hidden" in d:
            d["attention_hidden"] = tuple(int(x) for x in d["attention_hidden"])
        return cls(**d)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode()).digest()

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def _strict(cls, d, where):
    if isinstance(d, cls):
        return d
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**d)
