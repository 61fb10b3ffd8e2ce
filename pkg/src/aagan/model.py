"""Parameter bundle for the whole architecture and the forward passes shared by training and evaluation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as tn
from .config import TrainConfig, VariantSpec, get_variant
from .heads import (ClassifierParams, DiscriminatorParams, GeneratorParams, classifier_logits,
                    discriminator_steps, generator_forward, predict_from_logits)
from .sequence import (AttentionParams, LstmParams, attention_energies, attention_weights,
                       encode_stream, fuse_context)

GROUPS = ("enc_v", "enc_tp", "att", "gen_v", "gen_tp", "disc_v", "disc_tp", "cls")
DISCRIMINATOR_GROUPS = ("disc_v", "disc_tp")
SHARED_GROUPS = ("enc_v", "enc_tp", "att")


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass(frozen=True)
class ModelArch:
    variant: str
    num_classes: int
    feature_dim: int
    hidden_dim: int
    attention_hidden: tuple[int, ...] = (16,)
    literal_attention: bool = False

    @property
    def spec(self) -> VariantSpec:
        return get_variant(self.variant)

    @property
    def context_dim(self) -> int:
        v = self.spec
        return (2 if v.streams == "both" else 1) * self.hidden_dim

    @property
    def classifier_input_dim(self) -> int:
        v = self.spec
        if v.joint:
            return self.context_dim
        return (2 if v.streams == "both" else 1) * self.feature_dim

    def to_dict(self):
        d = asdict(self)
        d["attention_hidden"] = list(self.attention_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["attention_hidden"] = tuple(d.get("attention_hidden", (16,)))
        return cls(**d)


@dataclass(eq=False)
class ModelBundle:
    arch: ModelArch
    params: dict[str, np.ndarray]  # insertion order is the declaration order

    def groups(self) -> set[str]:
        return {group_of(n) for n in self.params}

    def names_in(self, groups) -> list[str]:
        return [n for n in self.params if group_of(n) in groups]

    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.params.values()))

    def copy(self) -> "ModelBundle":
        return ModelBundle(self.arch, {k: v.copy() for k, v in self.params.items()})

    def equals(self, other: "ModelBundle") -> bool:
        return (self.arch == other.arch and list(self.params) == list(other.params)
                and all(np.array_equal(self.params[k], other.params[k]) for k in self.params))


def init_bundle(arch: ModelArch, seed: int) -> ModelBundle:
    """Seeded uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    v = arch.spec
    D, H, C = arch.feature_dim, arch.hidden_dim, arch.context_dim
    p: dict[str, np.ndarray] = {}
    if v.uses_visual:
        p.update(LstmParams.init(rng, D, H).items("enc_v"))
    if v.uses_temporal:
        p.update(LstmParams.init(rng, D, H).items("enc_tp"))
    if v.attention:
        p.update(AttentionParams.init(rng, H, arch.attention_hidden).items("att"))
    if v.generators != "none":
        if v.uses_visual:
            p.update(GeneratorParams.init(rng, C, H, D).items("gen_v"))
        if v.uses_temporal:
            p.update(GeneratorParams.init(rng, C, H, D).items("gen_tp"))
    if v.adversarial:
        if v.uses_visual:
            p.update(DiscriminatorParams.init(rng, C, D, H).items("disc_v"))
        if v.uses_temporal:
            p.update(DiscriminatorParams.init(rng, C, D, H).items("disc_tp"))
    p.update(ClassifierParams.init(rng, arch.classifier_input_dim, H, arch.num_classes).items("cls"))
    return ModelBundle(arch, p)


def arch_from_config(config: TrainConfig, num_classes: int, feature_dim: int) -> ModelArch:
    return ModelArch(config.variant, num_classes, feature_dim, config.hidden_dim,
                     tuple(config.attention_hidden), config.literal_attention)


@dataclass
class Context:
    context: tn.Tensor  # (B, T, context_dim)
    alpha_v: tn.Tensor | None = None
    alpha_tp: tn.Tensor | None = None


def build_context(P: dict, arch: ModelArch, obs_v, obs_tp) -> Context:
    """Context sequence for whichever streams the variant keeps.

    Two streams with attention give the attention-fused descriptor; two
    streams without attention a plain concatenation; one stream its hidden
    states.
    """
    v = arch.spec
    h_v = encode_stream(obs_v, LstmParams.take(P, "enc_v")) if v.uses_visual else None
    h_tp = encode_stream(obs_tp, LstmParams.take(P, "enc_tp")) if v.uses_temporal else None
    if v.streams == "both":
        if v.attention:
            att = AttentionParams.take(P, "att")
            e_v, e_tp = attention_energies(h_v, h_tp, att, arch.literal_attention)
            a_v, a_tp = attention_weights(e_v, e_tp, att)
            cd = fuse_context(h_v, h_tp, a_v, a_tp, arch.literal_attention)
            return Context(cd.context, cd.alpha_v, cd.alpha_tp)
        return Context(tn.concat([h_v, h_tp], axis=-1))
    return Context(h_v if h_v is not None else h_tp)


def generate(P: dict, arch: ModelArch, context, horizon: int):
    """``(pred_v, pred_tp)``; a stream the variant lacks gives ``None``."""
    v = arch.spec
    pv = generator_forward(context, GeneratorParams.take(P, "gen_v"), horizon) if "gen_v.out.w" in P else None
    pt = generator_forward(context, GeneratorParams.take(P, "gen_tp"), horizon) if "gen_tp.out.w" in P else None
    if v.generators == "none":
        return None, None
    return pv, pt


def discriminate(P: dict, prefix: str, context, candidate):
    return discriminator_steps(context, candidate, DiscriminatorParams.take(P, prefix))


def classifier_input(P: dict, arch: ModelArch, context, horizon: int):
    """What the classifier reads: the context (joint) or the generated embeddings (two-stage)."""
    if arch.spec.joint:
        return context
    pv, pt = generate(P, arch, context, horizon)
    parts = [x for x in (pv, pt) if x is not None]
    return parts[0] if len(parts) == 1 else tn.concat(parts, axis=-1)


def forward_logits(bundle: ModelBundle, obs_v: np.ndarray, obs_tp: np.ndarray, horizon: int | None = None):
    """Per-step class logits ``(N, T, K)`` for observed feature batches; no gradients kept."""
    g = tn.Graph()
    P = {k: g.constant(a) for k, a in bundle.params.items()}
    ctx = build_context(P, bundle.arch, obs_v, obs_tp)
    T = ctx.context.shape[-2]
    x = classifier_input(P, bundle.arch, ctx.context, T if horizon is None else horizon)
    return classifier_logits(x, ClassifierParams.take(P, "cls")).data


def predict(bundle: ModelBundle, obs_v, obs_tp, horizon: int | None = None) -> np.ndarray:
    return predict_from_logits(forward_logits(bundle, obs_v, obs_tp, horizon))


def context_final(bundle: ModelBundle, obs_v, obs_tp) -> np.ndarray:
    """Final-timestep context descriptor ``C_T`` for each sample, ``(N, context_dim)``."""
    g = tn.Graph()
    P = {k: g.constant(a) for k, a in bundle.params.items()}
    return build_context(P, bundle.arch, obs_v, obs_tp).context.data[:, -1, :].copy()
