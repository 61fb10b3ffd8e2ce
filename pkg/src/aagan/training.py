"""Alternating discriminator / generator-classifier optimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .config import TrainConfig
from .data import DatasetManifest, SplitBatch, split_batch
from .heads import ClassifierParams, classifier_logits
from .losses import (LossBreakdown, LossWeights, adversarial_losses, classification_loss_from_logits,
                     count_clamped, generator_loss, mse_loss, regularization_loss, total_loss)
from .model import (DISCRIMINATOR_GROUPS, SHARED_GROUPS, ModelBundle, arch_from_config, build_context,
                    classifier_input, discriminate, generate, group_of, init_bundle, predict)
from .optim import AdamState, adam_step


class TrainingDivergedError(RuntimeError):
    pass


def new_optimizer(config: TrainConfig) -> AdamState:
    return AdamState(config.lr, config.decay, config.beta1, config.beta2, config.eps)


def _horizon(config: TrainConfig, batch: SplitBatch) -> int:
    return batch.future_v.shape[1]


def _check_finite(bd: LossBreakdown):
    for name in ("l_v", "l_tp", "l_c", "l_r", "d_v", "d_tp"):
        if not math.isfinite(getattr(bd, name)):
            raise TrainingDivergedError(f"non-finite loss component {name} = {getattr(bd, name)}")


def discriminator_phase(bundle: ModelBundle, batch: SplitBatch, opt: AdamState, config: TrainConfig,
                        bd: LossBreakdown):
    """Update D^V and D^TP on their adversarial losses; context and fakes are constants by default."""
    arch = bundle.arch
    trainable = set(bundle.names_in(DISCRIMINATOR_GROUPS))
    if config.disc_updates_context:
        trainable |= set(bundle.names_in(SHARED_GROUPS))
    g = tn.Graph()
    P = g.params_from(bundle.params, trainable)
    ctx = build_context(P, arch, batch.observed_v, batch.observed_tp)
    pv, pt = generate(P, arch, ctx.context, _horizon(config, batch))
    loss = None
    for prefix, fake, real, field_ in (("disc_v", pv, batch.future_v, "d_v"), ("disc_tp", pt, batch.future_tp, "d_tp")):
        if fake is None:
            continue
        d_real = discriminate(P, prefix, ctx.context, real)
        d_fake = discriminate(P, prefix, ctx.context, fake)
        bd.clamped += count_clamped(d_real.data) + count_clamped(d_fake.data)
        d_loss, _ = adversarial_losses(d_real, d_fake, config.generator_objective)
        d_loss = tn.mean(d_loss)
        setattr(bd, field_, d_loss.item())
        loss = d_loss if loss is None else loss + d_loss
    _check_finite(bd)
    grads = tn.backward(g, loss)
    grads = {k: grads[k] for k in bundle.params if k in trainable}
    params, opt = adam_step(bundle.params, grads, opt)
    return ModelBundle(arch, params), opt


def generator_phase(bundle: ModelBundle, batch: SplitBatch, opt: AdamState, config: TrainConfig,
                    bd: LossBreakdown, stage: str = "joint"):
    """Update encoders, attention, generators and classifier on the weighted total.

    ``stage`` is ``"joint"`` for joint variants; two-stage variants run
    ``"gan"`` (no classifier) and then ``"classifier"`` (classifier only, on
    frozen generated embeddings).
    """
    arch = bundle.arch
    v = arch.spec
    if stage == "classifier":
        trainable = {n for n in bundle.params if group_of(n) == "cls"}
    else:
        trainable = {n for n in bundle.params if group_of(n) not in DISCRIMINATOR_GROUPS}
        if stage == "gan":
            trainable -= {n for n in bundle.params if group_of(n) == "cls"}
    w = config.effective_weights()
    if stage == "gan":
        w = LossWeights(w.w_v, w.w_tp, 0.0, w.w_r)
    elif stage == "classifier":
        w = LossWeights(0.0, 0.0, w.w_c, 0.0)

    g = tn.Graph()
    P = g.params_from(bundle.params, trainable)
    ctx = build_context(P, arch, batch.observed_v, batch.observed_tp)
    C = ctx.context
    horizon = _horizon(config, batch)
    zero = 0.0
    l_v = l_tp = l_c = l_r = zero

    if stage != "classifier":
        pv, pt = generate(P, arch, C, horizon)
        if v.generators == "gan":
            if pv is not None:
                d_fake = discriminate(P, "disc_v", C, pv)
                bd.clamped += count_clamped(d_fake.data)
                l_v = tn.mean(generator_loss(d_fake, config.generator_objective))
            if pt is not None:
                d_fake = discriminate(P, "disc_tp", C, pt)
                bd.clamped += count_clamped(d_fake.data)
                l_tp = tn.mean(generator_loss(d_fake, config.generator_objective))
        elif v.generators == "mse":
            if pv is not None:
                l_v = tn.mean(mse_loss(pv, batch.future_v))
            if pt is not None:
                l_tp = tn.mean(mse_loss(pt, batch.future_tp))
        if v.regularizer and (pv is not None or pt is not None):
            l_r = tn.mean(regularization_loss(pv, batch.future_v if pv is not None else None,
                                              pt, batch.future_tp if pt is not None else None,
                                              config.regularizer_mode))
    if stage != "gan":
        x = classifier_input(P, arch, C, horizon)
        if stage == "classifier":
            x = g.constant(x.data)  # frozen upstream: no gradient reaches encoders or generators
        logits = classifier_logits(x, ClassifierParams.take(P, "cls"))
        l_c = tn.mean(classification_loss_from_logits(logits, batch.labels))

    def val(x):
        return x.item() if isinstance(x, tn.Tensor) else float(x)

    bd.l_v, bd.l_tp, bd.l_c, bd.l_r = val(l_v), val(l_tp), val(l_c), val(l_r)
    total = total_loss(l_v, l_tp, l_c, l_r, w)
    bd.total = val(total)
    _check_finite(bd)
    if not isinstance(total, tn.Tensor):
        return bundle, opt
    grads = tn.backward(g, total)
    grads = {k: grads[k] for k in bundle.params if k in trainable}
    params, opt = adam_step(bundle.params, grads, opt)
    return ModelBundle(arch, params), opt


def train_step(batch: SplitBatch, bundle: ModelBundle, opt_d: AdamState, opt_g: AdamState,
               config: TrainConfig, stage: str = "joint"):
    """One alternating step: discriminators first, then everything else.

    Returns ``(bundle, opt_d, opt_g, LossBreakdown)``.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    bd = LossBreakdown()
    if bundle.arch.spec.adversarial and stage != "classifier":
        bundle, opt_d = discriminator_phase(bundle, batch, opt_d, config, bd)
    bundle, opt_g = generator_phase(bundle, batch, opt_g, config, bd, stage)
    return bundle, opt_d, opt_g, bd


@dataclass
class TrainMetrics:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)

    @property
    def clamp_total(self) -> int:
        return int(sum(r["clamped"] for r in self.steps))

    def final_accuracy(self, split: str = "train") -> float | None:
        for row in reversed(self.epochs):
            if row.get(f"{split}_accuracy") is not None:
                return row[f"{split}_accuracy"]
        return None


def accuracy(bundle: ModelBundle, batch: SplitBatch) -> float:
    pred = predict(bundle, batch.observed_v, batch.observed_tp, batch.future_v.shape[1])
    return float(np.count_nonzero(pred == batch.labels)) / len(batch)


class Trainer:
    """Owns the bundle and optimiser states; ``position`` counts executed steps.

    Data order depends only on ``(seed, stage, epoch)``, so a trainer rebuilt
    from a checkpoint at the same position continues the identical run.
    """

    def __init__(self, manifest: DatasetManifest, config: TrainConfig, bundle: ModelBundle | None = None,
                 opt_d: AdamState | None = None, opt_g: AdamState | None = None, position: int = 0):
        self.config = config
        train_records = manifest.subset("train")
        if not train_records:
            raise ValueError("train split is empty")
        self.train_batch = split_batch(train_records, config.split)
        test_records = manifest.subset("test")
        self.test_batch = split_batch(test_records, config.split) if test_records else None
        arch = arch_from_config(config, manifest.num_classes, manifest.dim)
        self.bundle = bundle if bundle is not None else init_bundle(arch, config.seed)
        if self.bundle.arch != arch:
            raise ValueError(f"bundle architecture {self.bundle.arch} does not match config {arch}")
        self.opt_d = opt_d if opt_d is not None else new_optimizer(config)
        self.opt_g = opt_g if opt_g is not None else new_optimizer(config)
        self.stages = ["joint"] if arch.spec.joint else ["gan", "classifier"]
        self.steps_per_epoch = math.ceil(len(self.train_batch) / config.batch_size)
        self.total_steps = len(self.stages) * config.epochs * self.steps_per_epoch
        self.position = position
        self.metrics = TrainMetrics()

    def locate(self, position: int):
        per_stage = self.config.epochs * self.steps_per_epoch
        stage_idx, rem = divmod(position, per_stage)
        epoch, b = divmod(rem, self.steps_per_epoch)
        return stage_idx, epoch, b

    def batch_at(self, position: int) -> SplitBatch:
        stage_idx, epoch, b = self.locate(position)
        rng = np.random.default_rng([self.config.seed, stage_idx, epoch])
        perm = rng.permutation(len(self.train_batch))
        bs = self.config.batch_size
        return self.train_batch.take(perm[b * bs:(b + 1) * bs])

    def record_epoch(self, stage: str, epoch: int):
        row = {"stage": stage, "epoch": epoch, "train_accuracy": accuracy(self.bundle, self.train_batch),
               "test_accuracy": accuracy(self.bundle, self.test_batch) if self.test_batch is not None else None}
        self.metrics.epochs.append(row)

    def step(self) -> LossBreakdown:
        if self.position >= self.total_steps:
            raise StopIteration("training schedule exhausted")
        stage_idx, epoch, b = self.locate(self.position)
        stage = self.stages[stage_idx]
        if self.position == 0 and self.config.eval_every_epoch:
            self.record_epoch(stage, 0)
        batch = self.batch_at(self.position)
        self.bundle, self.opt_d, self.opt_g, bd = train_step(
            batch, self.bundle, self.opt_d, self.opt_g, self.config, stage)
        self.metrics.steps.append({"step": self.position, "stage": stage, "epoch": epoch + 1, "batch": b,
                                   **bd.as_row()})
        self.position += 1
        last_of_epoch = b == self.steps_per_epoch - 1
        if last_of_epoch and (self.config.eval_every_epoch or self.position == self.total_steps):
            self.record_epoch(stage, epoch + 1)
        return bd

    def run(self, steps: int | None = None) -> TrainMetrics:
        end = self.total_steps if steps is None else min(self.total_steps, self.position + steps)
        while self.position < end:
            self.step()
        return self.metrics


def train(manifest: DatasetManifest, config: TrainConfig):
    """Full schedule; returns ``(bundle, metrics)``."""
    trainer = Trainer(manifest, config)
    trainer.run()
    return trainer.bundle, trainer.metrics
