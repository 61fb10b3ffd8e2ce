"""Earliest/Latest scoring, the ablation suite and context-embedding export."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import TrainConfig, get_variant
from .data import DatasetManifest, SplitSpec, split_batch
from .model import ModelBundle, context_final, init_bundle, predict, arch_from_config
from .pca import pca_2d
from .training import train


def setting_name(spec: SplitSpec) -> str:
    return {0.2: "Earliest", 0.5: "Latest"}.get(spec.observed_fraction, "custom")


@dataclass
class EvalReport:
    setting: str
    accuracy: float
    correct: int
    total: int
    per_class_accuracy: dict[int, float]

    def as_row(self) -> dict:
        return {"setting": self.setting, "accuracy": self.accuracy, "correct": self.correct,
                "total": self.total,
                **{f"class_{k}": v for k, v in sorted(self.per_class_accuracy.items())}}


def evaluate(bundle: ModelBundle, manifest: DatasetManifest, spec: SplitSpec, split: str = "test") -> EvalReport:
    """Resample, split, encode the observed rows and classify every record of ``split``."""
    records = manifest.subset(split)
    if not records:
        raise ValueError(f"{split} split is empty")
    batch = split_batch(records, spec)
    pred = predict(bundle, batch.observed_v, batch.observed_tp, batch.future_v.shape[1])
    hits = pred == batch.labels
    correct = int(np.count_nonzero(hits))
    per_class = {}
    for k in range(manifest.num_classes):
        mask = batch.labels == k
        if mask.any():
            per_class[k] = float(np.count_nonzero(hits[mask])) / int(mask.sum())
    return EvalReport(setting_name(spec), correct / len(batch), correct, len(batch), per_class)


@dataclass
class AblationResult:
    variant: str
    median_accuracy: float
    seed_accuracies: list[float]
    report: EvalReport  # report of the lower-median seed
    config: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"variant": self.variant, "median_accuracy": self.median_accuracy,
                "seeds": len(self.seed_accuracies),
                "seed_accuracies": ";".join(repr(a) for a in self.seed_accuracies),
                "description": get_variant(self.variant).description}


def run_ablation(manifest: DatasetManifest, base: TrainConfig, variants, seeds, progress=None) -> list[AblationResult]:
    """Train and evaluate each variant once per seed; report the median test accuracy."""
    variants = list(variants)
    for v in variants:
        get_variant(v)
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    results = []
    for v in variants:
        reports = []
        for s in seeds:
            cfg = base.replace(variant=v, seed=s)
            bundle, _ = train(manifest, cfg)
            reports.append(evaluate(bundle, manifest, cfg.split))
            if progress:
                progress(v, s, reports[-1])
        accs = [r.accuracy for r in reports]
        order = np.argsort(accs, kind="stable")
        results.append(AblationResult(v, float(statistics.median(accs)), accs,
                                      reports[order[(len(accs) - 1) // 2]],
                                      base.replace(variant=v).to_dict()))
    return results


EMBED_COLUMNS = ("id", "label", "x_before", "y_before", "x_after", "y_after")


def export_embeddings(before: ModelBundle, after: ModelBundle, manifest: DatasetManifest, count: int,
                      spec: SplitSpec = SplitSpec(), split: str = "test", seed: int = 0) -> list[dict]:
    """2-D PCA projections of the final-step context ``C_T`` under two bundles.

    ``count`` records are drawn (seeded) from ``split``; PCA is fitted
    independently for each bundle.
    """
    if count < 3:
        raise ValueError("need at least 3 samples for a 2-D projection")
    records = manifest.subset(split) or manifest.records
    if count > len(records):
        raise ValueError(f"asked for {count} samples, only {len(records)} available")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(records), size=count, replace=False))
    chosen = [records[i] for i in idx]
    batch = split_batch(chosen, spec)
    pb = pca_2d(context_final(before, batch.observed_v, batch.observed_tp))
    pa = pca_2d(context_final(after, batch.observed_v, batch.observed_tp))
    return [{"id": r.id, "label": int(r.label), "x_before": float(pb[i, 0]), "y_before": float(pb[i, 1]),
             "x_after": float(pa[i, 0]), "y_after": float(pa[i, 1])} for i, r in enumerate(chosen)]


def mean_centroid_distance(rows: list[dict], which: str) -> float:
    """Mean pairwise distance between class centroids of exported 2-D points."""
    labels = sorted({r["label"] for r in rows})
    cents = []
    for k in labels:
        pts = np.array([[r[f"x_{which}"], r[f"y_{which}"]] for r in rows if r["label"] == k])
        cents.append(pts.mean(axis=0))
    cents = np.array(cents)
    d = [np.linalg.norm(cents[i] - cents[j]) for i in range(len(cents)) for j in range(i + 1, len(cents))]
    return float(np.mean(d)) if d else 0.0


def untrained_bundle(config: TrainConfig, manifest: DatasetManifest) -> ModelBundle:
    return init_bundle(arch_from_config(config, manifest.num_classes, manifest.dim), config.seed)


# ---------------------------------------------------------------- serialisation


def to_csv(rows: list[dict], columns=None) -> str:
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def report_json(report: EvalReport) -> str:
    d = asdict(report)
    d["per_class_accuracy"] = {str(k): v for k, v in report.per_class_accuracy.items()}
    return json.dumps(d, indent=1, sort_keys=True)
