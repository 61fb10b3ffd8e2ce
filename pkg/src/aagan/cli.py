"""Command-line entry point: gen-data, train, eval, ablate, export-embeddings.

Configuration is layered: built-in defaults, then ``--config FILE`` (JSON),
then explicit flags.  ``--print-config`` prints the resolved configuration
and exits.  Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import VARIANTS, ConfigError, TrainConfig
from .data import (SETTINGS, DatasetError, ProtocolError, SplitSpec, SyntheticConfig,
                   generate_synthetic_dataset, load_dataset, save_dataset)
from .evaluation import (EMBED_COLUMNS, evaluate, export_embeddings, report_json, run_ablation, to_csv,
                         untrained_bundle)
from .losses import LossWeights
from .training import Trainer, TrainingDivergedError

RUN_KEYS = {"data", "out_dir", "checkpoint", "synthetic"}


class UsageError(Exception):
    pass


def _parse_weights(s: str) -> LossWeights:
    try:
        parts = [float(x) for x in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weights {s!r}") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("--weights needs four comma-separated values: w_V,w_TP,w_C,w_R")
    return LossWeights(*parts)


def _parse_variants(s: str) -> list[str]:
    out = [v.strip() for v in s.split(",") if v.strip()]
    bad = [v for v in out if v not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variant(s) {bad}; choose from {', '.join(VARIANTS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; explicit flags override it")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out-dir", help="output directory (default: runs)")
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")

    trainflags = argparse.ArgumentParser(add_help=False)
    trainflags.add_argument("--data", help="dataset container written by gen-data")
    trainflags.add_argument("--epochs", type=int)
    trainflags.add_argument("--batch", type=int, dest="batch_size")
    trainflags.add_argument("--lr", type=float)
    trainflags.add_argument("--decay", type=float)
    trainflags.add_argument("--weights", type=_parse_weights, help="w_V,w_TP,w_C,w_R (default 25,20,43,15)")
    trainflags.add_argument("--hidden", type=int, dest="hidden_dim", help="LSTM width (default 300)")
    trainflags.add_argument("--setting", choices=sorted(SETTINGS), help="observed fraction: earliest=0.2, latest=0.5")
    trainflags.add_argument("--literal-attention", action="store_true", default=None,
                            help="use the visual hidden state in both attention branches")
    trainflags.add_argument("--generator-objective", choices=["non_saturating", "minimax"])
    trainflags.add_argument("--regularizer-mode", choices=["similarity", "distance"])
    trainflags.add_argument("--disc-updates-context", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="aagan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic feature dataset")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--samples-per-class", type=int, default=100, help="training records per class")
    g.add_argument("--test-per-class", type=int, default=50)
    g.add_argument("--length", type=int, default=50)
    g.add_argument("--noise", type=float, default=SyntheticConfig.noise)
    g.add_argument("--output", help="container path (default: <out-dir>/dataset.aagn)")

    t = sub.add_parser("train", parents=[common, trainflags], help="train a model")
    t.add_argument("--variant", choices=list(VARIANTS))
    t.add_argument("--resume", help="continue from this checkpoint")
    t.add_argument("--steps", type=int, help="stop after this many steps (default: full schedule)")

    e = sub.add_parser("eval", parents=[common], help="score a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--setting", choices=sorted(SETTINGS), default="earliest")
    e.add_argument("--split", default="test")

    a = sub.add_parser("ablate", parents=[common, trainflags], help="run ablation variants over seeds")
    a.add_argument("--variants", type=_parse_variants, required=True, help="comma-separated ids, e.g. a,c,j,o")
    a.add_argument("--seeds", type=int, default=5, help="number of seeds (seed, seed+1, ...)")

    x = sub.add_parser("export-embeddings", parents=[common], help="2-D PCA of context descriptors")
    x.add_argument("--after", required=True, help="trained checkpoint")
    x.add_argument("--before", help="reference checkpoint (default: the untrained initialisation)")
    x.add_argument("--data", required=True)
    x.add_argument("--count", type=int, default=30)
    x.add_argument("--setting", choices=sorted(SETTINGS), default="earliest")
    return p


def resolve_config(args) -> tuple[TrainConfig, dict]:
    """Defaults <- config file <- flags.  Returns the train config and run-level keys."""
    base = TrainConfig().to_dict()
    run = {"out_dir": "runs", "data": None}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(TrainConfig)} | RUN_KEYS
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown keys in {args.config}: {sorted(unknown)}")
        for k, v in doc.items():
            if k in RUN_KEYS:
                run[k] = v
            elif isinstance(v, dict) and isinstance(base.get(k), dict):
                base[k] = {**base[k], **v}
            else:
                base[k] = v
    for k in ("epochs", "batch_size", "lr", "decay", "hidden_dim", "seed", "variant",
              "generator_objective", "regularizer_mode"):
        val = getattr(args, k, None)
        if val is not None:
            base[k] = val
    for k in ("literal_attention", "disc_updates_context"):
        if getattr(args, k, None):
            base[k] = True
    if getattr(args, "weights", None) is not None:
        base["weights"] = {"w_v": args.weights.w_v, "w_tp": args.weights.w_tp,
                           "w_c": args.weights.w_c, "w_r": args.weights.w_r}
    if getattr(args, "setting", None) and args.command in ("train", "ablate"):
        base["split"] = {**base["split"], "observed_fraction": SETTINGS[args.setting].observed_fraction}
    if getattr(args, "out_dir", None):
        run["out_dir"] = args.out_dir
    if getattr(args, "data", None):
        run["data"] = args.data
    return TrainConfig.from_dict(base), run


def _out(run) -> Path:
    d = Path(run["out_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def cmd_gen_data(args, cfg: TrainConfig, run: dict) -> int:
    syn = SyntheticConfig(num_classes=args.classes, dim=args.dim, train_per_class=args.samples_per_class,
                          test_per_class=args.test_per_class, length=args.length, noise=args.noise,
                          seed=args.seed if args.seed is not None else 0)
    if args.print_config:
        print(json.dumps({"synthetic": syn.__dict__, "out_dir": run["out_dir"]}, indent=1, sort_keys=True))
        return 0
    man = generate_synthetic_dataset(syn)
    path = Path(args.output) if args.output else _out(run) / "dataset.aagn"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(man, path)
    n_train = len(man.subset("train"))
    print(f"wrote {path}: K={man.num_classes} D={man.dim} records={len(man.records)} "
          f"(train={n_train}, test={len(man.records) - n_train}) seed={syn.seed} "
          f"centroid_oracle={man.generation.get('centroid_oracle_accuracy')}")
    return 0


def _require_data(run) -> str:
    if not run.get("data"):
        raise UsageError("a dataset is required (--data or \"data\" in --config)")
    return run["data"]


def cmd_train(args, cfg: TrainConfig, run: dict) -> int:
    if args.print_config:
        print(json.dumps({**cfg.to_dict(), **run}, indent=1, sort_keys=True))
        return 0
    man = load_dataset(_require_data(run))
    out = _out(run)
    if args.resume:
        ck = load_checkpoint(args.resume)
        trainer = Trainer(man, ck.config, ck.bundle, ck.opt_d, ck.opt_g, ck.position)
        cfg = ck.config
    else:
        trainer = Trainer(man, cfg)
    trainer.run(args.steps)
    save_checkpoint(Checkpoint(trainer.bundle, trainer.opt_d, trainer.opt_g, cfg, trainer.position),
                    out / "checkpoint.aagk")
    _write(out / "metrics.csv", to_csv(trainer.metrics.steps))
    _write(out / "epochs.csv", to_csv(trainer.metrics.epochs))
    _write(out / "config.json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    final = trainer.metrics.epochs[-1] if trainer.metrics.epochs else {}
    print(f"trained variant {cfg.variant} for {trainer.position}/{trainer.total_steps} steps; "
          f"train_acc={final.get('train_accuracy')} test_acc={final.get('test_accuracy')}; "
          f"clamped={trainer.metrics.clamp_total}; wrote {out / 'checkpoint.aagk'}")
    return 0


def cmd_eval(args, cfg: TrainConfig, run: dict) -> int:
    ck = load_checkpoint(args.checkpoint)
    spec = SplitSpec(SETTINGS[args.setting].observed_fraction, ck.config.split.resample_len, ck.config.split.horizon)
    if args.print_config:
        print(json.dumps({"checkpoint": args.checkpoint, "data": args.data, "split": spec.__dict__,
                          "eval_split": args.split, "out_dir": run["out_dir"]}, indent=1, sort_keys=True))
        return 0
    man = load_dataset(args.data)
    rep = evaluate(ck.bundle, man, spec, args.split)
    out = _out(run)
    _write(out / "eval.json", report_json(rep))
    _write(out / "eval.csv", to_csv([rep.as_row()]))
    print(f"{rep.setting}: accuracy={rep.accuracy!r} ({rep.correct}/{rep.total})")
    return 0


def cmd_ablate(args, cfg: TrainConfig, run: dict) -> int:
    seeds = list(range(cfg.seed, cfg.seed + args.seeds))
    if args.print_config:
        print(json.dumps({**cfg.to_dict(), **run, "variants": args.variants, "seeds": seeds},
                         indent=1, sort_keys=True))
        return 0
    man = load_dataset(_require_data(run))
    results = run_ablation(man, cfg, args.variants, seeds,
                           progress=lambda v, s, r: print(f"  variant {v} seed {s}: {r.accuracy!r}", flush=True))
    out = _out(run)
    rows = [r.as_row() for r in results]
    _write(out / "ablation.csv", to_csv(rows))
    _write(out / "ablation.json", json.dumps(rows, indent=1))
    for r in rows:
        print(f"({r['variant']}) median={r['median_accuracy']!r}  {r['description']}")
    return 0


def cmd_export_embeddings(args, cfg: TrainConfig, run: dict) -> int:
    after = load_checkpoint(args.after)
    if args.print_config:
        print(json.dumps({"after": args.after, "before": args.before, "data": args.data, "count": args.count,
                          "setting": args.setting, "seed": args.seed or 0, "out_dir": run["out_dir"]},
                         indent=1, sort_keys=True))
        return 0
    man = load_dataset(args.data)
    before = load_checkpoint(args.before).bundle if args.before else untrained_bundle(after.config, man)
    spec = SplitSpec(SETTINGS[args.setting].observed_fraction, after.config.split.resample_len,
                     after.config.split.horizon)
    rows = export_embeddings(before, after.bundle, man, args.count, spec, seed=args.seed or 0)
    out = _out(run)
    _write(out / "embeddings.csv", to_csv(rows, EMBED_COLUMNS))
    print(f"wrote {len(rows)} rows to {out / 'embeddings.csv'}")
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "export-embeddings": cmd_export_embeddings}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        cfg, run = resolve_config(args)
        return COMMANDS[args.command](args, cfg, run)
    except (UsageError, ConfigError) as exc:
        print(f"aagan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ProtocolError, CheckpointError, TrainingDivergedError, OSError, ValueError) as exc:
        print(f"aagan {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
