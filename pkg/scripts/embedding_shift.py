"""How far apart the class centroids of the final context descriptor move during training.

Trains the full model for each seed, projects C_T of test records with 2-D
PCA before and after training and prints the mean inter-class centroid
distance of both projections.  The last seed's rows go to ``--out``.
"""

import argparse
import statistics

from aagan.config import TrainConfig
from aagan.data import EARLIEST, SyntheticConfig, generate_synthetic_dataset
from aagan.evaluation import EMBED_COLUMNS, export_embeddings, mean_centroid_distance, to_csv, untrained_bundle
from aagan.training import train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--out", default="embeddings.csv")
    args = ap.parse_args()

    task = generate_synthetic_dataset(SyntheticConfig())
    before, after = [], []
    for seed in range(args.seeds):
        cfg = TrainConfig(hidden_dim=args.hidden, epochs=args.epochs, split=EARLIEST, seed=seed,
                          eval_every_epoch=False)
        bundle, _ = train(task, cfg)
        rows = export_embeddings(untrained_bundle(cfg, task), bundle, task, args.count, cfg.split, seed=seed)
        before.append(mean_centroid_distance(rows, "before"))
        after.append(mean_centroid_distance(rows, "after"))
        print(f"seed {seed}: {before[-1]:.4f} -> {after[-1]:.4f}", flush=True)
    with open(args.out, "w") as fh:
        fh.write(to_csv(rows, EMBED_COLUMNS))
    print(f"median: {statistics.median(before):.4f} -> {statistics.median(after):.4f}")


if __name__ == "__main__":
    main()
