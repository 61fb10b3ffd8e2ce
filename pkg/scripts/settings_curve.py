"""Test accuracy of one variant as the observed fraction grows (Earliest=0.2 ... Latest=0.5 and beyond)."""

import argparse

from aagan.config import TrainConfig
from aagan.data import SplitSpec, SyntheticConfig, generate_synthetic_dataset, observed_length
from aagan.evaluation import evaluate
from aagan.training import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variant", default="full")
    ap.add_argument("--fractions", default="0.1,0.2,0.3,0.4,0.5")
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--noise", type=float, default=1.5, help="observation noise; higher makes early guesses harder")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    task = generate_synthetic_dataset(SyntheticConfig(noise=args.noise))
    print("fraction,observed_rows,test_accuracy")
    for f in (float(x) for x in args.fractions.split(",")):
        spec = SplitSpec(f, 50)
        cfg = TrainConfig(hidden_dim=args.hidden, epochs=args.epochs, split=spec, seed=args.seed,
                          variant=args.variant, eval_every_epoch=False)
        bundle, _ = train(task, cfg)
        rep = evaluate(bundle, task, spec)
        print(f"{f},{observed_length(f, 50)},{rep.accuracy!r}", flush=True)


if __name__ == "__main__":
    main()
